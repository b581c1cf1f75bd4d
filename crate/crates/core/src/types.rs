//! Geometry and frame types shared by every stage of the tracker.

use std::fmt;
use std::str::FromStr;

use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};

/// Farthest depth the tracker represents. Larger readings are clamped.
pub const MAX_DEPTH_MM: u16 = 10_000;

/// 16-bit depth in millimeters; 0 marks a pixel without a valid reading.
pub type DepthMap = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Axis-aligned rectangle in pixel coordinates.
///
/// The box covers the half-open ranges `[x, x + w)` and `[y, y + h)`.
/// Coordinates are real-valued so flow can move boxes by sub-pixel amounts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// A box, or `None` when the target is absent (fully occluded or no output).
pub type MaybeBox = Option<BoundingBox>;

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite())
        {
            return Err(Error::InvalidBox { x, y, w, h });
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersect_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn union_area(&self, other: &BoundingBox) -> f64 {
        self.area() + other.area() - self.intersect_area(other)
    }

    /// Intersection over union.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let union = self.union_area(other);
        if union <= 0.0 {
            0.0
        } else {
            self.intersect_area(other) / union
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Scales width and height by `factor` keeping the center fixed.
    pub fn scale_about_center(&self, factor: f64) -> BoundingBox {
        let (cx, cy) = self.center();
        let w = self.w * factor;
        let h = self.h * factor;
        BoundingBox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    /// Same size, new center.
    pub fn with_center(&self, cx: f64, cy: f64) -> BoundingBox {
        BoundingBox {
            x: cx - self.w / 2.0,
            y: cy - self.h / 2.0,
            ..*self
        }
    }

    /// Intersection with `[0, width) x [0, height)`, or `None` if nothing remains.
    pub fn clip(&self, width: u32, height: u32) -> MaybeBox {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        if x1 - x0 <= 0.0 || y1 - y0 <= 0.0 {
            None
        } else {
            Some(BoundingBox {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            })
        }
    }

    /// Moves the box (without resizing, unless it is larger than the frame)
    /// so that it lies inside the frame.
    pub fn shift_inside(&self, width: u32, height: u32) -> BoundingBox {
        let w = self.w.min(width as f64);
        let h = self.h.min(height as f64);
        let x = self.x.clamp(0.0, width as f64 - w);
        let y = self.y.clamp(0.0, height as f64 - h);
        BoundingBox { x, y, w, h }
    }

    pub fn is_inside(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width as f64 && self.bottom() <= height as f64
    }

    /// Integer pixel ranges `(x0, y0, x1, y1)` (half-open) covered by the box
    /// after clipping. Edges are rounded to the nearest pixel boundary, so an
    /// integer-aligned box covers exactly `w * h` pixels.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let x0 = self.x.round().max(0.0);
        let y0 = self.y.round().max(0.0);
        let x1 = self.right().round().min(width as f64);
        let y1 = self.bottom().round().min(height as f64);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

/// One RGB image with its aligned depth map.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub rgb: RgbImage,
    pub depth: DepthMap,
}

impl Frame {
    /// Builds a frame, clamping depth readings above [`MAX_DEPTH_MM`].
    pub fn new(index: u64, rgb: RgbImage, mut depth: DepthMap) -> Result<Self> {
        if rgb.dimensions() != depth.dimensions() {
            return Err(Error::FrameSizeMismatch {
                rgb_w: rgb.width(),
                rgb_h: rgb.height(),
                depth_w: depth.width(),
                depth_h: depth.height(),
            });
        }
        for d in depth.iter_mut() {
            if *d > MAX_DEPTH_MM {
                *d = MAX_DEPTH_MM;
            }
        }
        Ok(Frame { index, rgb, depth })
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.rgb.dimensions()
    }

    #[inline]
    pub fn depth_at(&self, x: u32, y: u32) -> u16 {
        self.depth.as_raw()[(y * self.width() + x) as usize]
    }
}

/// Which parts of the tracker are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackMode {
    Rgb,
    Rgbd,
    RgbOcc,
    RgbdOcc,
}

impl TrackMode {
    pub const ALL: [TrackMode; 4] = [
        TrackMode::Rgb,
        TrackMode::Rgbd,
        TrackMode::RgbOcc,
        TrackMode::RgbdOcc,
    ];

    /// Depth HOG channel, depth gating and re-centering.
    pub fn uses_depth_features(self) -> bool {
        matches!(self, TrackMode::Rgbd | TrackMode::RgbdOcc)
    }

    pub fn handles_occlusion(self) -> bool {
        matches!(self, TrackMode::RgbOcc | TrackMode::RgbdOcc)
    }

    /// Whether the tracker keeps a target depth model at all. Occlusion
    /// detection needs one even when depth features are off.
    pub fn uses_depth_model(self) -> bool {
        self != TrackMode::Rgb
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrackMode::Rgb => "rgb",
            TrackMode::Rgbd => "rgbd",
            TrackMode::RgbOcc => "rgbocc",
            TrackMode::RgbdOcc => "rgbdocc",
        }
    }
}

impl fmt::Display for TrackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(TrackMode::Rgb),
            "rgbd" => Ok(TrackMode::Rgbd),
            "rgbocc" => Ok(TrackMode::RgbOcc),
            "rgbdocc" => Ok(TrackMode::RgbdOcc),
            other => Err(Error::InvalidParameter(format!("unknown track mode `{other}`"))),
        }
    }
}
