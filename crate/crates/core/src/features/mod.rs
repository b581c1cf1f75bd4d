//! RGBD-HOG features: HOG over the color image and over depth rendered as
//! a gray image, plus the multi-scale pyramid used for sliding windows.

mod hog;
mod pyramid;

pub use hog::{compute_hog, HogGrid, HogParams};
pub use pyramid::{build_pyramid, FeaturePyramid, PyramidLevel};

use image::GrayImage;

use crate::error::{Error, Result};
use crate::types::{BoundingBox, DepthMap, Frame, TrackMode, MAX_DEPTH_MM};

/// Linear map of `[0, 10000]` mm onto `[0, 255]`, rounding half up.
/// Invalid (0) pixels stay 0.
pub fn depth_to_gray(depth: &DepthMap) -> GrayImage {
    let (w, h) = depth.dimensions();
    let mut out = GrayImage::new(w, h);
    for (dst, src) in out.iter_mut().zip(depth.iter()) {
        *dst = depth_gray_value(*src);
    }
    out
}

#[inline]
fn depth_gray_value(d: u16) -> u8 {
    let d = d.min(MAX_DEPTH_MM) as u32;
    let max = MAX_DEPTH_MM as u32;
    ((d * 255 * 2 + max) / (2 * max)) as u8
}

/// Single-channel real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Plane {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at real-valued pixel coordinates (pixel centers at
    /// integers), replicating the border.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }
}

/// Frame content prepared for feature extraction: color channels, depth
/// rendered to gray, and the depth validity mask.
#[derive(Debug, Clone)]
pub(crate) struct FeatureImage {
    pub rgb: [Plane; 3],
    /// Present only when the depth channel is enabled.
    pub depth: Option<(Plane, Vec<bool>)>,
}

impl FeatureImage {
    pub fn from_frame(frame: &Frame, with_depth: bool) -> Self {
        let (w, h) = (frame.width() as usize, frame.height() as usize);
        let mut rgb = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
        for (i, px) in frame.rgb.pixels().enumerate() {
            for c in 0..3 {
                rgb[c].data[i] = px.0[c] as f64;
            }
        }
        let depth = with_depth.then(|| {
            let gray = depth_to_gray(&frame.depth);
            let valid = frame.depth.iter().map(|&d| d > 0).collect();
            (Plane::from_gray(&gray), valid)
        });
        FeatureImage { rgb, depth }
    }

    pub fn width(&self) -> usize {
        self.rgb[0].width
    }

    pub fn height(&self) -> usize {
        self.rgb[0].height
    }

    /// Resamples onto an `out_w x out_h` grid where output pixel `(u, v)`
    /// reads source position `(x0 + (u + 0.5) * sx - 0.5, y0 + (v + 0.5) * sy - 0.5)`.
    pub fn resample(&self, x0: f64, y0: f64, sx: f64, sy: f64, out_w: usize, out_h: usize) -> Self {
        let xs: Vec<f64> = (0..out_w).map(|u| x0 + (u as f64 + 0.5) * sx - 0.5).collect();
        let ys: Vec<f64> = (0..out_h).map(|v| y0 + (v as f64 + 0.5) * sy - 0.5).collect();
        let resample_plane = |p: &Plane| {
            let mut out = Plane::new(out_w, out_h);
            for (v, &y) in ys.iter().enumerate() {
                for (u, &x) in xs.iter().enumerate() {
                    out.data[v * out_w + u] = p.sample(x, y);
                }
            }
            out
        };
        let rgb = [
            resample_plane(&self.rgb[0]),
            resample_plane(&self.rgb[1]),
            resample_plane(&self.rgb[2]),
        ];
        let depth = self.depth.as_ref().map(|(gray, valid)| {
            let mut out = Plane::new(out_w, out_h);
            let mut out_valid = vec![false; out_w * out_h];
            for (v, &y) in ys.iter().enumerate() {
                for (u, &x) in xs.iter().enumerate() {
                    if let Some(val) = sample_valid(gray, valid, x, y) {
                        out.data[v * out_w + u] = val;
                        out_valid[v * out_w + u] = true;
                    }
                }
            }
            (out, out_valid)
        });
        FeatureImage { rgb, depth }
    }
}

/// Bilinear sample over valid pixels only, renormalizing the weights.
/// Returns `None` when less than half of the weight falls on valid pixels.
fn sample_valid(p: &Plane, valid: &[bool], x: f64, y: f64) -> Option<f64> {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if wgt == 0.0 {
            continue;
        }
        let cx = (xi + dx).clamp(0, p.width as isize - 1) as usize;
        let cy = (yi + dy).clamp(0, p.height as isize - 1) as usize;
        let idx = cy * p.width + cx;
        if valid[idx] {
            acc += wgt * p.data[idx];
            wsum += wgt;
        }
    }
    (wsum >= 0.5).then(|| acc / wsum)
}

/// Fixed window geometry, in HOG cells, that the target is resampled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub cells_x: usize,
    pub cells_y: usize,
    pub cell_size: usize,
}

impl Template {
    /// Fits a box to a cell grid between `min_cells` and `max_cells` per side,
    /// keeping its aspect ratio as closely as rounding allows.
    pub fn from_box(b: &BoundingBox, cell_size: usize, min_cells: usize, max_cells: usize) -> Self {
        let cx = b.w / cell_size as f64;
        let cy = b.h / cell_size as f64;
        let mut f = 1.0;
        if cx.max(cy) * f > max_cells as f64 {
            f = max_cells as f64 / cx.max(cy);
        }
        if cx.min(cy) * f < min_cells as f64 {
            f = min_cells as f64 / cx.min(cy);
        }
        let fit = |c: f64| ((c * f).round() as usize).clamp(min_cells, max_cells);
        Template {
            cells_x: fit(cx),
            cells_y: fit(cy),
            cell_size,
        }
    }

    pub fn pixel_width(&self) -> usize {
        self.cells_x * self.cell_size
    }

    pub fn pixel_height(&self) -> usize {
        self.cells_y * self.cell_size
    }

    /// Length of the flattened RGBD feature vector.
    pub fn feature_len(&self, bins: usize) -> usize {
        self.cells_x * self.cells_y * bins * 2
    }
}

/// Color and depth HOG over the same cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdHogGrid {
    pub rgb: HogGrid,
    pub depth: HogGrid,
}

impl RgbdHogGrid {
    pub fn cells_x(&self) -> usize {
        self.rgb.cells_x
    }

    pub fn cells_y(&self) -> usize {
        self.rgb.cells_y
    }

    pub fn bins(&self) -> usize {
        self.rgb.bins
    }

    /// Appends the window's feature vector to `out`, per cell: color bins
    /// then depth bins.
    pub fn window_into(&self, cy0: usize, cx0: usize, cells_y: usize, cells_x: usize, out: &mut Vec<f64>) {
        let bins = self.bins();
        for cy in cy0..cy0 + cells_y {
            for cx in cx0..cx0 + cells_x {
                out.extend_from_slice(self.rgb.cell(cy, cx));
                out.extend_from_slice(self.depth.cell(cy, cx));
            }
        }
        debug_assert_eq!(out.len() % (2 * bins), 0);
    }

    /// The whole grid as one feature vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.cells_x() * self.cells_y() * self.bins() * 2);
        self.window_into(0, 0, self.cells_y(), self.cells_x(), &mut v);
        v
    }
}

/// Computes color and depth HOG of a whole feature image. Without depth the
/// depth grid is all zeros.
pub(crate) fn rgbd_hog(img: &FeatureImage, params: &HogParams) -> RgbdHogGrid {
    let (w, h) = (img.width(), img.height());
    let rgb_grad = hog::color_gradients(&img.rgb);
    let rgb = hog::hog_from_gradients(&rgb_grad, w, h, params);
    let depth = match &img.depth {
        Some((gray, valid)) => {
            let g = hog::depth_gradients(gray, valid);
            hog::hog_from_gradients(&g, w, h, params)
        }
        None => HogGrid::zeros(rgb.cells_y, rgb.cells_x, params.bins),
    };
    RgbdHogGrid { rgb, depth }
}

/// RGBD-HOG of `region` resampled to the template geometry.
///
/// The region is resampled together with one cell (plus one pixel) of
/// surrounding context so that gradients and block normalization at the
/// window border see real image content. The result equals the matching
/// window of a pyramid level whenever that window is not at the level edge.
pub fn extract_rgbd_hog(
    frame: &Frame,
    region: &BoundingBox,
    template: &Template,
    mode: TrackMode,
    params: &HogParams,
) -> Result<RgbdHogGrid> {
    let img = FeatureImage::from_frame(frame, mode.uses_depth_features());
    extract_from_image(&img, region, template, params)
}

pub(crate) fn extract_from_image(
    img: &FeatureImage,
    region: &BoundingBox,
    template: &Template,
    params: &HogParams,
) -> Result<RgbdHogGrid> {
    if region
        .clip(img.width() as u32, img.height() as u32)
        .is_none()
    {
        return Err(Error::DegenerateRegion);
    }
    let cell = template.cell_size;
    let margin = cell + 1;
    let tw = template.pixel_width();
    let th = template.pixel_height();
    let sx = region.w / tw as f64;
    let sy = region.h / th as f64;
    let pw = tw + 2 * margin;
    let ph = th + 2 * margin;
    let x0 = region.x - margin as f64 * sx;
    let y0 = region.y - margin as f64 * sy;
    let patch = img.resample(x0, y0, sx, sy, pw, ph);

    let inner_w = pw - 2;
    let inner_h = ph - 2;
    let rgb_grad = hog::color_gradients(&patch.rgb).crop_ring(pw, ph);
    let rgb = hog::hog_from_gradients(&rgb_grad, inner_w, inner_h, params);
    let depth = match &patch.depth {
        Some((gray, valid)) => {
            let g = hog::depth_gradients(gray, valid).crop_ring(pw, ph);
            hog::hog_from_gradients(&g, inner_w, inner_h, params)
        }
        None => HogGrid::zeros(rgb.cells_y, rgb.cells_x, params.bins),
    };
    Ok(RgbdHogGrid {
        rgb: rgb.sub_grid(1, 1, template.cells_y, template.cells_x),
        depth: depth.sub_grid(1, 1, template.cells_y, template.cells_x),
    })
}

/// Converts the color image to gray (ITU-R 601 luma).
pub fn rgb_to_gray_plane(frame: &Frame) -> Plane {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut p = Plane::new(w, h);
    for (dst, px) in p.data.iter_mut().zip(frame.rgb.pixels()) {
        let [r, g, b] = px.0;
        *dst = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    }
    p
}
