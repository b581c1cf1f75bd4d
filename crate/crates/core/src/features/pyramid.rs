use super::{extract_from_image, rgbd_hog, FeatureImage, HogParams, RgbdHogGrid, Template};
use crate::error::Result;
use crate::types::{BoundingBox, Frame, TrackMode};

/// One scale of the pyramid. `scale_x`/`scale_y` are the exact ratios of
/// level size to frame size after rounding the level dimensions.
#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub scale: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub width: usize,
    pub height: usize,
    pub grid: RgbdHogGrid,
}

impl PyramidLevel {
    /// Frame-coordinate box of the window whose top-left cell is `(cy, cx)`.
    pub fn window_box(&self, cy: usize, cx: usize, cells_y: usize, cells_x: usize, cell_size: usize) -> BoundingBox {
        let cs = cell_size as f64;
        BoundingBox {
            x: cx as f64 * cs / self.scale_x,
            y: cy as f64 * cs / self.scale_y,
            w: cells_x as f64 * cs / self.scale_x,
            h: cells_y as f64 * cs / self.scale_y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<PyramidLevel>,
    pub scale_step: f64,
    pub cell_size: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub(crate) base: FeatureImage,
}

impl FeaturePyramid {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Same as [`super::extract_rgbd_hog`] on the frame the pyramid was
    /// built from, reusing the prepared image.
    pub fn extract(&self, region: &BoundingBox, template: &Template, params: &HogParams) -> Result<RgbdHogGrid> {
        extract_from_image(&self.base, region, template, params)
    }
}

/// HOG pyramid from scale 1 downward by `scale_step` per level, stopping
/// before the scaled frame gets smaller than `min_size` (width, height).
/// Returns an empty pyramid when the frame itself is smaller.
pub fn build_pyramid(
    frame: &Frame,
    scale_step: f64,
    min_size: (usize, usize),
    mode: TrackMode,
    params: &HogParams,
) -> FeaturePyramid {
    assert!(scale_step > 1.0, "pyramid scale step must exceed 1");
    let base = FeatureImage::from_frame(frame, mode.uses_depth_features());
    build_from_image(base, scale_step, min_size, params)
}

pub(crate) fn level_count(width: usize, height: usize, scale_step: f64, min_size: (usize, usize)) -> usize {
    const EPS: f64 = 1e-9;
    let mut n = 0;
    loop {
        let s = scale_step.powi(-(n as i32));
        if width as f64 * s + EPS < min_size.0 as f64 || height as f64 * s + EPS < min_size.1 as f64 {
            return n;
        }
        n += 1;
    }
}

pub(crate) fn build_from_image(
    base: FeatureImage,
    scale_step: f64,
    min_size: (usize, usize),
    params: &HogParams,
) -> FeaturePyramid {
    let (w, h) = (base.width(), base.height());
    let count = level_count(w, h, scale_step, min_size);
    let mut levels = Vec::with_capacity(count);
    for k in 0..count {
        let scale = scale_step.powi(-(k as i32));
        let lw = ((w as f64 * scale).round() as usize).max(min_size.0);
        let lh = ((h as f64 * scale).round() as usize).max(min_size.1);
        let grid = if k == 0 {
            rgbd_hog(&base, params)
        } else {
            let img = base.resample(0.0, 0.0, w as f64 / lw as f64, h as f64 / lh as f64, lw, lh);
            rgbd_hog(&img, params)
        };
        levels.push(PyramidLevel {
            scale,
            scale_x: lw as f64 / w as f64,
            scale_y: lh as f64 / h as f64,
            width: lw,
            height: lh,
            grid,
        });
    }
    FeaturePyramid {
        levels,
        scale_step,
        cell_size: params.cell_size,
        frame_width: w,
        frame_height: h,
        base,
    }
}
