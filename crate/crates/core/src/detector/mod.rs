//! Sliding-window target detector: a linear SVM over RGBD-HOG windows,
//! retrained online with hard negative mining.

mod svm;

pub use svm::{objective, train, LinearSvm, SampleCache, SvmParams};

use rand::Rng;

use crate::error::Result;
use crate::features::{FeaturePyramid, HogParams, Template};
use crate::types::BoundingBox;

/// Linear SVM bound to a template geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub svm: LinearSvm,
    pub template: Template,
    pub c: f64,
}

impl SvmModel {
    pub fn zeros(template: Template, bins: usize, c: f64) -> Self {
        SvmModel {
            svm: LinearSvm::zeros(template.feature_len(bins)),
            template,
            c,
        }
    }

    pub fn score(&self, feature: &[f64]) -> f64 {
        self.svm.decision(feature)
    }
}

/// A scored window in frame coordinates. `score` is the raw SVM margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// A window position inside the pyramid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub level: usize,
    pub cy: usize,
    pub cx: usize,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Window {
    pub fn detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            score: self.score,
        }
    }
}

/// Scores every window position at every level, best first. Ties keep
/// level / row / column order.
pub fn score_all(pyramid: &FeaturePyramid, model: &SvmModel) -> Vec<Window> {
    let t = &model.template;
    let w = &model.svm.weights;
    let mut out = Vec::new();
    for (li, level) in pyramid.levels.iter().enumerate() {
        let grid = &level.grid;
        let bins = grid.bins();
        if grid.cells_y() < t.cells_y || grid.cells_x() < t.cells_x {
            continue;
        }
        for cy in 0..=grid.cells_y() - t.cells_y {
            for cx in 0..=grid.cells_x() - t.cells_x {
                let mut s = model.svm.bias;
                let mut k = 0;
                for ty in 0..t.cells_y {
                    for tx in 0..t.cells_x {
                        s += svm::dot(&w[k..k + bins], grid.rgb.cell(cy + ty, cx + tx));
                        k += bins;
                        s += svm::dot(&w[k..k + bins], grid.depth.cell(cy + ty, cx + tx));
                        k += bins;
                    }
                }
                let bbox = level
                    .window_box(cy, cx, t.cells_y, t.cells_x, t.cell_size)
                    .clip(pyramid.frame_width as u32, pyramid.frame_height as u32)
                    .expect("pyramid windows lie inside the frame");
                out.push(Window {
                    level: li,
                    cy,
                    cx,
                    bbox,
                    score: s,
                });
            }
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Greedy non-maximum suppression over score-sorted detections: a box is
/// dropped if its overlap ratio with an already kept box exceeds `max_overlap`.
pub fn nms(sorted: impl IntoIterator<Item = Detection>, max_overlap: f64, limit: usize) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept.len() >= limit {
            break;
        }
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= max_overlap) {
            kept.push(d);
        }
    }
    kept
}

/// The `top_k` best windows after non-maximum suppression at overlap 0.5.
pub fn score_windows(pyramid: &FeaturePyramid, model: &SvmModel, top_k: usize) -> Vec<Detection> {
    nms(score_all(pyramid, model).iter().map(Window::detection), 0.5, top_k)
}

/// Feature vector of a pyramid window.
pub fn window_feature(pyramid: &FeaturePyramid, window: &Window, template: &Template) -> Vec<f64> {
    let mut v = Vec::new();
    pyramid.levels[window.level]
        .grid
        .window_into(window.cy, window.cx, template.cells_y, template.cells_x, &mut v);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    /// Windows scoring above this margin are hard-negative candidates.
    pub hard_negative_margin: f64,
    /// ... provided they overlap the accepted box by less than this.
    pub max_negative_overlap: f64,
    /// At most this many hard negatives are mined per frame, best first.
    pub max_negatives_per_frame: usize,
    /// Concentric boxes this factor larger and smaller than the accepted box
    /// are added as negatives, pinning the scale of the target; 0 disables.
    pub scale_negative_factor: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams {
            hard_negative_margin: -1.0,
            max_negative_overlap: 0.3,
            max_negatives_per_frame: 20,
            scale_negative_factor: 1.2,
        }
    }
}

/// Online update: adds the accepted box as a positive, mines hard negatives
/// from the frame's windows and retrains. Returns the number of negatives
/// added.
pub fn update(
    model: &mut SvmModel,
    cache: &mut SampleCache,
    accepted: &BoundingBox,
    pyramid: &FeaturePyramid,
    hog: &HogParams,
    svm_params: &SvmParams,
    params: &UpdateParams,
) -> Result<usize> {
    let positive = pyramid.extract(accepted, &model.template, hog)?.to_vec();
    let mined: Vec<Vec<f64>> = score_all(pyramid, model)
        .iter()
        .filter(|w| w.score > params.hard_negative_margin)
        .filter(|w| w.bbox.iou(accepted) < params.max_negative_overlap)
        .take(params.max_negatives_per_frame)
        .map(|w| window_feature(pyramid, w, &model.template))
        .collect();
    let mut added = mined.len();
    cache.push_positive(positive);
    for f in mined {
        cache.push_negative(f);
    }
    if params.scale_negative_factor > 1.0 {
        let (cx, cy) = accepted.center();
        let (w, h) = (pyramid.base.width() as u32, pyramid.base.height() as u32);
        for f in [params.scale_negative_factor, params.scale_negative_factor.recip()] {
            let Some(b) = BoundingBox::from_center(cx, cy, accepted.w * f, accepted.h * f)
                .ok()
                .and_then(|b| b.clip(w, h))
            else {
                continue;
            };
            if let Ok(feat) = pyramid.extract(&b, &model.template, hog) {
                cache.push_negative(feat.to_vec());
                added += 1;
            }
        }
    }
    model.svm = train(cache, &SvmParams { c: model.c, ..*svm_params })?;
    Ok(added)
}

/// Boxes the size of `target` whose centers are at least `min_distance`
/// away from its center, fully inside the frame. May return fewer than
/// `count` boxes when the frame has no room.
pub fn sample_negative_boxes<R: Rng>(
    target: &BoundingBox,
    width: u32,
    height: u32,
    count: usize,
    min_distance: f64,
    rng: &mut R,
) -> Vec<BoundingBox> {
    let (tcx, tcy) = target.center();
    let max_x = width as f64 - target.w;
    let max_y = height as f64 - target.h;
    if max_x < 0.0 || max_y < 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 200 {
        attempts += 1;
        let x = (rng.gen_range(0.0..=max_x) as f64).round();
        let y = (rng.gen_range(0.0..=max_y) as f64).round();
        let b = BoundingBox {
            x,
            y,
            w: target.w,
            h: target.h,
        };
        let (cx, cy) = b.center();
        if (cx - tcx).hypot(cy - tcy) >= min_distance {
            out.push(b);
        }
    }
    out
}
