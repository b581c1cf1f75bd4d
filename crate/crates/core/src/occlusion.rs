//! Occluder model, segmentation-based local search and recovery.

use std::collections::VecDeque;

use crate::depth_model::{self, DepthGaussian, DepthHistogram, GateParams};
use crate::detector::{self, SvmModel};
use crate::error::{Error, Result};
use crate::features::{FeaturePyramid, HogParams};
use crate::flow::{self, FlowParams, GrayPyramid};
use crate::types::{BoundingBox, Frame, MaybeBox};

pub const COLOR_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OccluderModel {
    pub depth: DepthGaussian,
    /// Normalized `16 x 16 x 16` RGB histogram, index `(r * 16 + g) * 16 + b`.
    pub color_hist: Vec<f64>,
    pub bbox: BoundingBox,
    /// Bounding box of the whole occluding object: the connected occluder
    /// depth surface reaching into `bbox`. Grows beyond `bbox` when the
    /// object is larger than the part that covered the target.
    pub extent: BoundingBox,
    /// Target box area when the occlusion started.
    pub target_area_pre: f64,
    /// Target box size when the occlusion started.
    pub target_size_pre: (f64, f64),
}

fn color_bin(p: [u8; 3]) -> usize {
    let q = 256 / COLOR_BINS;
    ((p[0] as usize / q) * COLOR_BINS + p[1] as usize / q) * COLOR_BINS + p[2] as usize / q
}

fn color_histogram(frame: &Frame, pixels: &[(u32, u32)]) -> Vec<f64> {
    let mut h = vec![0.0; COLOR_BINS * COLOR_BINS * COLOR_BINS];
    for &(x, y) in pixels {
        h[color_bin(frame.rgb.get_pixel(x, y).0)] += 1.0;
    }
    let n = pixels.len() as f64;
    if n > 0.0 {
        h.iter_mut().for_each(|v| *v /= n);
    }
    h
}

/// Bounding rectangle of a pixel set.
pub(crate) fn bounding_rect(pixels: &[(u32, u32)]) -> MaybeBox {
    let (first, rest) = pixels.split_first()?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0 + 1, first.1 + 1);
    for &(x, y) in rest {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    Some(BoundingBox {
        x: x0 as f64,
        y: y0 as f64,
        w: (x1 - x0) as f64,
        h: (y1 - y0) as f64,
    })
}

/// Pixels in `b` whose valid depth satisfies `pred`.
pub(crate) fn pixels_where(frame: &Frame, b: &BoundingBox, pred: impl Fn(f64) -> bool) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    if let Some((x0, y0, x1, y1)) = b.pixel_bounds(frame.width(), frame.height()) {
        for y in y0..y1 {
            for x in x0..x1 {
                let d = frame.depth_at(x, y);
                if d > 0 && pred(d as f64) {
                    out.push((x, y));
                }
            }
        }
    }
    out
}

/// Builds the occluder model from the pixels of `target_box` nearer than
/// `mu - sigma` of the target model. When some of them also lie beyond the
/// target's depth gate only those are kept, so the target's own near relief
/// does not blend into the occluder's depth distribution.
pub fn init_occluder(
    frame: &Frame,
    target_box: &BoundingBox,
    target_g: &DepthGaussian,
    gate: &GateParams,
    bin_width: f64,
) -> Result<OccluderModel> {
    let beyond_gate = target_g.mu - target_g.gate_radius(gate.sigmas, gate.slack_mm);
    let mut limit = beyond_gate;
    let mut pixels = pixels_where(frame, target_box, |d| d < limit);
    if pixels.is_empty() {
        limit = target_g.mu - target_g.sigma;
        pixels = pixels_where(frame, target_box, |d| d < limit);
    }
    let bbox = bounding_rect(&pixels).ok_or(Error::EmptyOccluder)?;
    let hist = DepthHistogram::from_depths(pixels.iter().map(|&(x, y)| frame.depth_at(x, y)), bin_width);
    let depth = depth_model::fit_gaussian(&hist)?;
    Ok(OccluderModel {
        depth,
        color_hist: color_histogram(frame, &pixels),
        bbox,
        extent: occluder_extent(frame, &[bbox], |d| d < limit),
        target_area_pre: target_box.area(),
        target_size_pre: (target_box.w, target_box.h),
    })
}

/// Moves the occluder box with optical flow (held in place when flow fails)
/// and refits its depth over the in-box pixels that still match it, or over
/// the previous extent when the box has drifted off the occluder.
pub fn track_occluder(
    prev: &GrayPyramid,
    cur_pyr: &GrayPyramid,
    cur: &Frame,
    occ: &OccluderModel,
    flow_params: &FlowParams,
    gate: &GateParams,
    bin_width: f64,
) -> OccluderModel {
    let moved = flow::propagate_pyramids(prev, cur_pyr, &occ.bbox, flow_params);
    let bbox = moved.bbox.unwrap_or(occ.bbox);
    let radius = occ.depth.gate_radius(gate.sigmas, gate.slack_mm);
    let matches = |d: f64| (d - occ.depth.mu).abs() <= radius;
    let mut pixels = pixels_where(cur, &bbox, matches);
    if pixels.is_empty() {
        pixels = pixels_where(cur, &occ.extent, matches);
    }
    let hist = DepthHistogram::from_depths(pixels.iter().map(|&(x, y)| cur.depth_at(x, y)), bin_width);
    let depth = depth_model::fit_gaussian(&hist).unwrap_or(occ.depth);
    let radius = depth.gate_radius(gate.sigmas, gate.slack_mm);
    OccluderModel {
        depth,
        bbox,
        extent: occluder_extent(cur, &[bbox, occ.extent], |d| (d - depth.mu).abs() <= radius),
        ..occ.clone()
    }
}

/// Bounding box of the connected components of `is_occluder` pixels that
/// reach into any of `seeds`; the first seed itself when none do.
fn occluder_extent(frame: &Frame, seeds: &[BoundingBox], is_occluder: impl Fn(f64) -> bool) -> BoundingBox {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let include: Vec<bool> = frame
        .depth
        .as_raw()
        .iter()
        .map(|&d| d != 0 && is_occluder(d as f64))
        .collect();
    let (labels, n) = label_components(w, h, &include, false, |_, _| true);
    let mut keep = vec![false; n as usize];
    for seed in seeds {
        for (x, y) in pixels_where(frame, seed, &is_occluder) {
            if let Some(l) = labels[y as usize * w + x as usize] {
                keep[l as usize] = true;
            }
        }
    }
    let pixels: Vec<(u32, u32)> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_some_and(|l| keep[l as usize]))
        .map(|(i, _)| ((i % w) as u32, (i / w) as u32))
        .collect();
    bounding_rect(&pixels).unwrap_or(seeds[0])
}

/// A connected set of pixels in frame coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub pixels: Vec<(u32, u32)>,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> BoundingBox {
        bounding_rect(&self.pixels).expect("regions are non-empty")
    }
}

/// Labels connected components of the included cells of a `w x h` grid.
/// `same(a, b)` decides whether two neighboring included cells join.
/// Labels are assigned in raster order of each component's first cell.
fn label_components(w: usize, h: usize, include: &[bool], eight: bool, same: impl Fn(usize, usize) -> bool) -> (Vec<Option<u32>>, u32) {
    const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const N8: [(isize, isize); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];
    let offsets: &[(isize, isize)] = if eight { &N8 } else { &N4 };
    let mut labels = vec![None; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !include[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if include[j] && labels[j].is_none() && same(i, j) {
                    labels[j] = Some(next);
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

/// Groups labeled cells into regions in frame coordinates, dropping those
/// smaller than `min_area`.
fn collect_regions(labels: &[Option<u32>], count: u32, w: usize, origin: (u32, u32), min_area: f64) -> Vec<Region> {
    let mut regions = vec![Vec::new(); count as usize];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            regions[*l as usize].push((origin.0 + (i % w) as u32, origin.1 + (i / w) as u32));
        }
    }
    regions
        .into_iter()
        .filter(|p| !p.is_empty() && p.len() as f64 >= min_area)
        .map(|pixels| Region { pixels })
        .collect()
}

struct RoiData {
    origin: (u32, u32),
    w: usize,
    h: usize,
    depth: Vec<u16>,
    rgb: Vec<[u8; 3]>,
}

impl RoiData {
    fn new(frame: &Frame, roi: &BoundingBox) -> Option<Self> {
        let (x0, y0, x1, y1) = roi.pixel_bounds(frame.width(), frame.height())?;
        let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
        let mut depth = Vec::with_capacity(w * h);
        let mut rgb = Vec::with_capacity(w * h);
        for y in y0..y1 {
            for x in x0..x1 {
                depth.push(frame.depth_at(x, y));
                rgb.push(frame.rgb.get_pixel(x, y).0);
            }
        }
        Some(RoiData {
            origin: (x0, y0),
            w,
            h,
            depth,
            rgb,
        })
    }

    fn depth_labels(&self, max_step_mm: u16) -> (Vec<Option<u32>>, u32) {
        let valid: Vec<bool> = self.depth.iter().map(|&d| d > 0).collect();
        label_components(self.w, self.h, &valid, false, |a, b| self.depth[a].abs_diff(self.depth[b]) <= max_step_mm)
    }

    fn rgb_labels(&self, max_color_diff: u8) -> (Vec<Option<u32>>, u32) {
        let all = vec![true; self.w * self.h];
        label_components(self.w, self.h, &all, true, |a, b| {
            let (p, q) = (self.rgb[a], self.rgb[b]);
            (0..3).all(|c| p[c].abs_diff(q[c]) <= max_color_diff)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    /// Largest depth step between 4-neighbors inside one region, mm.
    pub max_depth_step_mm: u16,
    /// Largest per-channel color difference between 8-neighbors.
    pub max_color_diff: u8,
    /// Regions smaller than this fraction of the pre-occlusion target area
    /// are dropped.
    pub min_area_ratio: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            max_depth_step_mm: 100,
            max_color_diff: 30,
            min_area_ratio: 0.05,
        }
    }
}

/// Connected regions of valid depth inside `roi`.
pub fn segment_depth(frame: &Frame, roi: &BoundingBox, max_step_mm: u16, min_area: f64) -> Vec<Region> {
    let Some(data) = RoiData::new(frame, roi) else { return Vec::new() };
    let (labels, n) = data.depth_labels(max_step_mm);
    collect_regions(&labels, n, data.w, data.origin, min_area)
}

/// Connected regions of similar color inside `roi`.
pub fn segment_rgb(frame: &Frame, roi: &BoundingBox, max_color_diff: u8, min_area: f64) -> Vec<Region> {
    let Some(data) = RoiData::new(frame, roi) else { return Vec::new() };
    let (labels, n) = data.rgb_labels(max_color_diff);
    collect_regions(&labels, n, data.w, data.origin, min_area)
}

/// Joint segmentation: valid-depth pixels grouped by connected runs of the
/// same (depth region, color region) pair. The result partitions the
/// valid-depth pixels of the ROI before size filtering.
pub fn segment_joint(frame: &Frame, roi: &BoundingBox, params: &SegmentParams, min_area: f64) -> Vec<Region> {
    let Some(data) = RoiData::new(frame, roi) else { return Vec::new() };
    let (dl, _) = data.depth_labels(params.max_depth_step_mm);
    let (cl, _) = data.rgb_labels(params.max_color_diff);
    let include: Vec<bool> = dl.iter().map(Option::is_some).collect();
    let (labels, n) = label_components(data.w, data.h, &include, false, |a, b| dl[a] == dl[b] && cl[a] == cl[b]);
    collect_regions(&labels, n, data.w, data.origin, min_area)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRegion {
    pub bbox: BoundingBox,
    /// Pixels in the box whose depth agrees with the target model.
    pub area: f64,
    pub svm_score: f64,
    /// Overlap ratio (intersection over union) with the occluder box.
    pub overlap_with_occluder: f64,
}

/// Search window around the occluder: centered on the occluder box, sized
/// `search_scale` times the larger of the occluder box and the target box
/// from before the occlusion.
pub fn search_roi(occ: &OccluderModel, search_scale: f64, width: u32, height: u32) -> MaybeBox {
    let (cx, cy) = occ.extent.center();
    let w = occ.extent.w.max(occ.target_size_pre.0) * search_scale;
    let h = occ.extent.h.max(occ.target_size_pre.1) * search_scale;
    BoundingBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h }.clip(width, height)
}

pub struct SearchContext<'a> {
    pub frame: &'a Frame,
    pub pyramid: &'a FeaturePyramid,
    pub model: &'a SvmModel,
    pub hog: &'a HogParams,
    pub target_g: &'a DepthGaussian,
    pub gate: &'a GateParams,
    pub segment: &'a SegmentParams,
    pub search_scale: f64,
    pub detector_top_k: usize,
}

/// Candidate target locations around the occluder from joint segmentation
/// and from the detector, scored by the SVM, deduplicated and sorted by
/// score (ties: smaller left, then smaller top first).
pub fn local_search(ctx: &SearchContext<'_>, occ: &OccluderModel) -> Vec<CandidateRegion> {
    let frame = ctx.frame;
    let Some(roi) = search_roi(occ, ctx.search_scale, frame.width(), frame.height()) else {
        return Vec::new();
    };
    let min_area = ctx.segment.min_area_ratio * occ.target_area_pre;
    let occ_radius = occ.depth.gate_radius(ctx.gate.sigmas, ctx.gate.slack_mm);
    let target_radius = ctx.target_g.gate_radius(ctx.gate.sigmas, ctx.gate.slack_mm);

    let mut boxes: Vec<(BoundingBox, f64)> = Vec::new();
    for region in segment_joint(frame, &roi, ctx.segment, min_area) {
        let mut depths: Vec<u16> = region.pixels.iter().map(|&(x, y)| frame.depth_at(x, y)).collect();
        depths.sort_unstable();
        let median = depths[depths.len() / 2] as f64;
        if (median - occ.depth.mu).abs() <= occ_radius {
            continue;
        }
        let bbox = region.bbox();
        if let Ok(f) = ctx.pyramid.extract(&bbox, &ctx.model.template, ctx.hog) {
            boxes.push((bbox, ctx.model.score(&f.to_vec())));
        }
    }
    for d in detector::score_windows(ctx.pyramid, ctx.model, ctx.detector_top_k) {
        let (cx, cy) = d.bbox.center();
        if cx >= roi.x && cx < roi.right() && cy >= roi.y && cy < roi.bottom() {
            boxes.push((d.bbox, d.score));
        }
    }

    let mut out: Vec<CandidateRegion> = Vec::with_capacity(boxes.len());
    for (bbox, svm_score) in boxes {
        if let Some(existing) = out.iter_mut().find(|c| c.bbox == bbox) {
            existing.svm_score = existing.svm_score.max(svm_score);
            continue;
        }
        let area = pixels_where(frame, &bbox, |d| (d - ctx.target_g.mu).abs() <= target_radius).len() as f64;
        out.push(CandidateRegion {
            bbox,
            area,
            svm_score,
            overlap_with_occluder: bbox.iou(&occ.extent),
        });
    }
    sort_candidates(&mut out);
    out
}

pub(crate) fn sort_candidates(c: &mut [CandidateRegion]) {
    c.sort_by(|a, b| {
        b.svm_score
            .total_cmp(&a.svm_score)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryParams {
    pub min_area_ratio: f64,
    pub max_occluder_overlap: f64,
    pub tau_detect: f64,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            min_area_ratio: 0.5,
            max_occluder_overlap: 0.3,
            tau_detect: 0.0,
        }
    }
}

/// Best-scoring candidate that is visible enough, clear of the occluder and
/// confidently classified as the target.
pub fn try_recover(candidates: &[CandidateRegion], occ: &OccluderModel, params: &RecoveryParams) -> MaybeBox {
    candidates
        .iter()
        .filter(|c| c.area >= params.min_area_ratio * occ.target_area_pre)
        .filter(|c| c.overlap_with_occluder <= params.max_occluder_overlap)
        .filter(|c| c.svm_score >= params.tau_detect)
        .max_by(|a, b| a.svm_score.total_cmp(&b.svm_score).then(b.bbox.x.total_cmp(&a.bbox.x)).then(b.bbox.y.total_cmp(&a.bbox.y)))
        .map(|c| c.bbox)
}
