//! Box propagation by pyramidal Lucas-Kanade point tracking.
//!
//! A regular grid of points inside the box is tracked forward and then
//! backward; points whose round trip does not return close to the start, or
//! whose patches do not correlate, are rejected. The box follows the median
//! displacement and the median change in pairwise point distance.

use crate::features::{rgb_to_gray_plane, Plane};
use crate::types::{BoundingBox, Frame, MaybeBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Points per side of the tracked grid.
    pub grid: usize,
    pub levels: usize,
    pub half_window: usize,
    pub max_iterations: usize,
    /// Forward-backward error above which a point is rejected, in pixels.
    pub fb_threshold: f64,
    /// Below this surviving fraction the box is reported absent.
    pub min_survival: f64,
    /// Minimum normalized cross-correlation between matched patches.
    pub min_ncc: f64,
    /// Per-frame scale change is clamped to `[1 - max_scale_change, 1 + max_scale_change]`.
    pub max_scale_change: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            grid: 10,
            levels: 3,
            half_window: 4,
            max_iterations: 20,
            fb_threshold: 2.0,
            min_survival: 0.2,
            min_ncc: 0.5,
            max_scale_change: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub bbox: MaybeBox,
    /// Tracking confidence in `[0, 1]`; 0 whenever `bbox` is absent.
    pub confidence: f64,
    pub median_displacement: (f64, f64),
}

impl FlowResult {
    pub fn failed() -> Self {
        FlowResult {
            bbox: None,
            confidence: 0.0,
            median_displacement: (0.0, 0.0),
        }
    }
}

/// Confidence from the surviving fraction and the median forward-backward
/// error (pixels).
pub fn flow_confidence(survival: f64, median_fb_error: f64, fb_threshold: f64) -> f64 {
    (survival * (-median_fb_error / fb_threshold).exp()).clamp(0.0, 1.0)
}

struct Level {
    img: Plane,
    gx: Plane,
    gy: Plane,
}

/// Gray image pyramid with gradients, finest level first.
pub struct GrayPyramid {
    levels: Vec<Level>,
}

impl GrayPyramid {
    pub fn new(gray: Plane, levels: usize) -> Self {
        let mut out = Vec::with_capacity(levels);
        let mut img = gray;
        for l in 0..levels.max(1) {
            if l > 0 {
                if img.width < 8 || img.height < 8 {
                    break;
                }
                img = downsample(&img);
            }
            let (gx, gy) = gradients(&img);
            out.push(Level { img: img.clone(), gx, gy });
        }
        GrayPyramid { levels: out }
    }

    pub fn from_frame(frame: &Frame, levels: usize) -> Self {
        Self::new(rgb_to_gray_plane(frame), levels)
    }
}

/// Binomial `[1 4 6 4 1] / 16` blur, then every other pixel.
fn downsample(p: &Plane) -> Plane {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let rows = Plane::from_fn(p.width, p.height, |x, y| {
        K.iter()
            .enumerate()
            .map(|(k, c)| c * p.get_clamped(x as isize + k as isize - 2, y as isize))
            .sum()
    });
    Plane::from_fn(p.width / 2, p.height / 2, |x, y| {
        K.iter()
            .enumerate()
            .map(|(k, c)| c * rows.get_clamped(2 * x as isize, 2 * y as isize + k as isize - 2))
            .sum()
    })
}

fn gradients(p: &Plane) -> (Plane, Plane) {
    let gx = Plane::from_fn(p.width, p.height, |x, y| {
        0.5 * (p.get_clamped(x as isize + 1, y as isize) - p.get_clamped(x as isize - 1, y as isize))
    });
    let gy = Plane::from_fn(p.width, p.height, |x, y| {
        0.5 * (p.get_clamped(x as isize, y as isize + 1) - p.get_clamped(x as isize, y as isize - 1))
    });
    (gx, gy)
}

fn in_bounds(p: &Plane, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (p.width - 1) as f64 && y <= (p.height - 1) as f64
}

/// Tracks one point from `from` to `to`. Returns the new position.
fn track_point(from: &GrayPyramid, to: &GrayPyramid, pt: (f64, f64), params: &FlowParams) -> Option<(f64, f64)> {
    let n_levels = from.levels.len().min(to.levels.len());
    let r = params.half_window as isize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut d = (0.0, 0.0);
    for l in (0..n_levels).rev() {
        let s = (1u32 << l) as f64;
        let (px, py) = (pt.0 / s, pt.1 / s);
        let a = &from.levels[l];
        let b = &to.levels[l];
        if !in_bounds(&a.img, px, py) {
            return None;
        }
        let mut tmpl = Vec::with_capacity(n as usize);
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (px + dx as f64, py + dy as f64);
                let (i, ix, iy) = (a.img.sample(x, y), a.gx.sample(x, y), a.gy.sample(x, y));
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                tmpl.push((i, ix, iy));
            }
        }
        let det = gxx * gyy - gxy * gxy;
        let trace = gxx + gyy;
        let min_eig = 0.5 * (trace - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt());
        if min_eig / n < 1.0 || det.abs() < 1e-12 {
            return None;
        }
        for _ in 0..params.max_iterations {
            let (qx, qy) = (px + d.0, py + d.1);
            if !in_bounds(&b.img, qx, qy) {
                return None;
            }
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (i, ix, iy) = tmpl[k];
                    k += 1;
                    let diff = i - b.img.sample(qx + dx as f64, qy + dy as f64);
                    bx += diff * ix;
                    by += diff * iy;
                }
            }
            let vx = (gyy * bx - gxy * by) / det;
            let vy = (gxx * by - gxy * bx) / det;
            d = (d.0 + vx, d.1 + vy);
            if vx * vx + vy * vy < 1e-4 {
                break;
            }
        }
        if l > 0 {
            d = (d.0 * 2.0, d.1 * 2.0);
        }
    }
    let q = (pt.0 + d.0, pt.1 + d.1);
    in_bounds(&to.levels[0].img, q.0, q.1).then_some(q)
}

fn ncc(a: &Plane, pa: (f64, f64), b: &Plane, pb: (f64, f64), r: isize) -> f64 {
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            va.push(a.sample(pa.0 + dx as f64, pa.1 + dy as f64));
            vb.push(b.sample(pb.0 + dx as f64, pb.1 + dy as f64));
        }
    }
    let n = va.len() as f64;
    let ma = va.iter().sum::<f64>() / n;
    let mb = vb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in va.iter().zip(&vb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Propagates `prev_box` from `prev` to `cur`.
pub fn propagate(prev: &Frame, cur: &Frame, prev_box: &BoundingBox, params: &FlowParams) -> FlowResult {
    let a = GrayPyramid::from_frame(prev, params.levels);
    let b = GrayPyramid::from_frame(cur, params.levels);
    propagate_pyramids(&a, &b, prev_box, params)
}

/// [`propagate`] on prepared pyramids.
pub fn propagate_pyramids(prev: &GrayPyramid, cur: &GrayPyramid, prev_box: &BoundingBox, params: &FlowParams) -> FlowResult {
    let base_prev = &prev.levels[0].img;
    let base_cur = &cur.levels[0].img;
    let (fw, fh) = (base_cur.width as u32, base_cur.height as u32);
    let g = params.grid.max(1);
    let mut from = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            from.push((
                prev_box.x + (i as f64 + 0.5) * prev_box.w / g as f64,
                prev_box.y + (j as f64 + 0.5) * prev_box.h / g as f64,
            ));
        }
    }

    let mut kept: Vec<((f64, f64), (f64, f64), f64)> = Vec::new();
    for &p in &from {
        let Some(q) = track_point(prev, cur, p, params) else { continue };
        let Some(back) = track_point(cur, prev, q, params) else { continue };
        let fb = (back.0 - p.0).hypot(back.1 - p.1);
        if fb > params.fb_threshold {
            continue;
        }
        if ncc(base_prev, p, base_cur, q, params.half_window as isize) < params.min_ncc {
            continue;
        }
        kept.push((p, q, fb));
    }

    let survival = kept.len() as f64 / from.len() as f64;
    if kept.is_empty() || survival < params.min_survival {
        return FlowResult::failed();
    }
    let dx = median(&mut kept.iter().map(|(p, q, _)| q.0 - p.0).collect::<Vec<_>>());
    let dy = median(&mut kept.iter().map(|(p, q, _)| q.1 - p.1).collect::<Vec<_>>());
    let fb = median(&mut kept.iter().map(|k| k.2).collect::<Vec<_>>());

    let mut ratios = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let (pi, qi, _) = kept[i];
            let (pj, qj, _) = kept[j];
            let d0 = (pi.0 - pj.0).hypot(pi.1 - pj.1);
            if d0 > 1e-9 {
                ratios.push((qi.0 - qj.0).hypot(qi.1 - qj.1) / d0);
            }
        }
    }
    let scale = if ratios.is_empty() {
        1.0
    } else {
        median(&mut ratios).clamp(1.0 - params.max_scale_change, 1.0 + params.max_scale_change)
    };

    let moved = prev_box.translate(dx, dy).scale_about_center(scale);
    match moved.clip(fw, fh) {
        Some(b) => FlowResult {
            bbox: Some(b),
            confidence: flow_confidence(survival, fb, params.fb_threshold),
            median_displacement: (dx, dy),
        },
        None => FlowResult::failed(),
    }
}
