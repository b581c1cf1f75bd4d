use std::f64::consts::PI;

use super::Plane;
use crate::error::{Error, Result};

/// HOG parameters. Orientation bins are unsigned (0 to 180 degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogParams {
    pub cell_size: usize,
    pub bins: usize,
    /// Per-entry cap applied after the first block normalization.
    pub clip: f64,
    /// Regularizer added to block norms.
    pub norm_eps: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            cell_size: 8,
            bins: 9,
            clip: 0.2,
            norm_eps: 1e-6,
        }
    }
}

/// Per-cell orientation histograms, `cells_y x cells_x x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HogGrid {
    pub cells_y: usize,
    pub cells_x: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl HogGrid {
    pub fn zeros(cells_y: usize, cells_x: usize, bins: usize) -> Self {
        HogGrid {
            cells_y,
            cells_x,
            bins,
            data: vec![0.0; cells_y * cells_x * bins],
        }
    }

    #[inline]
    pub fn cell(&self, cy: usize, cx: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub fn sub_grid(&self, cy0: usize, cx0: usize, cells_y: usize, cells_x: usize) -> HogGrid {
        let mut data = Vec::with_capacity(cells_y * cells_x * self.bins);
        for cy in cy0..cy0 + cells_y {
            for cx in cx0..cx0 + cells_x {
                data.extend_from_slice(self.cell(cy, cx));
            }
        }
        HogGrid {
            cells_y,
            cells_x,
            bins: self.bins,
            data,
        }
    }
}

/// Gradient magnitude and unsigned orientation angle per pixel.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub mag: Vec<f64>,
    pub angle: Vec<f64>,
}

impl Gradients {
    fn with_len(n: usize) -> Self {
        Gradients {
            mag: vec![0.0; n],
            angle: vec![0.0; n],
        }
    }

    /// Drops the outermost pixel ring of a `width x height` field.
    pub fn crop_ring(self, width: usize, height: usize) -> Gradients {
        let (w, h) = (width - 2, height - 2);
        let mut out = Gradients::with_len(w * h);
        for y in 0..h {
            let src = (y + 1) * width + 1;
            out.mag[y * w..(y + 1) * w].copy_from_slice(&self.mag[src..src + w]);
            out.angle[y * w..(y + 1) * w].copy_from_slice(&self.angle[src..src + w]);
        }
        out
    }
}

#[inline]
fn unsigned_angle(gx: f64, gy: f64) -> f64 {
    let mut a = gy.atan2(gx);
    if a < 0.0 {
        a += PI;
    }
    if a >= PI {
        a -= PI;
    }
    a
}

#[inline]
fn orientation_bin(angle: f64, bins: usize) -> usize {
    ((angle * bins as f64 / PI) as usize).min(bins - 1)
}

/// Central differences `[-1, 0, 1]` with replicated borders, one row at a
/// time. Calls `f(index, gx, gy)` for every pixel.
fn for_each_gradient(p: &Plane, mut f: impl FnMut(usize, f64, f64)) {
    let (w, h) = (p.width, p.height);
    for y in 0..h {
        let row = &p.data[y * w..(y + 1) * w];
        let up = &p.data[y.saturating_sub(1) * w..][..w];
        let down = &p.data[(y + 1).min(h - 1) * w..][..w];
        for x in 0..w {
            let left = row[x.saturating_sub(1)];
            let right = row[(x + 1).min(w - 1)];
            f(y * w + x, right - left, down[x] - up[x]);
        }
    }
}

pub(crate) fn gray_gradients(p: &Plane) -> Gradients {
    let mut g = Gradients::with_len(p.data.len());
    for_each_gradient(p, |i, gx, gy| {
        g.mag[i] = gx.hypot(gy);
        g.angle[i] = unsigned_angle(gx, gy);
    });
    g
}

/// Per pixel, the gradient of whichever color channel is strongest.
pub(crate) fn color_gradients(ch: &[Plane; 3]) -> Gradients {
    let mut best = gray_gradients(&ch[0]);
    for p in &ch[1..] {
        for_each_gradient(p, |i, gx, gy| {
            let m = gx.hypot(gy);
            if m > best.mag[i] {
                best.mag[i] = m;
                best.angle[i] = unsigned_angle(gx, gy);
            }
        });
    }
    best
}

/// Gradients of the depth gray image. Any difference that touches an
/// invalid pixel is zeroed, so holes do not show up as edges.
pub(crate) fn depth_gradients(p: &Plane, valid: &[bool]) -> Gradients {
    let (w, h) = (p.width, p.height);
    let mut g = gray_gradients(p);
    for y in 0..h {
        for x in 0..w {
            let ok = valid[y * w + x]
                && valid[y * w + x.saturating_sub(1)]
                && valid[y * w + (x + 1).min(w - 1)]
                && valid[y.saturating_sub(1) * w + x]
                && valid[(y + 1).min(h - 1) * w + x];
            if !ok {
                g.mag[y * w + x] = 0.0;
            }
        }
    }
    g
}

/// Bins gradients into cells, then applies 2x2-block L2 normalization with
/// clipping and renormalization. A cell's descriptor is the mean of its
/// normalized copies across the blocks that contain it.
pub(crate) fn hog_from_gradients(g: &Gradients, width: usize, height: usize, params: &HogParams) -> HogGrid {
    let cell = params.cell_size;
    let bins = params.bins;
    let cells_x = width / cell;
    let cells_y = height / cell;
    let mut hist = HogGrid::zeros(cells_y, cells_x, bins);
    for y in 0..cells_y * cell {
        let cy = y / cell;
        let row = y * width;
        for x in 0..cells_x * cell {
            let m = g.mag[row + x];
            if m == 0.0 {
                continue;
            }
            let b = orientation_bin(g.angle[row + x], bins);
            hist.data[(cy * cells_x + x / cell) * bins + b] += m;
        }
    }
    normalize_blocks(&hist, params)
}

fn normalize_blocks(hist: &HogGrid, params: &HogParams) -> HogGrid {
    let (cy_n, cx_n, bins) = (hist.cells_y, hist.cells_x, hist.bins);
    let mut out = HogGrid::zeros(cy_n, cx_n, bins);
    let mut counts = vec![0u32; cy_n * cx_n];
    let eps2 = params.norm_eps * params.norm_eps;
    let mut block = vec![0.0; 4 * bins];
    for by in 0..cy_n.saturating_sub(1) {
        for bx in 0..cx_n.saturating_sub(1) {
            let cells = [(by, bx), (by, bx + 1), (by + 1, bx), (by + 1, bx + 1)];
            for (k, &(cy, cx)) in cells.iter().enumerate() {
                block[k * bins..(k + 1) * bins].copy_from_slice(hist.cell(cy, cx));
            }
            let n = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
            for v in block.iter_mut() {
                *v = (*v / n).min(params.clip);
            }
            let n = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
            for (k, &(cy, cx)) in cells.iter().enumerate() {
                let dst = (cy * cx_n + cx) * bins;
                for b in 0..bins {
                    out.data[dst + b] += block[k * bins + b] / n;
                }
                counts[cy * cx_n + cx] += 1;
            }
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 1 {
            for v in &mut out.data[i * bins..(i + 1) * bins] {
                *v /= c as f64;
            }
        }
    }
    out
}

/// HOG of a gray image with the default clip and regularizer.
pub fn compute_hog(gray: &Plane, cell_size: usize, bins: usize) -> Result<HogGrid> {
    if cell_size == 0 || bins == 0 {
        return Err(Error::InvalidParameter("cell size and bin count must be positive".into()));
    }
    let min = 2 * cell_size;
    if gray.width < min || gray.height < min {
        return Err(Error::ImageTooSmall {
            width: gray.width as u32,
            height: gray.height as u32,
            min_width: min as u32,
            min_height: min as u32,
        });
    }
    let params = HogParams {
        cell_size,
        bins,
        ..HogParams::default()
    };
    Ok(hog_from_gradients(&gray_gradients(gray), gray.width, gray.height, &params))
}
