//! Independent reference implementations and scene builders shared by the
//! integration tests. The oracles are deliberately naive: per-pixel loops,
//! pixel sets, full-batch subgradient descent.

#![allow(dead_code)]

use std::collections::HashSet;

use image::{Luma, Rgb, RgbImage};
use rgbdtrack::features::Plane;
use rgbdtrack::{BoundingBox, DepthMap, Frame, MaybeBox};

pub fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

pub fn frame_from(index: u64, w: u32, h: u32, rgb: impl Fn(u32, u32) -> [u8; 3], depth: impl Fn(u32, u32) -> u16) -> Frame {
    Frame::new(
        index,
        RgbImage::from_fn(w, h, |x, y| Rgb(rgb(x, y))),
        DepthMap::from_fn(w, h, |x, y| Luma([depth(x, y)])),
    )
    .unwrap()
}

/// Deterministic integer hash, used for pixel textures.
pub fn hash2(x: i64, y: i64, salt: u64) -> u64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ salt;
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h
}

/// Blocky color texture (4 px blocks), addressed in object-local coordinates.
pub fn texture(x: i64, y: i64, salt: u64) -> [u8; 3] {
    let h = hash2(x.div_euclid(4), y.div_euclid(4), salt);
    [(h & 0xFF) as u8, ((h >> 8) & 0xFF) as u8, ((h >> 16) & 0xFF) as u8]
}

// ---------------------------------------------------------------- HOG oracle

/// Per-cell HOG, `cells_y x cells_x x bins`, computed pixel by pixel:
/// central differences with replicated borders, unsigned orientation,
/// magnitude-weighted hard binning, then for every cell the mean over all
/// 2x2 blocks containing it of the L2-normalized, clipped, renormalized
/// block vector.
pub fn naive_hog(img: &Plane, cell: usize, bins: usize, clip: f64, eps: f64) -> Vec<f64> {
    let (w, h) = (img.width as i64, img.height as i64);
    let px = |x: i64, y: i64| img.data[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let (cx_n, cy_n) = (img.width / cell, img.height / cell);
    let mut hist = vec![vec![vec![0.0f64; bins]; cx_n]; cy_n];
    for y in 0..(cy_n * cell) as i64 {
        for x in 0..(cx_n * cell) as i64 {
            let gx = px(x + 1, y) - px(x - 1, y);
            let gy = px(x, y + 1) - px(x, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let deg = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let bin = ((deg / (180.0 / bins as f64)).floor() as usize).min(bins - 1);
            hist[y as usize / cell][x as usize / cell][bin] += mag;
        }
    }
    let block = |by: usize, bx: usize| -> Vec<f64> {
        let mut v = Vec::new();
        for (cy, cx) in [(by, bx), (by, bx + 1), (by + 1, bx), (by + 1, bx + 1)] {
            v.extend_from_slice(&hist[cy][cx]);
        }
        let n = (v.iter().map(|a| a * a).sum::<f64>() + eps * eps).sqrt();
        let v: Vec<f64> = v.iter().map(|a| (a / n).min(clip)).collect();
        let n = (v.iter().map(|a| a * a).sum::<f64>() + eps * eps).sqrt();
        v.iter().map(|a| a / n).collect()
    };
    let mut out = Vec::with_capacity(cy_n * cx_n * bins);
    for cy in 0..cy_n {
        for cx in 0..cx_n {
            let mut acc = vec![0.0; bins];
            let mut count = 0;
            for by in cy.saturating_sub(1)..=cy {
                for bx in cx.saturating_sub(1)..=cx {
                    if by + 1 >= cy_n || bx + 1 >= cx_n {
                        continue;
                    }
                    let v = block(by, bx);
                    let k = (cy - by) * 2 + (cx - bx);
                    for b in 0..bins {
                        acc[b] += v[k * bins + b];
                    }
                    count += 1;
                }
            }
            out.extend(acc.iter().map(|a| if count > 0 { a / count as f64 } else { 0.0 }));
        }
    }
    out
}

// ------------------------------------------------------------ metric oracles

/// Pixel set of a box with integer coordinates.
pub fn pixels(b: &BoundingBox) -> HashSet<(i64, i64)> {
    let mut s = HashSet::new();
    for y in b.y as i64..(b.y + b.h) as i64 {
        for x in b.x as i64..(b.x + b.w) as i64 {
            s.insert((x, y));
        }
    }
    s
}

pub fn pixel_jaccard(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (pa, pb) = (pixels(a), pixels(b));
    let inter = pa.intersection(&pb).count();
    let union = pa.union(&pb).count();
    inter as f64 / union as f64
}

pub fn overlap_oracle(t: &MaybeBox, g: &MaybeBox) -> f64 {
    match (t, g) {
        (Some(a), Some(b)) => pixel_jaccard(a, b),
        (None, None) => 1.0,
        _ => -1.0,
    }
}

pub fn success_oracle(t: &[MaybeBox], g: &[MaybeBox], r_t: f64) -> f64 {
    let mut hits = 0;
    for i in 0..t.len() {
        if overlap_oracle(&t[i], &g[i]) > r_t {
            hits += 1;
        }
    }
    hits as f64 / t.len() as f64
}

/// `(none, I, II, III)` frame counts.
pub fn error_counts_oracle(t: &[MaybeBox], g: &[MaybeBox], r_t: f64) -> [usize; 4] {
    let mut c = [0; 4];
    for i in 0..t.len() {
        let k = match (&t[i], &g[i]) {
            (None, None) => 0,
            (Some(_), None) => 2,
            (None, Some(_)) => 3,
            (Some(a), Some(b)) => {
                if pixel_jaccard(a, b) > r_t {
                    0
                } else {
                    1
                }
            }
        };
        c[k] += 1;
    }
    c
}

/// `(max, mean)` of one minus the frame-to-frame overlap of consecutive
/// present ground-truth boxes.
pub fn speed_oracle(g: &[MaybeBox]) -> Option<(f64, f64)> {
    let mut v = Vec::new();
    for i in 1..g.len() {
        if let (Some(a), Some(b)) = (&g[i - 1], &g[i]) {
            v.push(1.0 - pixel_jaccard(a, b));
        }
    }
    if v.is_empty() {
        return None;
    }
    let mut max = v[0];
    let mut sum = 0.0;
    for &s in &v {
        if s > max {
            max = s;
        }
        sum += s;
    }
    Some((max, sum / v.len() as f64))
}

// -------------------------------------------------------------- SVM oracle

/// Objective `1/2 (|w|^2 + b^2) + C/2 (mean positive hinge + mean negative hinge)`.
pub fn svm_objective(w: &[f64], b: f64, pos: &[Vec<f64>], neg: &[Vec<f64>], c: f64) -> f64 {
    let f = |x: &Vec<f64>| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
    let hp = pos.iter().map(|x| (1.0 - f(x)).max(0.0)).sum::<f64>() / pos.len() as f64;
    let hn = neg.iter().map(|x| (1.0 + f(x)).max(0.0)).sum::<f64>() / neg.len() as f64;
    0.5 * (w.iter().map(|a| a * a).sum::<f64>() + b * b) + c * 0.5 * (hp + hn)
}

/// Full-batch subgradient descent with step `1/t` (the objective is
/// 1-strongly convex); returns the best objective value seen.
pub fn subgradient_reference(pos: &[Vec<f64>], neg: &[Vec<f64>], c: f64, iterations: usize) -> f64 {
    let dim = pos[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = svm_objective(&w, b, pos, neg, c);
    for t in 1..=iterations {
        let mut gw = w.clone();
        let mut gb = b;
        for (set, y) in [(pos, 1.0), (neg, -1.0)] {
            let k = c * 0.5 / set.len() as f64;
            for x in set {
                let m = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
                if m < 1.0 {
                    for (g, xi) in gw.iter_mut().zip(x) {
                        *g -= k * y * xi;
                    }
                    gb -= k * y;
                }
            }
        }
        let eta = 1.0 / t as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= eta * g;
        }
        b -= eta * gb;
        best = best.min(svm_objective(&w, b, pos, neg, c));
    }
    best
}

/// Two classes of `n` points each, separated by the hyperplane `u . x = 0`
/// (`u` a random unit vector) with functional margin at least 1.
pub fn separable_data(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    u.iter_mut().for_each(|a| *a /= norm);
    let mut make = |sign: f64| -> Vec<f64> {
        let mut x: Vec<f64> = (0..dim).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 2.0 * z }).collect();
        let proj: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
        let target = sign * (1.0 + rng.gen_range(0.0..2.0));
        for (xi, ui) in x.iter_mut().zip(&u) {
            *xi += (target - proj) * ui;
        }
        x
    };
    let pos = (0..n).map(|_| make(1.0)).collect();
    let neg = (0..n).map(|_| make(-1.0)).collect();
    (pos, neg)
}

// ------------------------------------------------------------ scene builders

/// Depth map noise: deterministic, roughly uniform in `[-amp, amp]` mm.
pub fn depth_noise(x: u32, y: u32, salt: u64, amp: i32) -> i32 {
    (hash2(x as i64, y as i64, salt) % (2 * amp as u64 + 1)) as i32 - amp
}

/// 50x50 target box at (40, 30) at 3000 mm on a 6000 mm background, with a
/// 1000 mm plate covering the left 20 columns (40%) of the box.
pub fn plate_frame() -> (Frame, BoundingBox) {
    let target = bb(40.0, 30.0, 50.0, 50.0);
    let f = frame_from(
        0,
        160,
        120,
        |x, y| texture(x as i64, y as i64, 1),
        |x, y| {
            let inside = (40..90).contains(&x) && (30..80).contains(&y);
            let base = if (40..60).contains(&x) && inside {
                1000
            } else if inside {
                3000
            } else {
                6000
            };
            (base + depth_noise(x, y, 2, 10)) as u16
        },
    );
    (f, target)
}

/// Occlusion evaluation on the first frames a mode emits, given truth.
pub fn overlaps(out: &[MaybeBox], truth: &[MaybeBox]) -> Vec<f64> {
    out.iter().zip(truth).map(|(a, b)| rgbdtrack::eval::overlap(a, b)).collect()
}
