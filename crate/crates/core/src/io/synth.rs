//! Synthetic RGBD sequences with exact ground truth.
//!
//! A scene is a textured background at a far depth, a textured rectangular
//! target moving along a keyframed path, and optionally a nearer occluder
//! that sweeps horizontally across the target. Ground truth is the minimum
//! box around the visible target pixels, or absent when none is visible.

use std::path::Path;

use image::{Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_sequence, write_atomic, Sequence};
use crate::error::{Error, Result};
use crate::types::{BoundingBox, DepthMap, Frame, MaybeBox, MAX_DEPTH_MM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    pub target: TargetSpec,
    #[serde(default)]
    pub occluder: Option<OccluderSpec>,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Size in pixels at `depth_mm`.
    pub width: f64,
    pub height: f64,
    /// Keyframes `[frame, x, y]` of the top-left corner; linear in between.
    pub path: Vec<[f64; 3]>,
    pub depth_mm: f64,
    /// Keyframes `[frame, depth_mm]`; when empty the depth stays `depth_mm`.
    #[serde(default)]
    pub depth_path: Vec<[f64; 2]>,
    /// Left-to-right depth slant across the target, mm.
    #[serde(default)]
    pub relief_mm: f64,
    /// Scale the image size with `depth_mm / current depth`.
    #[serde(default)]
    pub scale_with_depth: bool,
    /// Keyframes `[frame, weight]` blending towards a second texture.
    #[serde(default)]
    pub crossfade: Vec<[f64; 2]>,
    #[serde(default = "default_target_hue")]
    pub hue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderAppearance {
    /// Its own texture.
    Own,
    /// Shows the target's texture where it overlaps the target and the
    /// target's colors elsewhere: indistinguishable in color.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub depth_mm: f64,
    /// Keyframes `[frame, s]` with `s` in `[0, 2]`. The occluder has the
    /// target's width and enters from the left: the covered fraction of the
    /// target width is `1 - |1 - s|`, i.e. it grows until `s = 1` and the
    /// target reappears on the left as `s` goes to 2.
    pub sweep: Vec<[f64; 2]>,
    /// Occluder height relative to the target height (centered on it).
    #[serde(default = "default_height_ratio")]
    pub height_ratio: f64,
    #[serde(default = "default_appearance")]
    pub appearance: OccluderAppearance,
    #[serde(default = "default_occluder_hue")]
    pub hue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub depth_mm: f64,
    #[serde(default = "default_background_hue")]
    pub hue: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            depth_mm: 6000.0,
            hue: default_background_hue(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub depth_sigma_mm: f64,
    pub hole_prob: f64,
    pub rgb_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            depth_sigma_mm: 10.0,
            hole_prob: 0.01,
            rgb_sigma: 2.0,
        }
    }
}

fn default_target_hue() -> f64 {
    10.0
}
fn default_occluder_hue() -> f64 {
    210.0
}
fn default_background_hue() -> f64 {
    120.0
}
fn default_height_ratio() -> f64 {
    1.5
}
fn default_appearance() -> OccluderAppearance {
    OccluderAppearance::Own
}

/// Piecewise-linear keyframe interpolation, clamped at both ends.
fn interp<const N: usize>(keys: &[[f64; N]], t: f64) -> [f64; N] {
    let first = keys[0];
    if t <= first[0] {
        return first;
    }
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if t <= b[0] {
            let f = if b[0] > a[0] { (t - a[0]) / (b[0] - a[0]) } else { 1.0 };
            let mut out = a;
            for k in 0..N {
                out[k] = a[k] + f * (b[k] - a[k]);
            }
            out[0] = t;
            return out;
        }
    }
    keys[keys.len() - 1]
}

fn check_keys<const N: usize>(keys: &[[f64; N]], name: &str, required: bool, errs: &mut Vec<String>) {
    if keys.is_empty() {
        if required {
            errs.push(format!("{name} needs at least one keyframe"));
        }
        return;
    }
    if keys.windows(2).any(|w| w[1][0] < w[0][0]) {
        errs.push(format!("{name} keyframes must be sorted by frame"));
    }
    if keys.iter().flatten().any(|v| !v.is_finite()) {
        errs.push(format!("{name} keyframes must be finite"));
    }
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`, possibly partly off-canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Scene geometry of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FrameLayout {
    target: Rect,
    /// Target depth at its horizontal center, mm.
    target_depth: f64,
    occluder: Option<Rect>,
    crossfade: f64,
}

impl ScenarioSpec {
    /// Checks the scenario, listing every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.width < 32 || self.height < 32 {
            errs.push("canvas must be at least 32x32".to_string());
        }
        if self.frames == 0 {
            errs.push("frames must be at least 1".to_string());
        }
        let t = &self.target;
        if !(t.width >= 4.0 && t.height >= 4.0) {
            errs.push("target must be at least 4x4 pixels".to_string());
        }
        check_keys(&t.path, "target.path", true, &mut errs);
        check_keys(&t.depth_path, "target.depth_path", false, &mut errs);
        check_keys(&t.crossfade, "target.crossfade", false, &mut errs);
        if t.crossfade.iter().any(|k| !(0.0..=1.0).contains(&k[1])) {
            errs.push("target.crossfade weights must be in [0, 1]".to_string());
        }
        if !(t.relief_mm >= 0.0) {
            errs.push("target.relief_mm must be non-negative".to_string());
        }
        let (near, far) = self.target_depth_range();
        if !(near > 0.0) {
            errs.push("target depth must stay positive".to_string());
        }
        if !(far < self.background.depth_mm) {
            errs.push("target must be nearer than the background".to_string());
        }
        if self.background.depth_mm > MAX_DEPTH_MM as f64 {
            errs.push(format!("background depth exceeds {MAX_DEPTH_MM} mm"));
        }
        if let Some(o) = &self.occluder {
            check_keys(&o.sweep, "occluder.sweep", true, &mut errs);
            if o.sweep.iter().any(|k| !(0.0..=2.0).contains(&k[1])) {
                errs.push("occluder.sweep values must be in [0, 2]".to_string());
            }
            if !(o.depth_mm > 0.0 && o.depth_mm < near) {
                errs.push("occluder must be nearer than the target".to_string());
            }
            if !(o.height_ratio >= 1.0) {
                errs.push("occluder.height_ratio must be at least 1".to_string());
            }
        }
        let n = &self.noise;
        if !(n.depth_sigma_mm >= 0.0 && n.rgb_sigma >= 0.0) {
            errs.push("noise sigmas must be non-negative".to_string());
        }
        if !(0.0..1.0).contains(&n.hole_prob) {
            errs.push("noise.hole_prob must be in [0, 1)".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(errs))
        }
    }

    /// Nearest and farthest target surface depth over the sequence.
    fn target_depth_range(&self) -> (f64, f64) {
        let t = &self.target;
        let centers: Vec<f64> = if t.depth_path.is_empty() {
            vec![t.depth_mm]
        } else {
            t.depth_path.iter().map(|k| k[1]).collect()
        };
        let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo - t.relief_mm / 2.0, hi + t.relief_mm / 2.0)
    }

    pub(crate) fn layout(&self, frame: usize) -> FrameLayout {
        let f = frame as f64;
        let t = &self.target;
        let [_, x, y] = interp(&t.path, f);
        let depth = if t.depth_path.is_empty() {
            t.depth_mm
        } else {
            interp(&t.depth_path, f)[1]
        };
        let scale = if t.scale_with_depth { t.depth_mm / depth } else { 1.0 };
        let (w, h) = ((t.width * scale).round() as i64, (t.height * scale).round() as i64);
        // Scaling keeps the box center on the path.
        let cx = x + t.width / 2.0;
        let cy = y + t.height / 2.0;
        let x0 = (cx - w as f64 / 2.0).round() as i64;
        let y0 = (cy - h as f64 / 2.0).round() as i64;
        let target = Rect {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        };
        let occluder = self.occluder.as_ref().map(|o| {
            let s = interp(&o.sweep, f)[1];
            let oh = (h as f64 * o.height_ratio).round() as i64;
            let oy = target.y0 - (oh - h) / 2;
            let ox = if s <= 1.0 {
                target.x0 - w + (s * w as f64).round() as i64
            } else {
                target.x0 + ((s - 1.0) * w as f64).round() as i64
            };
            Rect {
                x0: ox,
                y0: oy,
                x1: ox + w,
                y1: oy + oh,
            }
        });
        let crossfade = if t.crossfade.is_empty() { 0.0 } else { interp(&t.crossfade, f)[1] };
        FrameLayout {
            target,
            target_depth: depth,
            occluder,
            crossfade,
        }
    }

    /// Ground-truth box of the visible target portion in `frame`.
    pub fn groundtruth(&self, frame: usize) -> MaybeBox {
        let l = self.layout(frame);
        let t = l.target;
        let (cw, ch) = (self.width as i64, self.height as i64);
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for y in t.y0.max(0)..t.y1.min(ch) {
            for x in t.x0.max(0)..t.x1.min(cw) {
                if l.occluder.is_some_and(|o| o.contains(x, y)) {
                    continue;
                }
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
        (x1 > x0).then(|| BoundingBox {
            x: x0 as f64,
            y: y0 as f64,
            w: (x1 - x0) as f64,
            h: (y1 - y0) as f64,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::InvalidScenario(vec![e.to_string()]))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario specs serialize")
    }
}

/// Deterministic hash of a lattice point to `[0, 1)`.
fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    h ^= (ix as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = h.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= (iy as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h ^= h >> 31;
    h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1)`.
fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (ix, iy) = (ix as i64, iy as i64);
    let top = lattice(ix, iy, seed) * (1.0 - sx) + lattice(ix + 1, iy, seed) * sx;
    let bottom = lattice(ix, iy + 1, seed) * (1.0 - sx) + lattice(ix + 1, iy + 1, seed) * sx;
    top * (1.0 - sy) + bottom * sy
}

/// Colored two-octave texture around a base hue.
fn texture(x: f64, y: f64, hue: f64, seed: u64, coarse: f64) -> [f64; 3] {
    let base = hue_to_rgb(hue);
    let mut out = [0.0; 3];
    for (c, v) in out.iter_mut().enumerate() {
        let s = seed.wrapping_add(c as u64 * 1_000_003);
        let n = 0.65 * value_noise(x, y, coarse, s) + 0.35 * value_noise(x, y, coarse / 3.0, s ^ 0xABCD);
        *v = 255.0 * (0.15 + 0.85 * n) * (0.35 + 0.65 * base[c]);
    }
    out
}

fn hue_to_rgb(hue: f64) -> [f64; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as u32 {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

/// Target color at frame pixel `(x, y)` for a target occupying `t`.
fn target_color(spec: &ScenarioSpec, l: &FrameLayout, x: i64, y: i64) -> [f64; 3] {
    let tw = (l.target.x1 - l.target.x0).max(1) as f64;
    // Texture coordinates in pixels of the unscaled target.
    let u = (x - l.target.x0) as f64 * spec.target.width / tw;
    let v = (y - l.target.y0) as f64 * spec.target.width / tw;
    let coarse = spec.target.width.min(spec.target.height) / 3.0;
    let a = texture(u, v, spec.target.hue, spec.seed ^ 0x1111, coarse);
    if l.crossfade <= 0.0 {
        return a;
    }
    let b = texture(u, v, spec.target.hue + 40.0, spec.seed ^ 0x2222, coarse);
    let f = l.crossfade;
    [0, 1, 2].map(|c| a[c] * (1.0 - f) + b[c] * f)
}

/// Renders every frame with its ground truth.
pub fn generate(spec: &ScenarioSpec) -> Result<Sequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let coarse_bg = 24.0;
    let background: Vec<[f64; 3]> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| texture(x as f64, y as f64, spec.background.hue, spec.seed ^ 0x3333, coarse_bg))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth_noise = Normal::new(0.0, spec.noise.depth_sigma_mm.max(1e-12)).expect("finite sigma");
    let rgb_noise = Normal::new(0.0, spec.noise.rgb_sigma.max(1e-12)).expect("finite sigma");

    let mut frames = Vec::with_capacity(spec.frames);
    let mut groundtruth = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let l = spec.layout(i);
        let t = l.target;
        let tw = (t.x1 - t.x0).max(1) as f64;
        let mut rgb = RgbImage::new(w, h);
        let mut depth = DepthMap::new(w, h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (mut color, mut d) = (background[(y * w as i64 + x) as usize], spec.background.depth_mm);
                if t.contains(x, y) {
                    color = target_color(spec, &l, x, y);
                    d = l.target_depth + spec.target.relief_mm * (((x - t.x0) as f64 + 0.5) / tw - 0.5);
                }
                if let (Some(o), Some(os)) = (l.occluder, spec.occluder.as_ref()) {
                    if o.contains(x, y) {
                        color = match os.appearance {
                            OccluderAppearance::Own => {
                                let (u, v) = ((x - o.x0) as f64, (y - o.y0) as f64);
                                texture(u, v, os.hue, spec.seed ^ 0x4444, spec.target.width / 3.0)
                            }
                            OccluderAppearance::Target => target_color(spec, &l, x, y),
                        };
                        d = os.depth_mm;
                    }
                }
                let px = color.map(|c| (c + rgb_noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
                let noisy = d + depth_noise.sample(&mut rng);
                let hole = spec.noise.hole_prob > 0.0 && rng.gen::<f64>() < spec.noise.hole_prob;
                let dv = if hole { 0 } else { noisy.round().clamp(1.0, MAX_DEPTH_MM as f64) as u16 };
                rgb.put_pixel(x as u32, y as u32, Rgb(px));
                depth.put_pixel(x as u32, y as u32, Luma([dv]));
            }
        }
        frames.push(Frame::new(i as u64, rgb, depth)?);
        groundtruth.push(spec.groundtruth(i));
    }
    Ok(Sequence { frames, groundtruth })
}

/// Generates the sequence into `dir`, with a copy of the scenario as
/// `scenario.toml`.
pub fn generate_to_dir(spec: &ScenarioSpec, dir: &Path) -> Result<Sequence> {
    let seq = generate(spec)?;
    save_sequence(dir, &seq)?;
    write_atomic(&dir.join("scenario.toml"), spec.to_toml().as_bytes())?;
    Ok(seq)
}

pub const PRESETS: [&str; 5] = [
    "static",
    "fast_translation",
    "out_of_plane_proxy",
    "gradual_occlusion",
    "full_occlusion_recovery",
];

/// A named preset scenario.
pub fn preset(name: &str, seed: u64) -> Option<ScenarioSpec> {
    let target = |path: Vec<[f64; 3]>| TargetSpec {
        width: 40.0,
        height: 40.0,
        path,
        depth_mm: 3000.0,
        depth_path: Vec::new(),
        relief_mm: 300.0,
        scale_with_depth: false,
        crossfade: Vec::new(),
        hue: default_target_hue(),
    };
    let base = |frames: usize, target: TargetSpec| ScenarioSpec {
        width: 320,
        height: 240,
        frames,
        seed,
        target,
        occluder: None,
        background: BackgroundSpec::default(),
        noise: NoiseSpec::default(),
    };
    let spec = match name {
        "static" => base(30, target(vec![[0.0, 140.0, 100.0]])),
        "fast_translation" => base(
            100,
            target(vec![
                [0.0, 30.0, 100.0],
                [40.0, 250.0, 70.0],
                [70.0, 120.0, 130.0],
                [99.0, 270.0, 150.0],
            ]),
        ),
        "out_of_plane_proxy" => {
            let mut t = target(vec![[0.0, 60.0, 90.0], [79.0, 220.0, 110.0]]);
            t.crossfade = vec![[20.0, 0.0], [60.0, 1.0]];
            base(80, t)
        }
        "gradual_occlusion" => {
            let mut s = base(100, target(vec![[0.0, 120.0, 100.0], [99.0, 170.0, 100.0]]));
            s.occluder = Some(OccluderSpec {
                depth_mm: 1200.0,
                sweep: vec![[10.0, 0.0], [60.0, 0.8], [75.0, 0.8], [99.0, 0.0]],
                height_ratio: 1.5,
                appearance: OccluderAppearance::Target,
                hue: default_target_hue(),
            });
            s
        }
        "full_occlusion_recovery" => {
            let mut s = base(80, target(vec![[0.0, 140.0, 100.0]]));
            s.occluder = Some(OccluderSpec {
                depth_mm: 1500.0,
                sweep: vec![[20.0, 0.0], [40.0, 1.0], [50.0, 1.0], [60.0, 2.0]],
                height_ratio: 1.5,
                appearance: OccluderAppearance::Own,
                hue: default_occluder_hue(),
            });
            s
        }
        _ => return None,
    };
    Some(spec)
}
