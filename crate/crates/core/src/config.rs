//! Tracker configuration, stored as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored; keys not present
//! keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::depth_model::GateParams;
use crate::detector::{SvmParams, UpdateParams};
use crate::error::{Error, Result};
use crate::features::HogParams;
use crate::flow::FlowParams;
use crate::occlusion::{RecoveryParams, SegmentParams};

macro_rules! tracker_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr, )*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct TrackerConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for TrackerConfig {
            fn default() -> Self {
                TrackerConfig { $( $name: $default, )* }
            }
        }

        impl TrackerConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name), )*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $( stringify!($name) => {
                        self.$name = value
                            .parse::<$ty>()
                            .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))?;
                    } )*
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            }

            /// All keys with their values, one per line, in declaration order.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $( writeln!(s, "{} = {}", stringify!($name), self.$name).unwrap(); )*
                s
            }
        }
    };
}

tracker_config! {
    /// Weight of the flow term in the fused confidence.
    alpha: f64 = 0.5,
    /// Occlusion likelihood above which the occlusion state is entered.
    occ_enter_threshold: f64 = 0.35,
    /// Share of the box that must lie nearer than the target's depth gate
    /// for the occlusion state to be entered.
    occ_min_near_ratio: f64 = 0.05,
    /// Minimum fused confidence for a detection to be accepted.
    tau_accept: f64 = -0.5,
    /// Minimum SVM margin for a recovery candidate.
    tau_detect: f64 = 0.0,
    recovery_min_area_ratio: f64 = 0.5,
    recovery_max_occluder_overlap: f64 = 0.3,
    /// Local search window size relative to the occluder.
    search_scale: f64 = 2.0,
    bin_width_mm: f64 = 50.0,
    /// Per-frame rate of the target depth model update.
    update_rate: f64 = 0.5,
    gate_sigmas: f64 = 3.0,
    gate_slack_mm: f64 = 200.0,
    recenter_expand: f64 = 1.4,
    cell_size: usize = 8,
    hog_bins: usize = 9,
    hog_clip: f64 = 0.2,
    hog_norm_eps: f64 = 1e-6,
    template_min_cells: usize = 4,
    template_max_cells: usize = 12,
    pyramid_step: f64 = 1.2,
    /// Detections kept per frame after non-maximum suppression.
    detector_top_k: usize = 20,
    svm_c: f64 = 10.0,
    svm_max_epochs: usize = 1000,
    svm_tolerance: f64 = 1e-6,
    positive_cache: usize = 50,
    negative_cache: usize = 200,
    /// Random negatives drawn from the first frame.
    init_negatives: usize = 50,
    hard_negative_margin: f64 = -1.0,
    max_negative_overlap: f64 = 0.3,
    max_negatives_per_frame: usize = 20,
    scale_negative_factor: f64 = 1.2,
    flow_grid: usize = 10,
    flow_levels: usize = 3,
    flow_half_window: usize = 4,
    flow_max_iterations: usize = 20,
    flow_fb_threshold: f64 = 2.0,
    flow_min_survival: f64 = 0.2,
    flow_min_ncc: f64 = 0.5,
    flow_max_scale_change: f64 = 0.1,
    seg_max_depth_step_mm: u16 = 100,
    seg_max_color_diff: u8 = 30,
    seg_min_area_ratio: f64 = 0.05,
    seed: u64 = 0,
}

impl TrackerConfig {
    /// Parses config text. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = TrackerConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Config {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|msg| Error::Config {
            path: origin.to_string(),
            line: 0,
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let checks: [(bool, &str); 16] = [
            (self.alpha >= 0.0, "alpha must be >= 0"),
            (
                self.occ_enter_threshold > 0.0 && self.occ_enter_threshold < 1.0,
                "occ_enter_threshold must be in (0, 1)",
            ),
            (
                (0.0..=1.0).contains(&self.occ_min_near_ratio),
                "occ_min_near_ratio must be in [0, 1]",
            ),
            (self.update_rate > 0.0 && self.update_rate <= 1.0, "update_rate must be in (0, 1]"),
            (self.bin_width_mm > 0.0, "bin_width_mm must be positive"),
            (self.cell_size >= 2, "cell_size must be at least 2"),
            (self.hog_bins >= 1, "hog_bins must be at least 1"),
            (
                self.template_min_cells >= 1 && self.template_min_cells <= self.template_max_cells,
                "template cell limits must satisfy 1 <= min <= max",
            ),
            (self.pyramid_step > 1.0, "pyramid_step must exceed 1"),
            (self.svm_c > 0.0, "svm_c must be positive"),
            (self.positive_cache >= 1 && self.negative_cache >= 1, "sample caches need room"),
            (self.scale_negative_factor == 0.0 || self.scale_negative_factor > 1.0, "scale_negative_factor must be 0 or exceed 1"),
            (self.flow_grid >= 1 && self.flow_levels >= 1, "flow grid and levels must be at least 1"),
            (self.search_scale > 0.0, "search_scale must be positive"),
            (self.recenter_expand >= 1.0, "recenter_expand must be at least 1"),
            (self.detector_top_k >= 1, "detector_top_k must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }

    pub fn hog(&self) -> HogParams {
        HogParams {
            cell_size: self.cell_size,
            bins: self.hog_bins,
            clip: self.hog_clip,
            norm_eps: self.hog_norm_eps,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            max_epochs: self.svm_max_epochs,
            tolerance: self.svm_tolerance,
            seed: self.seed,
        }
    }

    pub fn update(&self) -> UpdateParams {
        UpdateParams {
            hard_negative_margin: self.hard_negative_margin,
            max_negative_overlap: self.max_negative_overlap,
            max_negatives_per_frame: self.max_negatives_per_frame,
            scale_negative_factor: self.scale_negative_factor,
        }
    }

    pub fn flow(&self) -> FlowParams {
        FlowParams {
            grid: self.flow_grid,
            levels: self.flow_levels,
            half_window: self.flow_half_window,
            max_iterations: self.flow_max_iterations,
            fb_threshold: self.flow_fb_threshold,
            min_survival: self.flow_min_survival,
            min_ncc: self.flow_min_ncc,
            max_scale_change: self.flow_max_scale_change,
        }
    }

    pub fn gate(&self) -> GateParams {
        GateParams {
            sigmas: self.gate_sigmas,
            slack_mm: self.gate_slack_mm,
        }
    }

    pub fn segment(&self) -> SegmentParams {
        SegmentParams {
            max_depth_step_mm: self.seg_max_depth_step_mm,
            max_color_diff: self.seg_max_color_diff,
            min_area_ratio: self.seg_min_area_ratio,
        }
    }

    pub fn recovery(&self) -> RecoveryParams {
        RecoveryParams {
            min_area_ratio: self.recovery_min_area_ratio,
            max_occluder_overlap: self.recovery_max_occluder_overlap,
            tau_detect: self.tau_detect,
        }
    }
}
