//! Per-frame tracking loop: detection fused with optical flow, depth gating
//! and re-centering, online model updates and the occlusion state machine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrackerConfig;
use crate::depth_model::{self, DepthGaussian, DepthHistogram};
use crate::detector::{self, Detection, SampleCache, SvmModel};
use crate::error::{Error, Result};
use crate::features::{build_pyramid, FeaturePyramid, Template};
use crate::flow::{self, FlowResult, GrayPyramid};
use crate::occlusion::{self, OccluderModel, SearchContext};
use crate::types::{BoundingBox, Frame, MaybeBox, TrackMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Normal,
    Occluded,
}

/// Fused confidence `c_d + alpha * c_t * r`, where `r` is the overlap ratio
/// of the detection and the flow box (0 without a flow box).
pub fn fuse(c_d: f64, c_t: f64, det_box: &BoundingBox, flow_box: Option<&BoundingBox>, alpha: f64) -> f64 {
    let r = flow_box.map_or(0.0, |f| det_box.iou(f));
    c_d + alpha * c_t * r
}

/// What the tracker reports for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub index: u64,
    pub bbox: MaybeBox,
    pub phase: Phase,
    /// Fused confidence of the chosen detection, if one was accepted.
    pub confidence: Option<f64>,
    /// Occlusion likelihood of the chosen box (modes with a depth model).
    pub occlusion: Option<f64>,
    /// Whether the appearance and depth models were updated.
    pub updated: bool,
}

pub struct Tracker {
    mode: TrackMode,
    config: TrackerConfig,
    phase: Phase,
    model: SvmModel,
    cache: SampleCache,
    depth_g: Option<DepthGaussian>,
    occluder: Option<OccluderModel>,
    last_box: MaybeBox,
    last_accepted: BoundingBox,
    last_index: u64,
    last_gray: GrayPyramid,
    size: (u32, u32),
}

impl std::fmt::Debug for Tracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracker")
            .field("mode", &self.mode)
            .field("phase", &self.phase)
            .field("depth_g", &self.depth_g)
            .field("last_box", &self.last_box)
            .field("last_index", &self.last_index)
            .finish_non_exhaustive()
    }
}

impl Tracker {
    /// Starts tracking `bbox` in `frame`.
    pub fn new(frame: &Frame, bbox: BoundingBox, mode: TrackMode, config: TrackerConfig) -> Result<Self> {
        config.validate().map_err(Error::InvalidParameter)?;
        let (w, h) = frame.dimensions();
        let bbox = bbox
            .clip(w, h)
            .ok_or_else(|| Error::Init(format!("box {bbox} lies outside the {w}x{h} frame")))?;

        let depth_g = if mode.uses_depth_model() {
            let hist = depth_model::histogram(&frame.depth, &bbox, config.bin_width_mm);
            match depth_model::fit_gaussian(&hist) {
                Ok(g) => Some(g),
                // Occlusion reasoning is impossible without a depth model.
                Err(_) if mode.handles_occlusion() => {
                    return Err(Error::Init("no valid depth inside the initial box".into()));
                }
                Err(_) => None,
            }
        } else {
            None
        };

        let hog = config.hog();
        let template = Template::from_box(&bbox, config.cell_size, config.template_min_cells, config.template_max_cells);
        let mut model = SvmModel::zeros(template, config.hog_bins, config.svm_c);
        let mut cache = SampleCache::new(config.positive_cache, config.negative_cache);
        let pyramid = Self::pyramid_for(frame, &template, mode, &config);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let min_distance = bbox.w.max(bbox.h) * 0.75;
        for b in detector::sample_negative_boxes(&bbox, w, h, config.init_negatives, min_distance, &mut rng) {
            cache.push_negative(pyramid.extract(&b, &template, &hog)?.to_vec());
        }
        if cache.num_negatives() == 0 {
            return Err(Error::Init("frame has no room for negative samples".into()));
        }
        detector::update(&mut model, &mut cache, &bbox, &pyramid, &hog, &config.svm(), &config.update())?;

        Ok(Tracker {
            mode,
            phase: Phase::Normal,
            model,
            cache,
            depth_g,
            occluder: None,
            last_box: Some(bbox),
            last_accepted: bbox,
            last_index: frame.index,
            last_gray: GrayPyramid::from_frame(frame, config.flow_levels),
            size: (w, h),
            config,
        })
    }

    fn pyramid_for(frame: &Frame, template: &Template, mode: TrackMode, config: &TrackerConfig) -> FeaturePyramid {
        build_pyramid(
            frame,
            config.pyramid_step,
            (template.pixel_width(), template.pixel_height()),
            mode,
            &config.hog(),
        )
    }

    pub fn mode(&self) -> TrackMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn depth_model(&self) -> Option<&DepthGaussian> {
        self.depth_g.as_ref()
    }

    pub fn occluder(&self) -> Option<&OccluderModel> {
        self.occluder.as_ref()
    }

    pub fn svm_model(&self) -> &SvmModel {
        &self.model
    }

    pub fn last_box(&self) -> MaybeBox {
        self.last_box
    }

    /// Top detections for `frame` under the current model, without changing
    /// any state.
    pub fn detect(&self, frame: &Frame) -> Vec<Detection> {
        let pyramid = Self::pyramid_for(frame, &self.model.template, self.mode, &self.config);
        detector::score_windows(&pyramid, &self.model, self.config.detector_top_k)
    }

    /// Processes the next frame.
    pub fn step(&mut self, frame: &Frame) -> Result<FrameResult> {
        if frame.dimensions() != self.size {
            let (w, h) = frame.dimensions();
            return Err(Error::FrameSizeMismatch {
                rgb_w: w,
                rgb_h: h,
                depth_w: self.size.0,
                depth_h: self.size.1,
            });
        }
        if frame.index != self.last_index + 1 {
            return Err(Error::FrameOrder {
                last: self.last_index,
                got: frame.index,
            });
        }
        let gray = GrayPyramid::from_frame(frame, self.config.flow_levels);
        let pyramid = Self::pyramid_for(frame, &self.model.template, self.mode, &self.config);
        let result = match self.phase {
            Phase::Normal => self.step_normal(frame, &gray, &pyramid)?,
            Phase::Occluded => self.step_occluded(frame, &gray, &pyramid),
        };
        self.last_gray = gray;
        self.last_index = frame.index;
        Ok(result)
    }

    /// Gate radius and fit of the target-consistent pixels of `b`, falling
    /// back to the tracked model when none agree with it.
    fn current_fit(&self, frame: &Frame, b: &BoundingBox, g: &DepthGaussian) -> DepthGaussian {
        let radius = g.gate_radius(self.config.gate_sigmas, self.config.gate_slack_mm);
        let consistent = occlusion::pixels_where(frame, b, |d| (d - g.mu).abs() <= radius);
        let hist = DepthHistogram::from_depths(
            consistent.iter().map(|&(x, y)| frame.depth_at(x, y)),
            self.config.bin_width_mm,
        );
        depth_model::fit_gaussian(&hist).unwrap_or(*g)
    }

    fn step_normal(&mut self, frame: &Frame, gray: &GrayPyramid, pyramid: &FeaturePyramid) -> Result<FrameResult> {
        let cfg = &self.config;
        let flow_res = match self.last_box {
            Some(b) => flow::propagate_pyramids(&self.last_gray, gray, &b, &cfg.flow()),
            None => FlowResult::failed(),
        };
        let (w, h) = self.size;
        let flow_box = flow_res.bbox.and_then(|b| b.clip(w, h));
        let depth_active = self.mode.uses_depth_features();
        let mut detections = detector::score_windows(pyramid, &self.model, cfg.detector_top_k);
        if depth_active {
            detections = depth_model::gate(detections, &frame.depth, self.depth_g.as_ref(), &cfg.gate());
        }
        // The flow box itself competes too, scored by the classifier; with
        // alpha = 0 the flow plays no part at all.
        if let (true, Some(fb)) = (cfg.alpha > 0.0, flow_box) {
            if let Ok(f) = pyramid.extract(&fb, &self.model.template, &cfg.hog()) {
                let flow_det = Detection {
                    bbox: fb,
                    score: self.model.score(&f.to_vec()),
                };
                if depth_active {
                    detections.extend(depth_model::gate(vec![flow_det], &frame.depth, self.depth_g.as_ref(), &cfg.gate()));
                } else {
                    detections.push(flow_det);
                }
            }
        }
        let best = detections
            .iter()
            .map(|d| (fuse(d.score, flow_res.confidence, &d.bbox, flow_box.as_ref(), cfg.alpha), d.bbox))
            .filter(|(c, _)| *c > cfg.tau_accept)
            .max_by(|a, b| a.0.total_cmp(&b.0));

        // Nothing acceptable: follow the flow, else hold position. The
        // occlusion test still runs on that box, but the models learn nothing.
        let (confidence, chosen) = match best {
            Some((c, b)) => match (depth_active, self.depth_g.as_ref()) {
                (true, Some(g)) => {
                    let fit = self.current_fit(frame, &b, g);
                    (Some(c), depth_model::recenter(&b, &frame.depth, &fit, cfg.recenter_expand))
                }
                _ => (Some(c), b),
            },
            None => match flow_box.or(self.last_box) {
                Some(b) => (None, b),
                None => {
                    return Ok(FrameResult {
                        index: frame.index,
                        bbox: None,
                        phase: Phase::Normal,
                        confidence: None,
                        occlusion: None,
                        updated: false,
                    })
                }
            },
        };

        let mut occlusion_o = None;
        let mut observed = None;
        if let Some(g) = self.depth_g {
            let hist = depth_model::histogram(&frame.depth, &chosen, cfg.bin_width_mm);
            if hist.total > 0 {
                let fit = self.current_fit(frame, &chosen, &g);
                occlusion_o = depth_model::occlusion_likelihood(&hist, &fit).ok();
                observed = Some(fit);
            }
        }

        if let (true, Some(o), Some(fit)) = (self.mode.handles_occlusion(), occlusion_o, observed) {
            // A high O alone can come from the target's own depth spread;
            // entering also needs a surface nearer than the target's gate.
            let radius = fit.gate_radius(cfg.gate_sigmas, cfg.gate_slack_mm);
            let near = occlusion::pixels_where(frame, &chosen, |d| d < fit.mu - radius).len() as f64;
            if o > cfg.occ_enter_threshold && near >= cfg.occ_min_near_ratio * chosen.area() {
                if let Ok(occ) = occlusion::init_occluder(frame, &chosen, &fit, &cfg.gate(), cfg.bin_width_mm) {
                    let visible = occlusion::pixels_where(frame, &self.last_accepted, |d| (d - fit.mu).abs() <= radius);
                    let out = occlusion::bounding_rect(&visible);
                    self.phase = Phase::Occluded;
                    self.occluder = Some(occ);
                    self.last_box = out;
                    return Ok(FrameResult {
                        index: frame.index,
                        bbox: out,
                        phase: Phase::Occluded,
                        confidence,
                        occlusion: occlusion_o,
                        updated: false,
                    });
                }
            }
        }

        let updated = match confidence {
            Some(_) => self.accept(chosen, pyramid, observed)?,
            None => {
                self.last_box = Some(chosen);
                false
            }
        };
        Ok(FrameResult {
            index: frame.index,
            bbox: Some(chosen),
            phase: Phase::Normal,
            confidence,
            occlusion: occlusion_o,
            updated,
        })
    }

    fn accept(&mut self, b: BoundingBox, pyramid: &FeaturePyramid, observed: Option<DepthGaussian>) -> Result<bool> {
        let cfg = &self.config;
        // A box far off the template's aspect shows a partly hidden target;
        // learning it would drift the model toward the fragment.
        let t = &self.model.template;
        let skew = (b.w / b.h) / (t.cells_x as f64 / t.cells_y as f64);
        let learn = (0.5..=2.0).contains(&skew);
        if learn {
            detector::update(&mut self.model, &mut self.cache, &b, pyramid, &cfg.hog(), &cfg.svm(), &cfg.update())?;
        }
        if let (Some(g), Some(obs)) = (self.depth_g, observed) {
            self.depth_g = Some(depth_model::update_gaussian(&g, &obs, cfg.update_rate));
        }
        self.last_box = Some(b);
        self.last_accepted = b;
        Ok(learn)
    }

    fn step_occluded(&mut self, frame: &Frame, gray: &GrayPyramid, pyramid: &FeaturePyramid) -> FrameResult {
        let cfg = &self.config;
        let occ = self.occluder.as_ref().expect("occluded phase has an occluder");
        let g = self.depth_g.expect("occlusion handling needs a depth model");
        let occ = occlusion::track_occluder(&self.last_gray, gray, frame, occ, &cfg.flow(), &cfg.gate(), cfg.bin_width_mm);
        let ctx = SearchContext {
            frame,
            pyramid,
            model: &self.model,
            hog: &cfg.hog(),
            target_g: &g,
            gate: &cfg.gate(),
            segment: &cfg.segment(),
            search_scale: cfg.search_scale,
            detector_top_k: cfg.detector_top_k,
        };
        let candidates = occlusion::local_search(&ctx, &occ);
        let recovered = occlusion::try_recover(&candidates, &occ, &cfg.recovery());
        let confidence = recovered.and_then(|b| candidates.iter().find(|c| c.bbox == b)).map(|c| c.svm_score);
        // Like the entry output, a recovered box is trimmed to the target's
        // visible pixels.
        let recovered = recovered.map(|b| {
            let radius = g.gate_radius(cfg.gate_sigmas, cfg.gate_slack_mm);
            occlusion::bounding_rect(&occlusion::pixels_where(frame, &b, |d| (d - g.mu).abs() <= radius)).unwrap_or(b)
        });
        match recovered {
            Some(b) => {
                self.phase = Phase::Normal;
                self.occluder = None;
                self.last_box = Some(b);
                self.last_accepted = b;
            }
            None => {
                self.occluder = Some(occ);
                self.last_box = None;
            }
        }
        FrameResult {
            index: frame.index,
            bbox: recovered,
            phase: self.phase,
            confidence,
            occlusion: None,
            updated: false,
        }
    }
}

/// Runs a tracker over a whole sequence. The first frame's result is the
/// initial box.
pub fn track_sequence(frames: &[Frame], init: BoundingBox, mode: TrackMode, config: &TrackerConfig) -> Result<Vec<MaybeBox>> {
    let Some((first, rest)) = frames.split_first() else {
        return Err(Error::Empty("sequence"));
    };
    let mut tracker = Tracker::new(first, init, mode, config.clone())?;
    let mut out = Vec::with_capacity(frames.len());
    out.push(tracker.last_box());
    for f in rest {
        out.push(tracker.step(f)?.bbox);
    }
    Ok(out)
}
