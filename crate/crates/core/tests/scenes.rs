//! Depth model, occluder, local search, detector and tracker behavior on
//! generated scenes whose answer is known by construction.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rgbdtrack::config::TrackerConfig;
use rgbdtrack::depth_model::{self, DepthGaussian, DepthHistogram, GateParams};
use rgbdtrack::features::{build_pyramid, extract_rgbd_hog};
use rgbdtrack::flow::GrayPyramid;
use rgbdtrack::io::synth::{self, OccluderAppearance, OccluderSpec, ScenarioSpec};
use rgbdtrack::occlusion::{self, SearchContext};
use rgbdtrack::tracker::{Phase, Tracker};
use rgbdtrack::{BoundingBox, Frame, TrackMode};

#[test]
fn gaussian_fit_recovers_monte_carlo_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(2500.0, 200.0).unwrap();
    let depths = (0..100_000).map(|_| {
        let d: f64 = normal.sample(&mut rng);
        d.round() as u16
    });
    let g = depth_model::fit_gaussian(&DepthHistogram::from_depths(depths, 50.0)).unwrap();
    assert!((g.mu - 2500.0).abs() <= 20.0, "mu {}", g.mu);
    assert!((g.sigma - 200.0).abs() <= 20.0, "sigma {}", g.sigma);
}

#[test]
fn plate_over_forty_percent_of_the_box() {
    let (f, target) = plate_frame();
    let h = depth_model::histogram(&f.depth, &target, 50.0);
    let o = depth_model::occlusion_likelihood(&h, &DepthGaussian::new(3000.0, 100.0)).unwrap();
    assert!((o - 0.40).abs() <= 0.02, "O = {o}");
}

#[test]
fn recenter_finds_an_offset_target() {
    // Target 30x30 at (64, 40); the box is shifted 6 px to the right of it.
    let f = frame_from(
        0,
        160,
        120,
        |_, _| [90, 90, 90],
        |x, y| {
            let base = if (64..94).contains(&x) && (40..70).contains(&y) { 2000 } else { 5000 };
            (base + depth_noise(x, y, 4, 10)) as u16
        },
    );
    let b = bb(70.0, 40.0, 30.0, 30.0);
    let out = depth_model::recenter(&b, &f.depth, &DepthGaussian::new(2000.0, 50.0), 1.4);
    let (cx, cy) = out.center();
    assert!((cx - 79.0).abs() <= 2.0 && (cy - 55.0).abs() <= 2.0, "{out:?}");
    assert_eq!((out.w, out.h), (30.0, 30.0));
}

#[test]
fn occluder_from_half_plate() {
    let f = frame_from(
        0,
        160,
        120,
        |x, y| if x < 60 { [20, 200, 20] } else { texture(x as i64, y as i64, 1) },
        |x, y| {
            let base = if (40..60).contains(&x) { 1000 } else { 3000 };
            (base + depth_noise(x, y, 5, 10)) as u16
        },
    );
    let target = bb(40.0, 30.0, 40.0, 50.0);
    let occ = occlusion::init_occluder(&f, &target, &DepthGaussian::new(3000.0, 100.0), &GateParams::default(), 50.0).unwrap();
    assert!((occ.depth.mu - 1000.0).abs() <= 60.0, "mu {}", occ.depth.mu);
    assert!(occ.bbox.iou(&bb(40.0, 30.0, 20.0, 50.0)) >= 0.95, "{:?}", occ.bbox);
    assert_eq!(occ.target_area_pre, target.area());
}

/// A 30x40 textured plate at 1000 mm whose left edge is at `x0`, over a
/// textured 6000 mm background.
fn plate_at(index: u64, x0: i64) -> Frame {
    frame_from(
        index,
        200,
        120,
        |x, y| {
            let (x, y) = (x as i64, y as i64);
            if (x0..x0 + 30).contains(&x) && (40..80).contains(&y) {
                texture(x - x0, y, 7)
            } else {
                texture(x, y, 8)
            }
        },
        |x, y| {
            let xi = x as i64;
            let base = if (x0..x0 + 30).contains(&xi) && (40..80).contains(&y) { 1000 } else { 6000 };
            (base + depth_noise(x, y, index, 10)) as u16
        },
    )
}

fn track_plate(xs: &[i64]) -> Vec<BoundingBox> {
    let cfg = TrackerConfig::default();
    let first = plate_at(0, xs[0]);
    let target_box = bb(xs[0] as f64 - 10.0, 30.0, 60.0, 60.0);
    let mut occ = occlusion::init_occluder(&first, &target_box, &DepthGaussian::new(6000.0, 100.0), &cfg.gate(), 50.0).unwrap();
    let mut boxes = vec![occ.bbox];
    let mut prev = GrayPyramid::from_frame(&first, cfg.flow_levels);
    for (i, &x0) in xs.iter().enumerate().skip(1) {
        let cur = plate_at(i as u64, x0);
        let cur_pyr = GrayPyramid::from_frame(&cur, cfg.flow_levels);
        occ = occlusion::track_occluder(&prev, &cur_pyr, &cur, &occ, &cfg.flow(), &cfg.gate(), 50.0);
        boxes.push(occ.bbox);
        prev = cur_pyr;
    }
    boxes
}

#[test]
fn static_occluder_box_stays_put() {
    let boxes = track_plate(&[50, 50, 50, 50]);
    assert!(boxes[0].iou(&bb(50.0, 40.0, 30.0, 40.0)) >= 0.95);
    for b in &boxes[1..] {
        assert!((b.x - boxes[0].x).abs() <= 1.0 && (b.y - boxes[0].y).abs() <= 1.0, "{b:?}");
    }
}

#[test]
fn occluder_box_follows_a_translating_plate() {
    let xs: Vec<i64> = (0..8).map(|k| 30 + 5 * k).collect();
    let boxes = track_plate(&xs);
    for w in boxes.windows(2) {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        assert!((dx - 5.0).abs() <= 1.0 && dy.abs() <= 1.0, "step ({dx}, {dy})");
    }
}

/// Static target with an occluder that covers its left half on frame 1.
fn half_emerged_scene() -> ScenarioSpec {
    let mut s = synth::preset("static", 3).unwrap();
    s.frames = 2;
    s.occluder = Some(OccluderSpec {
        depth_mm: 1500.0,
        sweep: vec![[0.0, 0.0], [1.0, 0.5]],
        height_ratio: 1.5,
        appearance: OccluderAppearance::Own,
        hue: 200.0,
    });
    s
}

#[test]
fn local_search_finds_the_visible_half() {
    let seq = synth::generate(&half_emerged_scene()).unwrap();
    let (pre, visible) = (seq.groundtruth[0].unwrap(), seq.groundtruth[1].unwrap());
    assert!((visible.w - pre.w / 2.0).abs() <= 1.0 && visible.x > pre.x);

    let cfg = TrackerConfig::default();
    let mode = TrackMode::RgbdOcc;
    let tracker = Tracker::new(&seq.frames[0], pre, mode, cfg.clone()).unwrap();
    let g = *tracker.depth_model().unwrap();
    let frame = &seq.frames[1];
    let occ = occlusion::init_occluder(frame, &pre, &g, &cfg.gate(), cfg.bin_width_mm).unwrap();
    let template = tracker.svm_model().template;
    let hog = cfg.hog();
    let pyramid = build_pyramid(frame, cfg.pyramid_step, (template.pixel_width(), template.pixel_height()), mode, &hog);
    let ctx = SearchContext {
        frame,
        pyramid: &pyramid,
        model: tracker.svm_model(),
        hog: &hog,
        target_g: &g,
        gate: &cfg.gate(),
        segment: &cfg.segment(),
        search_scale: cfg.search_scale,
        detector_top_k: cfg.detector_top_k,
    };
    let candidates = occlusion::local_search(&ctx, &occ);
    let best = candidates.iter().map(|c| c.bbox.iou(&visible)).fold(0.0, f64::max);
    assert!(best >= 0.5, "best overlap {best} over {} candidates", candidates.len());
}

fn square_scene(x: f64, y: f64, frames: usize) -> ScenarioSpec {
    let mut s = synth::preset("static", 5).unwrap();
    s.frames = frames;
    s.target.path = vec![[0.0, x, y]];
    s
}

#[test]
fn detector_round_trip_finds_the_trained_square() {
    let seq = synth::generate(&square_scene(100.0, 80.0, 4)).unwrap();
    let init = seq.groundtruth[0].unwrap();
    let tracker = Tracker::new(&seq.frames[0], init, TrackMode::Rgb, TrackerConfig::default()).unwrap();
    let top = tracker.detect(&seq.frames[3])[0];
    let (cx, cy) = top.bbox.center();
    assert!((cx - 120.0).abs() <= 4.0 && (cy - 100.0).abs() <= 4.0, "{:?}", top.bbox);
}

#[test]
fn update_lowers_the_score_of_a_distractor() {
    let seq = synth::generate(&square_scene(136.0, 96.0, 2)).unwrap();
    let init = seq.groundtruth[0].unwrap();
    let cfg = TrackerConfig::default();
    let mut tracker = Tracker::new(&seq.frames[0], init, TrackMode::Rgb, cfg.clone()).unwrap();

    // Frame 1 gets a mirrored copy of the target at (40, 40).
    let src = &seq.frames[1];
    let mut rgb = src.rgb.clone();
    for y in 0..40 {
        for x in 0..40 {
            rgb.put_pixel(40 + x, 40 + y, *src.rgb.get_pixel(136 + 39 - x, 96 + y));
        }
    }
    let frame = Frame::new(1, rgb, src.depth.clone()).unwrap();
    let distractor = bb(40.0, 40.0, 40.0, 40.0);
    let score = |t: &Tracker| {
        let m = t.svm_model();
        m.score(&extract_rgbd_hog(&frame, &distractor, &m.template, TrackMode::Rgb, &cfg.hog()).unwrap().to_vec())
    };
    let before = score(&tracker);
    assert!(before > cfg.hard_negative_margin, "distractor must be a hard negative, scored {before}");
    let r = tracker.step(&frame).unwrap();
    assert!(r.updated && r.bbox.unwrap().iou(&init) > 0.7, "{r:?}");
    let after = score(&tracker);
    assert!(after < before, "before {before}, after {after}");
}

#[test]
fn occlusion_scenario_absent_only_with_occlusion_handling() {
    let seq = synth::generate(&synth::preset("full_occlusion_recovery", 0).unwrap()).unwrap();
    let init = seq.groundtruth[0].unwrap();
    let covered: Vec<usize> = (0..seq.frames.len()).filter(|&i| seq.groundtruth[i].is_none()).collect();
    assert_eq!(covered, (40..=50).collect::<Vec<_>>());
    for mode in [TrackMode::Rgb, TrackMode::Rgbd, TrackMode::RgbdOcc] {
        let mut tracker = Tracker::new(&seq.frames[0], init, mode, TrackerConfig::default()).unwrap();
        for (i, f) in seq.frames.iter().enumerate().skip(1) {
            let r = tracker.step(f).unwrap();
            if mode.handles_occlusion() {
                if covered.contains(&i) {
                    assert!(r.bbox.is_none(), "{mode}: box on fully covered frame {i}");
                    assert_eq!(r.phase, Phase::Occluded);
                }
            } else {
                assert!(r.bbox.is_some(), "{mode}: no box on frame {i}");
            }
        }
    }
}
