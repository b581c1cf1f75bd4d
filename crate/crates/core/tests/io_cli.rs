//! Sequence loading, box files, the synthetic generator and the command line.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use rgbdtrack::io::{self, synth};
use rgbdtrack::Error;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgbdtrack")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn copy_dir(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let p = e.unwrap().path();
        let to = dst.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &to);
        } else {
            std::fs::copy(&p, &to).unwrap();
        }
    }
}

/// Parses the data row of a summary CSV into its numeric fields.
fn summary_fields(csv: &str) -> Vec<f64> {
    let row = csv.lines().nth(1).unwrap();
    row.split(',').skip(1).map(|f| f.parse().unwrap_or(f64::NAN)).collect()
}

#[test]
fn fixture_loads_with_matching_counts() {
    let seq = io::load_sequence(&fixture()).unwrap();
    assert_eq!(seq.frames.len(), 3);
    assert_eq!(seq.groundtruth.len(), 3);
    assert_eq!(seq.frames[0].dimensions(), (96, 72));
    assert_eq!(seq.groundtruth[0], Some(bb(30.0, 20.0, 32.0, 32.0)));
    assert!(seq.frames.iter().enumerate().all(|(i, f)| f.index == i as u64));
}

#[test]
fn frame_count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    std::fs::remove_file(dir.path().join("depth").join(io::frame_file_name(2))).unwrap();
    let err = io::load_sequence(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Load { .. }));
    assert!(err.to_string().contains("frame count mismatch"), "{err}");

    let out = cli(&["track", "--seq", dir.path().to_str().unwrap(), "--out", dir.path().join("r.txt").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("rgbdtrack: "));
}

#[test]
fn missing_ground_truth_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    let gt = dir.path().join(io::GROUNDTRUTH_FILE);
    let text = std::fs::read_to_string(&gt).unwrap();
    std::fs::write(&gt, text.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(io::load_sequence(dir.path()).is_err());
}

#[test]
fn save_and_load_round_trip() {
    let seq = io::load_sequence(&fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::save_sequence(dir.path(), &seq).unwrap();
    let back = io::load_sequence(dir.path()).unwrap();
    assert_eq!(back.groundtruth, seq.groundtruth);
    for (a, b) in back.frames.iter().zip(&seq.frames) {
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
    }
}

#[test]
fn track_writes_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.txt");
    for mode in ["rgb", "rgbd", "rgbocc", "rgbdocc"] {
        ok(cli(&["track", "--seq", fixture().to_str().unwrap(), "--mode", mode, "--init", "30,20,32,32", "--out", out.to_str().unwrap()]));
        let boxes = io::read_boxes(&out).unwrap();
        assert_eq!(boxes.len(), 3, "{mode}");
        assert_eq!(boxes[0], Some(bb(30.0, 20.0, 32.0, 32.0)));
    }
}

#[test]
fn track_honors_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tracker.cfg");
    std::fs::write(&cfg, "# smaller pyramid step\npyramid_step = 1.1\n").unwrap();
    let out = dir.path().join("res.txt");
    ok(cli(&["track", "--seq", fixture().to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert_eq!(io::read_boxes(&out).unwrap().len(), 3);

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let res = cli(&["track", "--seq", fixture().to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("tracker.cfg:1: unknown key"));
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let gt = fixture().join(io::GROUNDTRUTH_FILE);
    let dir = tempfile::tempdir().unwrap();
    let (frames, curve) = (dir.path().join("frames.csv"), dir.path().join("curve.csv"));
    let stdout = ok(cli(&[
        "eval",
        "--gt",
        fixture().to_str().unwrap(),
        "--results",
        gt.to_str().unwrap(),
        "--frames",
        frames.to_str().unwrap(),
        "--curve",
        curve.to_str().unwrap(),
    ]));
    let f = summary_fields(&stdout);
    assert_eq!(&f[..5], &[1.0, 0.5, 0.0, 0.0, 0.0]);
    assert_eq!(std::fs::read_to_string(&frames).unwrap().lines().count(), 4);
    let curve = std::fs::read_to_string(&curve).unwrap();
    assert!(curve.lines().skip(1).all(|l| l.ends_with(",1")), "{curve}");
}

#[test]
fn all_absent_results_are_all_type_iii() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("absent.txt");
    io::write_boxes(&res, &[None, None, None]).unwrap();
    let stdout = ok(cli(&["eval", "--gt", fixture().to_str().unwrap(), "--results", res.to_str().unwrap()]));
    let f = summary_fields(&stdout);
    assert_eq!((f[0], f[2], f[3], f[4]), (0.0, 0.0, 0.0, 1.0));
}

#[test]
fn eval_rejects_a_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("short.txt");
    io::write_boxes(&res, &[None, None]).unwrap();
    let out = cli(&["eval", "--gt", fixture().to_str().unwrap(), "--results", res.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2"));
}

#[test]
fn compare_lists_every_results_file() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent.txt");
    io::write_boxes(&absent, &[None, None, None]).unwrap();
    let gt = fixture().join(io::GROUNDTRUTH_FILE);
    let table = dir.path().join("table.csv");
    let stdout = ok(cli(&[
        "compare",
        "--gt",
        gt.to_str().unwrap(),
        "--results",
        gt.to_str().unwrap(),
        absent.to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]));
    assert_eq!(stdout.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(&table).unwrap(), stdout);
}

#[test]
fn synth_cli_matches_the_library_generator() {
    let dir = tempfile::tempdir().unwrap();
    ok(cli(&["synth", "--preset", "static", "--seed", "4", "--out", dir.path().to_str().unwrap()]));
    let loaded = io::load_sequence(dir.path()).unwrap();
    let direct = synth::generate(&synth::preset("static", 4).unwrap()).unwrap();
    assert_eq!(loaded.groundtruth, direct.groundtruth);
    assert!(loaded.frames.iter().zip(&direct.frames).all(|(a, b)| a.rgb == b.rgb && a.depth == b.depth));

    let spec = synth::ScenarioSpec::load(&dir.path().join("scenario.toml")).unwrap();
    assert_eq!(spec, synth::preset("static", 4).unwrap());
}

#[test]
fn cli_rejects_bad_arguments() {
    for args in [
        vec!["synth", "--preset", "nope", "--out", "/tmp/x"],
        vec!["track", "--seq", "/nonexistent/seq", "--out", "/tmp/x.txt"],
        vec!["track", "--seq", "/tmp", "--init", "1,2,3", "--out", "/tmp/x.txt"],
        vec!["eval", "--gt", "/nonexistent", "--results", "/nonexistent"],
    ] {
        assert!(!cli(&args).status.success(), "{args:?}");
    }
}

#[test]
fn generated_target_depth_matches_the_scenario_statistically() {
    let mut spec = synth::preset("static", 9).unwrap();
    spec.frames = 1;
    spec.target.relief_mm = 0.0;
    spec.noise.hole_prob = 0.0;
    let sigma = spec.noise.depth_sigma_mm;
    let seq = synth::generate(&spec).unwrap();
    let b = seq.groundtruth[0].unwrap();
    let f = &seq.frames[0];
    let mut samples = Vec::new();
    'outer: for y in b.y as u32..(b.y + b.h) as u32 {
        for x in b.x as u32..(b.x + b.w) as u32 {
            samples.push(f.depth_at(x, y) as f64);
            if samples.len() == 1000 {
                break 'outer;
            }
        }
    }
    assert_eq!(samples.len(), 1000);
    let mean = samples.iter().sum::<f64>() / 1000.0;
    let bound = 3.0 * sigma / 1000f64.sqrt();
    assert!((mean - spec.target.depth_mm).abs() <= bound, "mean {mean}, bound {bound}");
}

#[test]
fn generated_holes_are_zero_depth_at_the_requested_rate() {
    let mut spec = synth::preset("static", 2).unwrap();
    spec.frames = 1;
    spec.noise.hole_prob = 0.05;
    let seq = synth::generate(&spec).unwrap();
    let d = &seq.frames[0].depth;
    let holes = d.iter().filter(|&&v| v == 0).count() as f64 / d.len() as f64;
    // Binomial standard error over 76800 pixels is below 0.001.
    assert!((holes - 0.05).abs() <= 0.005, "hole rate {holes}");
}
