use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rgbdtrack::config::TrackerConfig;
use rgbdtrack::eval::{self, SequenceMetrics};
use rgbdtrack::io::{self, synth};
use rgbdtrack::tracker::track_sequence;
use rgbdtrack::{BoundingBox, Error, MaybeBox, Result, TrackMode};

/// Single-object RGBD tracking, evaluation and synthetic sequences.
#[derive(Debug, Parser)]
#[command(name = "rgbdtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track the object through a sequence directory.
    Track(TrackArgs),
    /// Score a results file against a sequence's ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic sequence.
    Synth(SynthArgs),
    /// Score several results files against one ground truth.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Sequence directory (rgb/, depth/, groundtruth.txt).
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value = "rgbdocc")]
    mode: TrackMode,
    /// key = value tracker configuration; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial box `x,y,w,h`; defaults to the first ground-truth box.
    #[arg(long, value_parser = parse_box)]
    init: Option<BoundingBox>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Sequence directory holding groundtruth.txt, or the file itself.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    rt: f64,
    /// Success-rate curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Per-frame CSV (overlap, center error, error type).
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Summary CSV; printed to stdout as well.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    curve_samples: usize,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["spec", "preset"])))]
struct SynthArgs {
    /// Scenario TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(synth::PRESETS))]
    preset: Option<String>,
    /// Seed for a preset (a spec file carries its own).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    rt: f64,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_box(s: &str) -> std::result::Result<BoundingBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("invalid number {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => BoundingBox::new(x, y, w, h).map_err(|e| e.to_string()),
        _ => Err("expected x,y,w,h".into()),
    }
}

fn groundtruth_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(io::GROUNDTRUTH_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run_track(a: &TrackArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => TrackerConfig::load(p)?,
        None => TrackerConfig::default(),
    };
    let seq = io::load_sequence(&a.seq)?;
    let init = match a.init {
        Some(b) => b,
        None => seq
            .groundtruth
            .first()
            .copied()
            .flatten()
            .ok_or_else(|| Error::Init("first ground-truth box is absent; pass --init".into()))?,
    };
    let boxes = track_sequence(&seq.frames, init, a.mode, &config)?;
    io::write_boxes(&a.out, &boxes)
}

fn load_pair(gt: &Path, results: &Path) -> Result<(Vec<MaybeBox>, Vec<MaybeBox>)> {
    let g = io::read_boxes(&groundtruth_path(gt))?;
    let t = io::read_boxes(results)?;
    Ok((t, g))
}

fn sequence_name(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let (t, g) = load_pair(&a.gt, &a.results)?;
    let m = eval::evaluate(&t, &g, a.rt, a.curve_samples)?;
    let summary = format!("{}\n{}\n", eval::SUMMARY_HEADER, eval::summary_row(&sequence_name(&a.results), &m));
    print!("{summary}");
    if let Some(p) = &a.summary {
        io::write_atomic(p, summary.as_bytes())?;
    }
    if let Some(p) = &a.frames {
        io::write_atomic(p, eval::frames_csv(&m).as_bytes())?;
    }
    if let Some(p) = &a.curve {
        io::write_atomic(p, eval::curve_csv(&m.curve).as_bytes())?;
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let spec = match (&a.spec, &a.preset) {
        (Some(p), _) => synth::ScenarioSpec::load(p)?,
        (None, Some(name)) => synth::preset(name, a.seed)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset `{name}`")))?,
        (None, None) => unreachable!("clap requires a source"),
    };
    synth::generate_to_dir(&spec, &a.out).map(drop)
}

fn run_compare(a: &CompareArgs) -> Result<()> {
    let g = io::read_boxes(&groundtruth_path(&a.gt))?;
    let mut table = format!("{}\n", eval::SUMMARY_HEADER);
    for r in &a.results {
        let t = io::read_boxes(r)?;
        let m: SequenceMetrics = eval::evaluate(&t, &g, a.rt, 20)?;
        table.push_str(&eval::summary_row(&r.display().to_string(), &m));
        table.push('\n');
    }
    print!("{table}");
    if let Some(p) = &a.out {
        io::write_atomic(p, table.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Track(a) => run_track(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::Compare(a) => run_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rgbdtrack: {e}");
            ExitCode::FAILURE
        }
    }
}
