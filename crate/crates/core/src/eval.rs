//! Benchmark metrics: overlap ratio, center position error, success rate,
//! failure-type decomposition, target speed and success curves.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{BoundingBox, MaybeBox};

/// Overlap ratio of a tracker box and a ground-truth box: intersection over
/// union when both exist, 1 when both are absent and -1 otherwise.
pub fn overlap(t: &MaybeBox, g: &MaybeBox) -> f64 {
    match (t, g) {
        (Some(a), Some(b)) => a.iou(b),
        (None, None) => 1.0,
        _ => -1.0,
    }
}

/// Distance between box centers.
pub fn cpe(t: &BoundingBox, g: &BoundingBox) -> f64 {
    let (a, b) = (t.center(), g.center());
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Fraction of frames whose overlap ratio strictly exceeds `r_t`.
pub fn success_rate(rs: &[f64], r_t: f64) -> Result<f64> {
    if rs.is_empty() {
        return Err(Error::Empty("overlap ratios"));
    }
    Ok(rs.iter().filter(|&&r| r > r_t).count() as f64 / rs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorType {
    None,
    /// Both boxes present but overlapping too little.
    I,
    /// A box was output although the target is fully occluded.
    II,
    /// No box was output although the target is visible.
    III,
}

impl ErrorType {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::None => "none",
            ErrorType::I => "I",
            ErrorType::II => "II",
            ErrorType::III => "III",
        }
    }
}

pub fn classify(t: &MaybeBox, g: &MaybeBox, r_t: f64) -> ErrorType {
    match (t, g) {
        (None, None) => ErrorType::None,
        (Some(_), None) => ErrorType::II,
        (None, Some(_)) => ErrorType::III,
        (Some(a), Some(b)) => {
            if a.iou(b) > r_t {
                ErrorType::None
            } else {
                ErrorType::I
            }
        }
    }
}

/// Fractions of frames per failure type.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRates {
    pub type_i: f64,
    pub type_ii: f64,
    pub type_iii: f64,
}

impl ErrorRates {
    pub fn total(&self) -> f64 {
        self.type_i + self.type_ii + self.type_iii
    }
}

fn check_lengths(t: &[MaybeBox], g: &[MaybeBox]) -> Result<()> {
    if t.len() != g.len() {
        return Err(Error::LengthMismatch {
            tracked: t.len(),
            truth: g.len(),
        });
    }
    if t.is_empty() {
        return Err(Error::Empty("box streams"));
    }
    Ok(())
}

/// Per-frame failure types and their rates.
pub fn classify_errors(t: &[MaybeBox], g: &[MaybeBox], r_t: f64) -> Result<(Vec<ErrorType>, ErrorRates)> {
    check_lengths(t, g)?;
    let types: Vec<ErrorType> = t.iter().zip(g).map(|(a, b)| classify(a, b, r_t)).collect();
    let n = types.len() as f64;
    let frac = |e: ErrorType| types.iter().filter(|&&x| x == e).count() as f64 / n;
    let rates = ErrorRates {
        type_i: frac(ErrorType::I),
        type_ii: frac(ErrorType::II),
        type_iii: frac(ErrorType::III),
    };
    Ok((types, rates))
}

/// Target speed statistics over consecutive ground-truth pairs where both
/// boxes exist: `(max, mean)` of `1 - overlap`.
pub fn speed_stat(g: &[MaybeBox]) -> Result<(f64, f64)> {
    let speeds: Vec<f64> = g
        .windows(2)
        .filter_map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => Some(1.0 - a.iou(b)),
            _ => None,
        })
        .collect();
    if speeds.is_empty() {
        return Err(Error::NoValidPair);
    }
    let max = speeds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max, speeds.iter().sum::<f64>() / speeds.len() as f64))
}

/// Success rate at `r_t = k / samples` for `k = 1 .. samples - 1`.
pub fn success_curve(rs: &[f64], samples: usize) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(Error::InvalidParameter(format!("curve needs at least 2 samples, got {samples}")));
    }
    (1..samples)
        .map(|k| {
            let r_t = k as f64 / samples as f64;
            success_rate(rs, r_t).map(|r| (r_t, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub r: f64,
    pub cpe: Option<f64>,
    pub error_type: ErrorType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub r_t: f64,
    pub frames: Vec<FrameScore>,
    pub success_rate: f64,
    pub errors: ErrorRates,
    /// Maximum and mean target speed; `None` without a consecutive pair.
    pub speed: Option<(f64, f64)>,
    pub curve: Vec<(f64, f64)>,
}

/// Every metric for one tracked sequence.
pub fn evaluate(t: &[MaybeBox], g: &[MaybeBox], r_t: f64, curve_samples: usize) -> Result<SequenceMetrics> {
    check_lengths(t, g)?;
    let rs: Vec<f64> = t.iter().zip(g).map(|(a, b)| overlap(a, b)).collect();
    let (types, errors) = classify_errors(t, g, r_t)?;
    let frames = t
        .iter()
        .zip(g)
        .zip(rs.iter().zip(types))
        .map(|((a, b), (&r, error_type))| FrameScore {
            r,
            cpe: match (a, b) {
                (Some(a), Some(b)) => Some(cpe(a, b)),
                _ => None,
            },
            error_type,
        })
        .collect();
    Ok(SequenceMetrics {
        r_t,
        frames,
        success_rate: success_rate(&rs, r_t)?,
        errors,
        speed: speed_stat(g).ok(),
        curve: success_curve(&rs, curve_samples)?,
    })
}

/// `frame,r,cpe,error_type`; undefined CPE is left empty.
pub fn frames_csv(m: &SequenceMetrics) -> String {
    let mut s = String::from("frame,r,cpe,error_type\n");
    for (i, f) in m.frames.iter().enumerate() {
        let cpe = f.cpe.map(|c| c.to_string()).unwrap_or_default();
        writeln!(s, "{i},{},{cpe},{}", f.r, f.error_type.as_str()).unwrap();
    }
    s
}

pub const SUMMARY_HEADER: &str = "sequence,R@rt,rt,typeI,typeII,typeIII,speed_max,speed_mean";

pub fn summary_row(name: &str, m: &SequenceMetrics) -> String {
    let (smax, smean) = m
        .speed
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .unwrap_or_default();
    format!(
        "{name},{},{},{},{},{},{smax},{smean}",
        m.success_rate, m.r_t, m.errors.type_i, m.errors.type_ii, m.errors.type_iii
    )
}

pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("r_t,R\n");
    for (r_t, r) in curve {
        writeln!(s, "{r_t},{r}").unwrap();
    }
    s
}
