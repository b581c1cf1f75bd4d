use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("rgb image is {rgb_w}x{rgb_h} but depth map is {depth_w}x{depth_h}")]
    FrameSizeMismatch {
        rgb_w: u32,
        rgb_h: u32,
        depth_w: u32,
        depth_h: u32,
    },

    #[error("image {width}x{height} is too small: need at least {min_width}x{min_height}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        min_width: u32,
        min_height: u32,
    },

    #[error("region is empty after clipping to the frame")]
    DegenerateRegion,

    #[error("training set needs at least one positive and one negative sample (got {positives} / {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("depth histogram has no valid pixels")]
    EmptyHistogram,

    #[error("no occluder pixels inside the target box")]
    EmptyOccluder,

    #[error("tracker init: {0}")]
    Init(String),

    #[error("frame {got} does not follow frame {last}")]
    FrameOrder { last: u64, got: u64 },

    #[error("stream lengths differ: {tracked} tracked vs {truth} ground truth")]
    LengthMismatch { tracked: usize, truth: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no consecutive pair of ground-truth boxes in the stream")]
    NoValidPair,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config {path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Load { path: PathBuf, msg: String },

    #[error("scenario spec is invalid: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
