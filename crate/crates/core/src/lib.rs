//! Single-object RGBD tracking: RGBD-HOG sliding-window detection with an
//! online linear SVM, optical-flow fusion, a depth model with occlusion
//! handling, benchmark metrics and a synthetic sequence generator.

pub mod config;
pub mod depth_model;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod flow;
pub mod io;
pub mod occlusion;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{BoundingBox, DepthMap, Frame, MaybeBox, TrackMode, MAX_DEPTH_MM};
