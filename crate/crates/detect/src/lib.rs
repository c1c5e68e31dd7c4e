//! Object detectors for thermal and visible imagery.
//!
//! [`register_detector`] turns a [`DetectorSpec`] into a [`Detector`]. The
//! `reference-mini` architecture is implemented here and trains on a CPU;
//! the larger registered architectures run through an external adapter
//! executable with the same train/infer contract.

pub mod anchors;
pub mod bench;
mod detector;
pub mod error;
pub mod external;
pub mod mini;
pub mod nms;
pub mod spec;

pub use bench::{benchmark_fps, FpsReport};
pub use detector::{register_detector, Detector};
pub use error::{DetectError, Result};
pub use mini::{DetTrainRecord, InferOutput, MiniDetector};
pub use spec::{registered_pairs, Architecture, Backbone, DetectorSpec, Protocol};

/// Score threshold for inference feeding evaluation.
pub const EVAL_THRESHOLD: f64 = 0.01;
/// Score threshold for inference meant for display or weak labels.
pub const DISPLAY_THRESHOLD: f64 = 0.5;
