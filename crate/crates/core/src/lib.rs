//! Datasets, evaluation and shared utilities for thermal-domain detection
//! experiments.

pub mod data;
pub mod eval;
pub mod imageio;
pub mod seed;
pub mod synth;

pub use data::{
    BoundingBox, DataError, DatasetManifest, IngestReport, LabeledImage, ObjectAnnotation, Spectrum, Split,
};
pub use eval::{Detection, EvalError, EvalReport, EvalSettings, Interpolation};
pub use imageio::{ImageIoError, PlanarImage};
