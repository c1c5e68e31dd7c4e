//! Experiment pipelines for style-consistent thermal object detection and
//! the `thermoscope` command line.
//!
//! Every pipeline reads a [`PipelineConfig`], writes its artifacts under the
//! configured output directory and returns one [`RunRecord`] per evaluation.
//! All randomness derives from the config seed through named substreams.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipelines;
pub mod record;
pub mod steps;
pub mod tools;

pub use cli::{main_with, Cli, Command};
pub use config::{PipelineConfig, PipelineKind};
pub use error::{PipelineError, Result};
pub use pipelines::{run_baseline, run_bench, run_cdmt, run_odsc, run_sanity_swap, run_weak_label};
pub use record::RunRecord;
pub use tools::{run_eval, run_ingest, run_style_train, run_stylize, synthesize};
