//! Throughput measurement of end-to-end inference.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thermoscope_core::LabeledImage;

use crate::detector::Detector;
use crate::error::{DetectError, Result};
use crate::EVAL_THRESHOLD;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub mean_fps: f64,
    pub std_fps: f64,
    /// Images per timed run.
    pub images: usize,
    /// Wall-clock seconds of each timed run.
    pub run_seconds: Vec<f64>,
    pub hardware: String,
}

impl FpsReport {
    pub fn samples(&self) -> usize {
        self.run_seconds.len()
    }

    pub fn total_seconds(&self) -> f64 {
        self.run_seconds.iter().sum()
    }
}

/// Runs inference over `images` `warmup` times untimed, then `runs` times
/// timed. Each timed run yields one frames-per-second sample.
pub fn benchmark_fps(detector: &Detector, images: &[LabeledImage], warmup: usize, runs: usize) -> Result<FpsReport> {
    if images.is_empty() || runs == 0 {
        return Err(DetectError::EmptyBenchmark);
    }
    for _ in 0..warmup {
        detector.infer(images, EVAL_THRESHOLD)?;
    }
    let mut run_seconds = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        detector.infer(images, EVAL_THRESHOLD)?;
        run_seconds.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
    }
    let fps: Vec<f64> = run_seconds.iter().map(|s| images.len() as f64 / s).collect();
    let mean = fps.iter().sum::<f64>() / fps.len() as f64;
    let var = fps.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / fps.len() as f64;
    Ok(FpsReport {
        mean_fps: mean,
        std_fps: var.sqrt(),
        images: images.len(),
        run_seconds,
        hardware: hardware_note(),
    })
}

/// CPU model, architecture and available parallelism.
pub fn hardware_note() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{model} ({}, {threads} thread(s) available, single-threaded inference)", std::env::consts::ARCH)
}
