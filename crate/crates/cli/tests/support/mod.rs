//! Synthetic corpora and config files for pipeline tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use thermoscope_cli::{synthesize, PipelineConfig};
use thermoscope_core::synth::SynthSpec;

/// A paired 64×64 corpus with `frames` frames under `dir/corpus`; returns
/// the manifest path.
pub fn corpus(dir: &Path, frames: usize, train_fraction: f64, seed: u64) -> PathBuf {
    let out = dir.join("corpus");
    let spec = SynthSpec {
        frames,
        width: 64,
        height: 64,
        max_objects: 2,
        train_fraction,
        seed,
    };
    synthesize(&spec, &out).unwrap();
    out.join("manifest.json")
}

/// Detector and style sections sized for a few seconds of training.
pub fn toy_sections(detector_epochs: usize, style_epochs: usize) -> String {
    format!(
        r#"
[detector]
architecture = "reference-mini"
backbone = "mini"
epochs = {detector_epochs}

[style]
max_style_images = 10

[style.train]
style_sizes = [64]
content_size = 64
epochs = {style_epochs}
batch_size = 2
"#
    )
}

/// Writes `body` under a `pipeline = kind` header to `dir/<kind>.toml`.
pub fn write_config(dir: &Path, kind: &str, manifest: &Path, body: &str) -> PathBuf {
    let text = format!(
        "pipeline = \"{kind}\"\nseed = 7\nout_dir = \"{}\"\n\n[data]\nmanifest = \"{}\"\n{body}",
        dir.join(format!("out-{kind}")).display(),
        manifest.display()
    );
    let path = dir.join(format!("{kind}.toml"));
    fs::write(&path, text).unwrap();
    path
}

pub fn load(path: &Path) -> PipelineConfig {
    PipelineConfig::load(path).unwrap()
}
