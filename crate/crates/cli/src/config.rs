//! Declarative run configuration, read from TOML. Unknown keys are errors.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermoscope_core::{EvalSettings, Spectrum};
use thermoscope_detect::{Architecture, Backbone};
use thermoscope_style::StyleTrainConfig;

use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Baseline,
    Odsc,
    SanitySwap,
    Cdmt,
    WeakLabel,
    Bench,
    StyleTrain,
    Stylize,
    Eval,
    Ingest,
}

impl PipelineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineKind::Baseline => "baseline",
            PipelineKind::Odsc => "odsc",
            PipelineKind::SanitySwap => "sanity-swap",
            PipelineKind::Cdmt => "cdmt",
            PipelineKind::WeakLabel => "weak-label",
            PipelineKind::Bench => "bench",
            PipelineKind::StyleTrain => "style-train",
            PipelineKind::Stylize => "stylize",
            PipelineKind::Eval => "eval",
            PipelineKind::Ingest => "ingest",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    /// Only the validation split of the evaluation manifest.
    #[default]
    Val,
    /// Every record of the evaluation manifest.
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled manifest with a train/val split.
    pub manifest: Option<PathBuf>,
    /// Restricts `manifest` to one spectrum; each pipeline has a default.
    pub spectrum: Option<Spectrum>,
    /// Independent evaluation manifest. When absent, evaluation uses the
    /// validation split of `manifest`.
    pub eval_manifest: Option<PathBuf>,
    pub eval_spectrum: Option<Spectrum>,
    #[serde(default)]
    pub eval_split: EvalSplit,
    /// Source of style images. Defaults to `manifest`.
    pub style_manifest: Option<PathBuf>,
    pub style_spectrum: Option<Spectrum>,
    /// Detections to score with `eval`, as JSONL.
    pub detections: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub architecture: Architecture,
    pub backbone: Backbone,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub input_size: Option<usize>,
    pub external_command: Option<PathBuf>,
    /// A trained detector to reuse instead of training one.
    pub handle: Option<PathBuf>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            architecture: Architecture::ReferenceMini,
            backbone: Backbone::Mini,
            learning_rate: None,
            epochs: None,
            batch_size: None,
            input_size: None,
            external_command: None,
            handle: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleConfig {
    /// A trained generator checkpoint. Exactly one of `checkpoint` and
    /// `train` is required where stylization happens.
    pub checkpoint: Option<PathBuf>,
    pub train: Option<StyleTrainConfig>,
    /// Loss-network weights; falls back to the cache, then random weights.
    pub loss_network: Option<PathBuf>,
    /// Square side the style image is resized to when stylizing.
    pub style_size: Option<usize>,
    /// Caps the content images used for generator training.
    pub max_content_images: Option<usize>,
    /// Caps the style images drawn for training and stylization.
    pub max_style_images: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakLabelConfig {
    /// Directory of unlabeled images, searched recursively.
    pub images: PathBuf,
    #[serde(default = "default_weak_threshold")]
    pub threshold: f64,
    pub spectrum: Option<Spectrum>,
    /// Labeled manifest whose records audit the pseudo-labels.
    pub probe_manifest: Option<PathBuf>,
}

fn default_weak_threshold() -> f64 {
    thermoscope_detect::DISPLAY_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub warmup: usize,
    pub runs: usize,
    pub max_images: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: 2,
            runs: 10,
            max_images: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestFormat {
    Flir,
    Kaist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub format: IngestFormat,
    pub source: PathBuf,
    /// FLIR only; KAIST is always `[person]`.
    pub class_set: Option<Vec<String>>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Must match the subcommand when present.
    pub pipeline: Option<PipelineKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    pub style: Option<StyleConfig>,
    #[serde(default)]
    pub eval: EvalSettings,
    pub weak_label: Option<WeakLabelConfig>,
    #[serde(default)]
    pub bench: BenchConfig,
    pub ingest: Option<IngestConfig>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("invalid config: {e}")))
    }

    /// Reads and parses `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let mut paths: Vec<&mut PathBuf> = Vec::new();
        let d = &mut self.data;
        paths.extend([&mut self.out_dir, &mut d.manifest, &mut d.eval_manifest, &mut d.style_manifest, &mut d.detections].into_iter().flatten());
        paths.extend([&mut self.detector.external_command, &mut self.detector.handle].into_iter().flatten());
        if let Some(s) = &mut self.style {
            paths.extend([&mut s.checkpoint, &mut s.loss_network].into_iter().flatten());
        }
        if let Some(w) = &mut self.weak_label {
            paths.push(&mut w.images);
            paths.extend(w.probe_manifest.as_mut());
        }
        if let Some(i) = &mut self.ingest {
            paths.push(&mut i.source);
        }
        for p in paths {
            resolve(base, p);
        }
    }

    /// Checks the `pipeline` key against the subcommand being run.
    pub fn check_kind(&self, kind: PipelineKind) -> Result<()> {
        match self.pipeline {
            Some(k) if k != kind => Err(PipelineError::Config(format!(
                "config is for `{}` but `{}` was requested",
                k.as_str(),
                kind.as_str()
            ))),
            _ => Ok(()),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no output directory; set out_dir or pass --out".into()))
    }

    pub fn manifest_path(&self) -> Result<&Path> {
        self.data
            .manifest
            .as_deref()
            .ok_or_else(|| PipelineError::Config("data.manifest is required".into()))
    }

    pub fn style(&self) -> Result<&StyleConfig> {
        self.style
            .as_ref()
            .ok_or_else(|| PipelineError::Config("a [style] section with checkpoint or train is required".into()))
    }
}
