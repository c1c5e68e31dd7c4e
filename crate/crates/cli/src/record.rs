//! Run bookkeeping: input hashes, produced artifacts and the final record.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermoscope_core::eval::WeakLabelReport;
use thermoscope_core::{EvalReport, LabeledImage};
use thermoscope_detect::FpsReport;

use crate::config::{PipelineConfig, PipelineKind};
use crate::error::{PipelineError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pipeline: PipelineKind,
    /// Distinguishes the records of one run, e.g. with and without style.
    pub tag: String,
    pub config: PipelineConfig,
    /// `sha256:<hex>` per input file or image set.
    pub input_hashes: BTreeMap<String, String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub report: Option<EvalReport>,
    pub weak_label: Option<WeakLabelReport>,
    pub fps: Option<FpsReport>,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Listed artifacts missing from disk.
    pub fn missing_artifacts(&self) -> Vec<&Path> {
        self.artifacts.values().map(PathBuf::as_path).filter(|p| !p.exists()).collect()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn tag_hash(digest: impl AsRef<[u8]>) -> String {
    format!("sha256:{}", hex::encode(digest))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(tag_hash(hasher.finalize()))
}

/// One digest over `(image_id, file hash)` of every record, in order.
pub fn sha256_images<'a>(records: impl IntoIterator<Item = &'a LabeledImage>) -> Result<String> {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(r.image_id.as_bytes());
        hasher.update([0]);
        hasher.update(sha256_file(&r.path)?.as_bytes());
        hasher.update(*b"\n");
    }
    Ok(tag_hash(hasher.finalize()))
}

/// Accumulates what a run reads and writes under its output directory.
#[derive(Debug)]
pub struct Run {
    kind: PipelineKind,
    out: PathBuf,
    config: PipelineConfig,
    started: u64,
    hashes: BTreeMap<String, String>,
    artifacts: BTreeMap<String, PathBuf>,
}

impl Run {
    pub fn start(kind: PipelineKind, config: &PipelineConfig) -> Result<Self> {
        let out = config.out_dir()?.to_path_buf();
        std::fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
        let snapshot = config.clone();
        let config_toml =
            toml::to_string(&snapshot).map_err(|e| PipelineError::Config(format!("cannot serialize config: {e}")))?;
        let mut run = Run {
            kind,
            out,
            config: snapshot,
            started: now_ms(),
            hashes: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        };
        run.hashes.insert("config".into(), tag_hash(Sha256::digest(config_toml.as_bytes())));
        let path = run.write_text("config", "config.toml", &config_toml)?;
        log::info!("{} run started; config snapshot at {}", kind.as_str(), path.display());
        Ok(run)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn hash_file(&mut self, key: &str, path: &Path) -> Result<()> {
        self.hashes.insert(key.to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn hash_images<'a>(&mut self, key: &str, records: impl IntoIterator<Item = &'a LabeledImage>) -> Result<()> {
        self.hashes.insert(key.to_string(), sha256_images(records)?);
        Ok(())
    }

    pub fn artifact(&mut self, key: &str, path: PathBuf) {
        self.artifacts.insert(key.to_string(), path);
    }

    pub fn write_text(&mut self, key: &str, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
        self.artifact(key, path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, key: &str, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| PipelineError::Config(format!("cannot serialize {key}: {e}")))?;
        self.write_text(key, name, &text)
    }

    /// Writes `run-<tag>.json` and returns the record. Fails if a listed
    /// artifact is missing.
    pub fn finish(
        &self,
        tag: &str,
        report: Option<EvalReport>,
        weak_label: Option<WeakLabelReport>,
        fps: Option<FpsReport>,
    ) -> Result<RunRecord> {
        let record = RunRecord {
            pipeline: self.kind,
            tag: tag.to_string(),
            config: self.config.clone(),
            input_hashes: self.hashes.clone(),
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            artifacts: self.artifacts.clone(),
            report,
            weak_label,
            fps,
        };
        if let Some(p) = record.missing_artifacts().first() {
            return Err(PipelineError::io(*p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        let path = self.path(&format!("run-{tag}.json"));
        let text = serde_json::to_string_pretty(&record).map_err(|e| PipelineError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
        Ok(record)
    }
}
