//! Adapter for detectors trained and run by an external executable.
//!
//! The executable is called as
//!
//! ```text
//! <cmd> train --spec SPEC.json --manifest MANIFEST.json --out HANDLE_DIR
//! <cmd> infer --handle HANDLE_DIR --images IMAGES.json --threshold T --out DETS.jsonl
//! ```
//!
//! `IMAGES.json` is an array of image records and `DETS.jsonl` uses the
//! workspace detection format. A non-zero exit is a runtime failure.

use std::path::{Path, PathBuf};
use std::process::Command;

use thermoscope_core::eval::read_detections_jsonl;
use thermoscope_core::{DatasetManifest, LabeledImage};

use crate::error::{DetectError, Result};
use crate::mini::InferOutput;
use crate::spec::DetectorSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalDetector {
    spec: DetectorSpec,
    /// Directory owned by the external tool; holds its trained weights.
    handle_dir: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DetectError {
    DetectError::External(format!("{}: {e}", path.display()))
}

impl ExternalDetector {
    pub fn new(spec: DetectorSpec, handle_dir: PathBuf) -> Self {
        ExternalDetector { spec, handle_dir }
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn handle_dir(&self) -> &Path {
        &self.handle_dir
    }

    pub fn set_handle_dir(&mut self, dir: PathBuf) {
        self.handle_dir = dir;
    }

    fn command(&self) -> Result<&Path> {
        self.spec.external_command.as_deref().ok_or_else(|| {
            DetectError::Unavailable(format!(
                "{} has no built-in implementation; set external_command to an adapter executable \
                 or use reference-mini/mini",
                self.spec.name()
            ))
        })
    }

    fn run(&self, args: &[&std::ffi::OsStr]) -> Result<()> {
        let cmd = self.command()?;
        let status = Command::new(cmd).args(args).status().map_err(|e| io_err(cmd, e))?;
        if !status.success() {
            return Err(DetectError::External(format!("{} exited with {status}", cmd.display())));
        }
        Ok(())
    }

    pub fn train(&mut self, manifest: &DatasetManifest) -> Result<()> {
        self.command()?;
        std::fs::create_dir_all(&self.handle_dir).map_err(|e| io_err(&self.handle_dir, e))?;
        let spec_path = self.handle_dir.join("spec.json");
        let manifest_path = self.handle_dir.join("train-manifest.json");
        let spec_json = serde_json::to_string_pretty(&self.spec).map_err(|e| io_err(&spec_path, e))?;
        std::fs::write(&spec_path, spec_json).map_err(|e| io_err(&spec_path, e))?;
        manifest.save(&manifest_path)?;
        self.run(&[
            "train".as_ref(),
            "--spec".as_ref(),
            spec_path.as_os_str(),
            "--manifest".as_ref(),
            manifest_path.as_os_str(),
            "--out".as_ref(),
            self.handle_dir.as_os_str(),
        ])
    }

    pub fn infer(&self, images: &[LabeledImage], score_threshold: f64) -> Result<InferOutput> {
        self.command()?;
        let scratch = tempfile::tempdir().map_err(|e| io_err(&self.handle_dir, e))?;
        let images_path = scratch.path().join("images.json");
        let out_path = scratch.path().join("detections.jsonl");
        let list = serde_json::to_string(images).map_err(|e| io_err(&images_path, e))?;
        std::fs::write(&images_path, list).map_err(|e| io_err(&images_path, e))?;
        let threshold = score_threshold.to_string();
        self.run(&[
            "infer".as_ref(),
            "--handle".as_ref(),
            self.handle_dir.as_os_str(),
            "--images".as_ref(),
            images_path.as_os_str(),
            "--threshold".as_ref(),
            threshold.as_ref(),
            "--out".as_ref(),
            out_path.as_os_str(),
        ])?;
        let mut detections = read_detections_jsonl(&out_path)?;
        detections.retain(|d| d.confidence >= score_threshold);
        detections.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(InferOutput {
            detections,
            skipped: Vec::new(),
        })
    }
}
