//! Standalone steps: generator training, stylization, scoring, ingestion
//! and synthetic corpora.

use std::path::Path;

use thermoscope_core::data::{FLIR_CLASSES, parse_flir_annotations_with, parse_kaist_annotations_with, SplitFallback};
use thermoscope_core::eval::read_detections_jsonl;
use thermoscope_core::{synth, DatasetManifest, Spectrum};

use crate::config::{IngestFormat, PipelineConfig, PipelineKind};
use crate::error::{PipelineError, Result};
use crate::record::{Run, RunRecord};
use crate::steps::*;

/// Trains a generator: content from `data.manifest`, style from the style
/// source, both train splits.
pub fn run_style_train(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::StyleTrain)?;
    if config.style()?.train.is_none() || config.style()?.checkpoint.is_some() {
        return Err(PipelineError::Config("style-train needs style.train and no style.checkpoint".into()));
    }
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let content = train_split(&spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?)?;
    let style = style_source(config, &manifest, Spectrum::Visible)?;
    let mut run = Run::start(PipelineKind::StyleTrain, config)?;
    run.hash_file("manifest", manifest_path)?;
    obtain_generator(&mut run, &content, &style, &mut Hygiene::default())?;
    Ok(vec![run.finish("style-train", None, None, None)?])
}

/// Restyles every record of `data.manifest` (in `data.spectrum`, split kept).
pub fn run_stylize(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Stylize)?;
    config.style()?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let content = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let style = style_source(config, &manifest, Spectrum::Visible)?;
    let mut run = Run::start(PipelineKind::Stylize, config)?;
    run.hash_file("manifest", manifest_path)?;
    let mut hygiene = Hygiene::default();
    let generator = obtain_generator(&mut run, &train_split(&content)?, &style, &mut hygiene)?;
    let styles = style_images(&run, &style, &mut hygiene)?;
    stylize_into(&mut run, &generator, &content, &styles, "stylized")?;
    Ok(vec![run.finish("stylize", None, None, None)?])
}

/// Scores a detections file against the evaluation set.
pub fn run_eval(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Eval)?;
    let dets_path = config
        .data
        .detections
        .as_deref()
        .ok_or_else(|| PipelineError::Config("data.detections is required".into()))?;
    if !dets_path.is_file() {
        return Err(PipelineError::Config(format!("detections {} do not exist", dets_path.display())));
    }
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let view = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let eval = eval_set(config, &view, Spectrum::Thermal)?;
    let ids: std::collections::BTreeSet<&str> = eval.records.iter().map(|r| r.image_id.as_str()).collect();
    let all = read_detections_jsonl(dets_path)?;
    let dets: Vec<_> = all.iter().filter(|d| ids.contains(d.image_id.as_str())).cloned().collect();
    if dets.len() < all.len() {
        log::warn!("{} detection(s) outside the evaluation set ignored", all.len() - dets.len());
    }
    let mut run = Run::start(PipelineKind::Eval, config)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_file("detections", dets_path)?;
    let settings = effective_settings(&config.eval, &eval);
    let report = thermoscope_core::eval::evaluate(&dets, &eval, &settings)?;
    run.write_text("report-eval", "report-eval.json", &report.to_json())?;
    Ok(vec![run.finish("eval", Some(report), None, None)?])
}

/// Parses a FLIR- or KAIST-style source tree into `manifest.json`.
pub fn run_ingest(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Ingest)?;
    let ingest = config
        .ingest
        .as_ref()
        .ok_or_else(|| PipelineError::Config("an [ingest] section is required".into()))?;
    let fallback = SplitFallback {
        train_fraction: ingest.train_fraction,
        seed: config.seed,
    };
    let (manifest, report) = match ingest.format {
        IngestFormat::Flir => {
            let classes = ingest
                .class_set
                .clone()
                .unwrap_or_else(|| FLIR_CLASSES.map(String::from).to_vec());
            parse_flir_annotations_with(&ingest.source, &classes, &fallback)?
        }
        IngestFormat::Kaist => {
            if ingest.class_set.is_some() {
                return Err(PipelineError::Config("class_set does not apply to kaist".into()));
            }
            parse_kaist_annotations_with(&ingest.source, &fallback)?
        }
    };
    if report.warnings() > 0 {
        log::warn!("ingest: {report:?}");
    }
    let mut run = Run::start(PipelineKind::Ingest, config)?;
    let path = run.path("manifest.json");
    manifest.save(&path)?;
    run.artifact("manifest", path);
    run.write_json("ingest-report", "ingest-report.json", &report)?;
    Ok(vec![run.finish("ingest", None, None, None)?])
}

/// Writes a synthetic paired corpus and its `manifest.json` under `out`.
pub fn synthesize(spec: &synth::SynthSpec, out: &Path) -> Result<DatasetManifest> {
    Ok(synth::generate(spec, out)?)
}
