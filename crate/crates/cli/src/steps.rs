//! Building blocks shared by the pipelines.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use thermoscope_core::eval::{evaluate, render_table, write_detections_jsonl};
use thermoscope_core::imageio::load_rgb;
use thermoscope_core::{seed, DatasetManifest, EvalReport, EvalSettings, LabeledImage, PlanarImage, Spectrum, Split};
use thermoscope_detect::{register_detector, DetTrainRecord, Detector, DetectorSpec, Protocol, EVAL_THRESHOLD};
use thermoscope_style::{stylize_dataset, train_msgnet, Checkpoint, Generator, LossNetwork, StyleTrainConfig, TrainLog};

use crate::config::{EvalSplit, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::record::Run;

/// Style images drawn for stylization when no cap is configured.
pub const DEFAULT_MAX_STYLE_IMAGES: usize = 16;

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(PipelineError::Config(format!("manifest {} does not exist", path.display())));
    }
    Ok(DatasetManifest::load(path)?)
}

/// `manifest` restricted to `spectrum`; an empty result is a config error.
pub fn spectrum_view(manifest: &DatasetManifest, spectrum: Spectrum) -> Result<DatasetManifest> {
    let view = manifest.filter_spectrum(spectrum);
    if view.records.is_empty() {
        return Err(PipelineError::Config(format!(
            "manifest `{}` has no {spectrum} records",
            manifest.name
        )));
    }
    Ok(view)
}

pub fn train_split(manifest: &DatasetManifest) -> Result<DatasetManifest> {
    let train = manifest.subset(Split::Train);
    if train.records.is_empty() {
        return Err(PipelineError::Config(format!("manifest `{}` has no train split", manifest.name)));
    }
    Ok(train)
}

/// The evaluation set: the configured evaluation manifest (its val split or
/// all of it), else the val split of `base`.
pub fn eval_set(config: &PipelineConfig, base: &DatasetManifest, default: Spectrum) -> Result<DatasetManifest> {
    let set = match &config.data.eval_manifest {
        Some(path) => {
            let m = spectrum_view(&load_manifest(path)?, config.data.eval_spectrum.unwrap_or(default))?;
            match config.data.eval_split {
                EvalSplit::Val => m.subset(Split::Val),
                EvalSplit::All => {
                    let mut all = m;
                    all.split.values_mut().for_each(|s| *s = Split::Val);
                    all
                }
            }
        }
        None => base.subset(Split::Val),
    };
    if set.records.is_empty() {
        return Err(PipelineError::Config(format!(
            "evaluation set `{}` is empty; the manifest needs a val split",
            set.name
        )));
    }
    Ok(set)
}

/// Every image id and pair key that fed training, checked against the
/// evaluation images.
#[derive(Debug, Default)]
pub struct Hygiene {
    ids: BTreeSet<String>,
    pairs: BTreeSet<String>,
}

impl Hygiene {
    pub fn add<'a>(&mut self, records: impl IntoIterator<Item = &'a LabeledImage>) {
        for r in records {
            self.ids.insert(r.image_id.clone());
            self.pairs.extend(r.pair_key.clone());
        }
    }

    pub fn check(&self, eval: &DatasetManifest) -> Result<()> {
        for r in &eval.records {
            if self.ids.contains(&r.image_id) {
                return Err(PipelineError::Leak(format!("`{}` is used for training and evaluation", r.image_id)));
            }
            if let Some(k) = r.pair_key.as_ref().filter(|k| self.pairs.contains(*k)) {
                return Err(PipelineError::Leak(format!(
                    "frame `{k}` of `{}` is used for training and evaluation",
                    r.image_id
                )));
            }
        }
        Ok(())
    }
}

pub fn detector_spec(config: &PipelineConfig, class_set: Vec<String>, protocol: Protocol) -> Result<DetectorSpec> {
    let d = &config.detector;
    let mut spec = DetectorSpec::defaults(d.architecture, d.backbone, class_set, protocol)?;
    spec.learning_rate = d.learning_rate.unwrap_or(spec.learning_rate);
    spec.epochs = d.epochs.unwrap_or(spec.epochs);
    spec.batch_size = d.batch_size.unwrap_or(spec.batch_size);
    spec.input_size = d.input_size.unwrap_or(spec.input_size);
    spec.external_command = d.external_command.clone();
    spec.seed = seed::substream(config.seed, "detector");
    spec.validate()?;
    Ok(spec)
}

/// Loads the configured detector handle, or trains one on the train split
/// of `train` and saves it as `detector.safetensors`.
pub fn obtain_detector(run: &mut Run, train: &DatasetManifest, protocol: Protocol) -> Result<Detector> {
    let config = run.config().clone();
    if let Some(handle) = &config.detector.handle {
        if !handle.is_file() {
            return Err(PipelineError::Config(format!("detector handle {} does not exist", handle.display())));
        }
        run.hash_file("detector-handle", handle)?;
        let detector = Detector::load(handle)?;
        if detector.spec().class_set != train.class_set {
            return Err(PipelineError::Config(format!(
                "detector classes {:?} differ from dataset classes {:?}",
                detector.spec().class_set,
                train.class_set
            )));
        }
        return Ok(detector);
    }
    let spec = detector_spec(&config, train.class_set.clone(), protocol)?;
    let mut detector = register_detector(spec)?;
    detector.set_work_dir(run.path("external-detector"));
    log::info!("training {} on {} images", detector.spec().name(), train.count(Split::Train));
    let history = detector.train(train)?;
    write_det_log(run, &history)?;
    let path = run.path("detector.safetensors");
    detector.save(&path)?;
    run.artifact("detector", path);
    Ok(detector)
}

fn write_det_log(run: &mut Run, history: &[DetTrainRecord]) -> Result<()> {
    let path = run.path("detector-train.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?);
    for r in history {
        let line = serde_json::to_string(r).map_err(|e| PipelineError::Config(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| PipelineError::io(&path, e))?;
    }
    file.flush().map_err(|e| PipelineError::io(&path, e))?;
    run.artifact("detector-train-log", path);
    Ok(())
}

fn capped(records: &[LabeledImage], cap: Option<usize>) -> &[LabeledImage] {
    &records[..cap.map_or(records.len(), |c| c.min(records.len()))]
}

/// Loads the configured generator checkpoint or trains one from `content`
/// and `style` train records. Training inputs are added to `hygiene`.
pub fn obtain_generator(
    run: &mut Run,
    content: &DatasetManifest,
    style: &DatasetManifest,
    hygiene: &mut Hygiene,
) -> Result<Generator> {
    let config = run.config().clone();
    let style_cfg = config.style()?;
    match (&style_cfg.checkpoint, &style_cfg.train) {
        (Some(_), Some(_)) => Err(PipelineError::Config("set either style.checkpoint or style.train, not both".into())),
        (None, None) => Err(PipelineError::Config("style.checkpoint or style.train is required".into())),
        (Some(path), None) => {
            if !path.is_file() {
                return Err(PipelineError::Config(format!("style checkpoint {} does not exist", path.display())));
            }
            run.hash_file("style-checkpoint", path)?;
            Ok(Checkpoint::load(path)?.generator)
        }
        (None, Some(train_cfg)) => {
            let train_cfg = StyleTrainConfig {
                seed: seed::substream(config.seed, "style-train"),
                deterministic: config.deterministic,
                ..train_cfg.clone()
            };
            let content_records = capped(&content.records, style_cfg.max_content_images);
            let style_records = capped(&style.records, style_cfg.max_style_images);
            hygiene.add(content_records);
            hygiene.add(style_records);
            run.hash_images("style-train-content", content_records)?;
            run.hash_images("style-train-style", style_records)?;
            if let Some(p) = &style_cfg.loss_network {
                run.hash_file("loss-network", p)?;
            }
            let net = LossNetwork::locate(style_cfg.loss_network.as_deref(), seed::substream(config.seed, "loss-network"))?;
            let log_path = run.path("style-train.jsonl");
            let mut log = TrainLog::create(&log_path)?;
            let paths = |rs: &[LabeledImage]| rs.iter().map(|r| r.path.clone()).collect::<Vec<_>>();
            log::info!(
                "training the style generator on {} content and {} style images",
                content_records.len(),
                style_records.len()
            );
            let outcome = train_msgnet(&paths(content_records), &paths(style_records), &train_cfg, &net, Some(&mut log))?;
            drop(log);
            run.artifact("style-train-log", log_path);
            let epoch = train_cfg.epochs;
            let ckpt = Checkpoint {
                generator: outcome.generator,
                config: train_cfg,
                epoch,
                history: outcome.history,
            };
            let path = run.path("style.safetensors");
            ckpt.save(&path)?;
            run.artifact("style-checkpoint", path);
            Ok(ckpt.generator)
        }
    }
}

/// Decoded style images for stylization, capped and added to `hygiene`.
pub fn style_images(run: &Run, style: &DatasetManifest, hygiene: &mut Hygiene) -> Result<Vec<PlanarImage>> {
    let cap = run
        .config()
        .style
        .as_ref()
        .and_then(|s| s.max_style_images)
        .unwrap_or(DEFAULT_MAX_STYLE_IMAGES);
    let records = capped(&style.records, Some(cap));
    hygiene.add(records);
    let images: Vec<PlanarImage> = records
        .iter()
        .filter_map(|r| match load_rgb(&r.path) {
            Ok(img) => Some(img),
            Err(e) => {
                log::warn!("skipping unreadable style image: {e}");
                None
            }
        })
        .collect();
    if images.is_empty() {
        return Err(PipelineError::Config(format!("no readable style images in `{}`", style.name)));
    }
    Ok(images)
}

/// Stylizes `manifest` into `<out>/<name>/` and saves `<name>.json`. The
/// result must carry the same ids, annotations and split.
pub fn stylize_into(
    run: &mut Run,
    generator: &Generator,
    manifest: &DatasetManifest,
    styles: &[PlanarImage],
    name: &str,
) -> Result<DatasetManifest> {
    let style_size = run.config().style.as_ref().and_then(|s| s.style_size);
    let dir = run.path(name);
    let seed = seed::substream(run.config().seed, &format!("stylize-{name}"));
    log::info!("stylizing {} images into {}", manifest.records.len(), dir.display());
    let styled = stylize_dataset(generator, manifest, styles, &dir, seed, style_size)?;
    let same = styled.split == manifest.split
        && styled
            .records
            .iter()
            .zip(&manifest.records)
            .all(|(a, b)| a.image_id == b.image_id && a.annotations == b.annotations);
    if !same || styled.records.len() != manifest.records.len() {
        return Err(PipelineError::Leak(format!("stylized `{name}` does not mirror its source records")));
    }
    run.artifact(name, dir);
    let path = run.path(&format!("{name}.json"));
    styled.save(&path)?;
    run.artifact(&format!("{name}-manifest"), path);
    Ok(styled)
}

/// Evaluation settings with classes absent from `eval` excluded from the
/// mean; the per-class entry still reports them with no AP.
pub fn effective_settings(settings: &EvalSettings, eval: &DatasetManifest) -> EvalSettings {
    let mut out = settings.clone();
    for class in &eval.class_set {
        let present = eval.records.iter().any(|r| r.annotations.iter().any(|a| &a.label == class));
        if !present && !out.exclude_classes.contains(class) {
            log::warn!("class `{class}` has no ground truth in `{}`; excluded from the mean", eval.name);
            out.exclude_classes.push(class.clone());
        }
    }
    out
}

/// Infers on `eval`, scores the detections and persists both under `tag`.
pub fn evaluate_tagged(run: &mut Run, tag: &str, detector: &Detector, eval: &DatasetManifest) -> Result<EvalReport> {
    let out = detector.infer(&eval.records, EVAL_THRESHOLD)?;
    if !out.skipped.is_empty() {
        log::warn!("{tag}: {} unreadable evaluation image(s)", out.skipped.len());
    }
    // A detector trained on a wider class set (e.g. scored on a person-only
    // dataset) only competes on the evaluation classes.
    let (detections, foreign): (Vec<_>, Vec<_>) =
        out.detections.into_iter().partition(|d| eval.class_set.contains(&d.label));
    if !foreign.is_empty() {
        log::info!("{tag}: {} detection(s) of classes outside `{}` dropped", foreign.len(), eval.name);
    }
    let dets_path = run.path(&format!("detections-{tag}.jsonl"));
    write_detections_jsonl(&dets_path, &detections)?;
    run.artifact(&format!("detections-{tag}"), dets_path);
    let settings = effective_settings(&run.config().eval, eval);
    let report = evaluate(&detections, eval, &settings)?;
    run.write_text(&format!("report-{tag}"), &format!("report-{tag}.json"), &report.to_json())?;
    log::info!("{tag}:\n{}", render_table(&[(tag, &report)], &eval.class_set));
    Ok(report)
}

/// Style images: train records of the style manifest (or the main one) in
/// the configured or default spectrum.
pub fn style_source(
    config: &PipelineConfig,
    manifest: &DatasetManifest,
    default: Spectrum,
) -> Result<DatasetManifest> {
    let source = match &config.data.style_manifest {
        Some(p) => load_manifest(p)?,
        None => manifest.clone(),
    };
    train_split(&spectrum_view(&source, config.data.style_spectrum.unwrap_or(default))?)
}
