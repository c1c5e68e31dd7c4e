//! The experiment pipelines. Each returns the records it wrote under the
//! run's output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thermoscope_core::eval::{ground_truth_for, weak_label_report, write_detections_jsonl};
use thermoscope_core::data::to_voc_xml;
use thermoscope_core::imageio::load_rgb;
use thermoscope_core::{LabeledImage, ObjectAnnotation, Spectrum, Split};
use thermoscope_detect::{benchmark_fps, Protocol};

use crate::config::{PipelineConfig, PipelineKind};
use crate::error::{PipelineError, Result};
use crate::record::{Run, RunRecord};
use crate::steps::*;

pub const BASELINE_TAG: &str = "baseline";
pub const ODSC_TAG: &str = "odsc";
pub const SANITY_SWAP_TAG: &str = "sanity-swap";
pub const CDMT_PLAIN_TAG: &str = "cdmt-without-style";
pub const CDMT_STYLED_TAG: &str = "cdmt-with-style";
pub const WEAK_LABEL_TAG: &str = "weak-label";
pub const BENCH_TAG: &str = "bench";

/// Thermal train split → detector → thermal val split.
pub fn run_baseline(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Baseline)?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let content = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let train = train_split(&content)?;
    let eval = eval_set(config, &content, Spectrum::Thermal)?;
    let mut hygiene = Hygiene::default();
    hygiene.add(&train.records);
    hygiene.check(&eval)?;

    let mut run = Run::start(PipelineKind::Baseline, config)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_images("train-images", &train.records)?;
    run.hash_images("eval-images", &eval.records)?;
    let detector = obtain_detector(&mut run, &train, Protocol::Baseline)?;
    let report = evaluate_tagged(&mut run, BASELINE_TAG, &detector, &eval)?;
    Ok(vec![run.finish(BASELINE_TAG, Some(report), None, None)?])
}

/// Thermal train images restyled with visible style → detector → raw
/// thermal val split.
pub fn run_odsc(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Odsc)?;
    config.style()?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let content = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let train = train_split(&content)?;
    let eval = eval_set(config, &content, Spectrum::Thermal)?;
    let style_source = style_source(config, &manifest, Spectrum::Visible)?;

    let mut run = Run::start(PipelineKind::Odsc, config)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_images("train-images", &train.records)?;
    run.hash_images("eval-images", &eval.records)?;
    let mut hygiene = Hygiene::default();
    hygiene.add(&train.records);
    let generator = obtain_generator(&mut run, &train, &style_source, &mut hygiene)?;
    let styles = style_images(&run, &style_source, &mut hygiene)?;
    hygiene.check(&eval)?;
    let styled = stylize_into(&mut run, &generator, &train, &styles, "styled-train")?;
    let detector = obtain_detector(&mut run, &styled, Protocol::Baseline)?;
    let report = evaluate_tagged(&mut run, ODSC_TAG, &detector, &eval)?;
    Ok(vec![run.finish(ODSC_TAG, Some(report), None, None)?])
}

/// A thermal-trained detector scored on raw and on visible-styled thermal
/// val images, with identical evaluation settings.
pub fn run_sanity_swap(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::SanitySwap)?;
    config.style()?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let content = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let train = train_split(&content)?;
    let eval = eval_set(config, &content, Spectrum::Thermal)?;
    let style_source = style_source(config, &manifest, Spectrum::Visible)?;

    let mut run = Run::start(PipelineKind::SanitySwap, config)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_images("eval-images", &eval.records)?;
    let mut hygiene = Hygiene::default();
    if config.detector.handle.is_none() {
        hygiene.add(&train.records);
        run.hash_images("train-images", &train.records)?;
    }
    let generator = obtain_generator(&mut run, &train, &style_source, &mut hygiene)?;
    let styles = style_images(&run, &style_source, &mut hygiene)?;
    hygiene.check(&eval)?;
    let detector = obtain_detector(&mut run, &train, Protocol::Baseline)?;
    let styled_eval = stylize_into(&mut run, &generator, &eval, &styles, "styled-eval")?;
    let plain = evaluate_tagged(&mut run, BASELINE_TAG, &detector, &eval)?;
    let swapped = evaluate_tagged(&mut run, SANITY_SWAP_TAG, &detector, &styled_eval)?;
    Ok(vec![
        run.finish(BASELINE_TAG, Some(plain), None, None)?,
        run.finish(SANITY_SWAP_TAG, Some(swapped), None, None)?,
    ])
}

/// Visible-trained detector scored (a) on thermal val images and (b) on
/// visible val images restyled with thermal style.
pub fn run_cdmt(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Cdmt)?;
    config.style()?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    if !manifest.is_paired() {
        return Err(PipelineError::Config(format!(
            "cdmt needs a paired visible/thermal manifest; `{}` is not paired",
            manifest.name
        )));
    }
    let visible = spectrum_view(&manifest, Spectrum::Visible)?;
    let thermal = spectrum_view(&manifest, Spectrum::Thermal)?;
    let train = train_split(&visible)?;
    let (thermal_eval, visible_eval) = match &config.data.eval_manifest {
        Some(path) => {
            let m = load_manifest(path)?;
            if !m.is_paired() {
                return Err(PipelineError::Config(format!("cdmt evaluation manifest `{}` is not paired", m.name)));
            }
            let mut c = config.clone();
            c.data.eval_spectrum = Some(Spectrum::Thermal);
            let t = eval_set(&c, &m, Spectrum::Thermal)?;
            c.data.eval_spectrum = Some(Spectrum::Visible);
            (t, eval_set(&c, &m, Spectrum::Visible)?)
        }
        None => (eval_set(config, &thermal, Spectrum::Thermal)?, visible.subset(Split::Val)),
    };
    let keys = |m: &thermoscope_core::DatasetManifest| -> BTreeSet<Option<String>> {
        m.records.iter().map(|r| r.pair_key.clone()).collect()
    };
    if keys(&thermal_eval) != keys(&visible_eval) {
        return Err(PipelineError::Config("thermal and visible evaluation frames differ".into()));
    }
    let style_source = style_source(config, &manifest, Spectrum::Thermal)?;

    let mut run = Run::start(PipelineKind::Cdmt, config)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_images("train-images", &train.records)?;
    run.hash_images("eval-images-thermal", &thermal_eval.records)?;
    run.hash_images("eval-images-visible", &visible_eval.records)?;
    let mut hygiene = Hygiene::default();
    hygiene.add(&train.records);
    let generator = obtain_generator(&mut run, &train, &style_source, &mut hygiene)?;
    let styles = style_images(&run, &style_source, &mut hygiene)?;
    hygiene.check(&thermal_eval)?;
    hygiene.check(&visible_eval)?;
    let detector = obtain_detector(&mut run, &train, Protocol::CrossDomain)?;
    let plain = evaluate_tagged(&mut run, CDMT_PLAIN_TAG, &detector, &thermal_eval)?;
    let styled_eval = stylize_into(&mut run, &generator, &visible_eval, &styles, "styled-eval")?;
    let styled = evaluate_tagged(&mut run, CDMT_STYLED_TAG, &detector, &styled_eval)?;
    Ok(vec![
        run.finish(CDMT_PLAIN_TAG, Some(plain), None, None)?,
        run.finish(CDMT_STYLED_TAG, Some(styled), None, None)?,
    ])
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Image files under `dir`, sorted by path.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(PipelineError::Config(format!("image directory {} does not exist", dir.display())));
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// `a/b/c.png` under `root` → `a/b/c`.
fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn label_file_name(image_id: &str) -> String {
    format!("{}.xml", image_id.replace('/', "__"))
}

/// Pseudo-labels every image of a directory as VOC XML with a detector,
/// and audits them against a labeled probe set when one is configured.
pub fn run_weak_label(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::WeakLabel)?;
    let wl = config
        .weak_label
        .as_ref()
        .ok_or_else(|| PipelineError::Config("a [weak_label] section is required".into()))?;
    if !(0.0..=1.0).contains(&wl.threshold) {
        return Err(PipelineError::Config(format!("weak_label.threshold {} outside [0, 1]", wl.threshold)));
    }
    let files = image_files(&wl.images)?;
    if files.is_empty() {
        return Err(PipelineError::Config(format!("no images under {}", wl.images.display())));
    }
    let spectrum = wl.spectrum.unwrap_or(Spectrum::Thermal);

    let mut run = Run::start(PipelineKind::WeakLabel, config)?;
    let mut hygiene = Hygiene::default();
    let detector = if config.detector.handle.is_some() {
        obtain_detector_from_handle(&mut run)?
    } else {
        // Cross-domain detector: visible train images, restyled toward the
        // target domain when a generator is configured.
        let manifest_path = config.manifest_path()?;
        let manifest = load_manifest(manifest_path)?;
        run.hash_file("manifest", manifest_path)?;
        let source = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Visible))?;
        let train = train_split(&source)?;
        hygiene.add(&train.records);
        let train = match &config.style {
            Some(_) => {
                let styles_src = style_source(config, &manifest, spectrum)?;
                let generator = obtain_generator(&mut run, &train, &styles_src, &mut hygiene)?;
                let styles = style_images(&run, &styles_src, &mut hygiene)?;
                stylize_into(&mut run, &generator, &train, &styles, "styled-train")?
            }
            None => train,
        };
        obtain_detector(&mut run, &train, Protocol::CrossDomain)?
    };
    let class_set = detector.spec().class_set.clone();

    let mut records = Vec::with_capacity(files.len());
    for path in &files {
        match load_rgb(path) {
            Ok(img) => records.push(LabeledImage {
                image_id: relative_id(&wl.images, path),
                path: path.clone(),
                width: img.width as u32,
                height: img.height as u32,
                spectrum,
                annotations: Vec::new(),
                pair_key: None,
            }),
            Err(e) => log::warn!("skipping unreadable image: {e}"),
        }
    }
    if records.is_empty() {
        return Err(PipelineError::Config(format!("no readable images under {}", wl.images.display())));
    }
    run.hash_images("unlabeled-images", &records)?;
    let out = detector.infer(&records, wl.threshold)?;
    let dets_path = run.path("detections-weak-label.jsonl");
    write_detections_jsonl(&dets_path, &out.detections)?;
    run.artifact("detections-weak-label", dets_path);

    let labels_dir = run.path("labels");
    std::fs::create_dir_all(&labels_dir).map_err(|e| PipelineError::io(&labels_dir, e))?;
    let mut by_image: BTreeMap<&str, Vec<ObjectAnnotation>> = BTreeMap::new();
    for d in &out.detections {
        by_image
            .entry(d.image_id.as_str())
            .or_default()
            .push(ObjectAnnotation::new(d.bbox, d.label.clone()));
    }
    for r in &records {
        let labeled = LabeledImage {
            annotations: by_image.remove(r.image_id.as_str()).unwrap_or_default(),
            ..r.clone()
        };
        let path = labels_dir.join(label_file_name(&r.image_id));
        std::fs::write(&path, to_voc_xml(&labeled)?).map_err(|e| PipelineError::io(&path, e))?;
    }
    run.artifact("labels", labels_dir);

    let audit = match &wl.probe_manifest {
        Some(p) => {
            let probe = spectrum_view(&load_manifest(p)?, spectrum)?;
            if probe.class_set != class_set {
                return Err(PipelineError::Config(format!(
                    "probe classes {:?} differ from detector classes {class_set:?}",
                    probe.class_set
                )));
            }
            hygiene.check(&probe)?;
            run.hash_file("probe-manifest", p)?;
            let probe_out = detector.infer(&probe.records, wl.threshold)?;
            let mut gts: BTreeMap<String, Vec<ObjectAnnotation>> = BTreeMap::new();
            for class in &class_set {
                for (id, anns) in ground_truth_for(&probe.records, class) {
                    gts.entry(id).or_default().extend(anns);
                }
            }
            let report = weak_label_report(&probe_out.detections, &gts, config.eval.iou_threshold)?;
            run.write_json("weak-label-report", "weak-label-report.json", &report)?;
            Some(report)
        }
        None => None,
    };
    Ok(vec![run.finish(WEAK_LABEL_TAG, None, audit, None)?])
}

fn obtain_detector_from_handle(run: &mut Run) -> Result<thermoscope_detect::Detector> {
    let handle = run
        .config()
        .detector
        .handle
        .clone()
        .ok_or_else(|| PipelineError::Config("detector.handle is required".into()))?;
    if !handle.is_file() {
        return Err(PipelineError::Config(format!("detector handle {} does not exist", handle.display())));
    }
    run.hash_file("detector-handle", &handle)?;
    Ok(thermoscope_detect::Detector::load(&handle)?)
}

/// Inference throughput of a trained detector on evaluation images.
pub fn run_bench(config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    config.check_kind(PipelineKind::Bench)?;
    let manifest_path = config.manifest_path()?;
    let manifest = load_manifest(manifest_path)?;
    let view = spectrum_view(&manifest, config.data.spectrum.unwrap_or(Spectrum::Thermal))?;
    let mut images: Vec<LabeledImage> = match view.count(Split::Val) {
        0 => view.records.clone(),
        _ => view.records_in(Split::Val).cloned().collect(),
    };
    if let Some(cap) = config.bench.max_images {
        images.truncate(cap);
    }
    if config.bench.runs == 0 {
        return Err(PipelineError::Config("bench.runs must be at least 1".into()));
    }
    let mut run = Run::start(PipelineKind::Bench, config)?;
    let detector = obtain_detector_from_handle(&mut run)?;
    run.hash_file("manifest", manifest_path)?;
    run.hash_images("bench-images", &images)?;
    let fps = benchmark_fps(&detector, &images, config.bench.warmup, config.bench.runs)?;
    run.write_json("fps", "fps.json", &fps)?;
    log::info!(
        "{}: {:.2} ± {:.2} fps over {} images on {}",
        detector.spec().name(),
        fps.mean_fps,
        fps.std_fps,
        fps.images,
        fps.hardware
    );
    Ok(vec![run.finish(BENCH_TAG, None, None, Some(fps))?])
}
