mod support;

use std::collections::BTreeSet;

use support::*;
use thermoscope_cli::{run_cdmt, run_odsc, run_sanity_swap, PipelineError};
use thermoscope_core::{DatasetManifest, Spectrum, Split};

#[test]
fn odsc_trains_on_styled_thermal_and_scores_raw_thermal() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 12, 0.5, 11);
    let path = write_config(dir.path(), "odsc", &manifest, &toy_sections(6, 1));
    let records = run_odsc(&load(&path)).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.tag, "odsc");
    assert!(r.missing_artifacts().is_empty());
    for key in ["style-checkpoint", "styled-train", "styled-train-manifest", "detector", "report-odsc"] {
        assert!(r.artifacts.contains_key(key), "missing artifact {key}");
    }

    let source = DatasetManifest::load(&manifest).unwrap();
    let thermal_train = source.filter_spectrum(Spectrum::Thermal).subset(Split::Train);
    let styled = DatasetManifest::load(&r.artifacts["styled-train-manifest"]).unwrap();
    assert_eq!(styled.records.len(), thermal_train.records.len());
    for (a, b) in styled.records.iter().zip(&thermal_train.records) {
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(styled.split[&a.image_id], Split::Train);
        assert_ne!(a.path, b.path);
    }
}

#[test]
fn sanity_swap_scores_one_detector_on_raw_and_styled_val() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 12, 0.5, 12);
    let path = write_config(dir.path(), "sanity-swap", &manifest, &toy_sections(6, 1));
    let records = run_sanity_swap(&load(&path)).unwrap();
    let tags: Vec<&str> = records.iter().map(|r| r.tag.as_str()).collect();
    assert_eq!(tags, ["baseline", "sanity-swap"]);
    let (a, b) = (records[0].report.as_ref().unwrap(), records[1].report.as_ref().unwrap());
    assert_eq!(a.iou_threshold, b.iou_threshold);
    assert_eq!(a.interpolation, b.interpolation);
    let gt = |r: &thermoscope_core::EvalReport| r.classes.iter().map(|(k, c)| (k.clone(), c.gt)).collect::<Vec<_>>();
    assert_eq!(gt(a), gt(b));
}

#[test]
fn cdmt_scores_paired_frames_with_and_without_style() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 12, 0.5, 13);
    let path = write_config(dir.path(), "cdmt", &manifest, &toy_sections(6, 1));
    let records = run_cdmt(&load(&path)).unwrap();
    let tags: Vec<&str> = records.iter().map(|r| r.tag.as_str()).collect();
    assert_eq!(tags, ["cdmt-without-style", "cdmt-with-style"]);
    let r = &records[1];
    let styled = DatasetManifest::load(&r.artifacts["styled-eval-manifest"]).unwrap();
    let thermal_val = DatasetManifest::load(&manifest)
        .unwrap()
        .filter_spectrum(Spectrum::Thermal)
        .subset(Split::Val);
    let keys = |m: &DatasetManifest| m.records.iter().map(|r| r.pair_key.clone()).collect::<BTreeSet<_>>();
    assert_eq!(keys(&styled), keys(&thermal_val));
    assert!(styled.records.iter().all(|r| r.spectrum == Spectrum::Visible));
}

#[test]
fn cdmt_rejects_unpaired_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 6, 0.5, 14);
    let mut m = DatasetManifest::load(&manifest).unwrap();
    m.records.iter_mut().for_each(|r| r.pair_key = None);
    m.save(&manifest).unwrap();
    let path = write_config(dir.path(), "cdmt", &manifest, &toy_sections(1, 1));
    let err = run_cdmt(&load(&path)).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
}

#[test]
fn style_pipelines_require_a_style_section() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 6, 0.5, 15);
    let path = write_config(dir.path(), "odsc", &manifest, "");
    assert!(run_odsc(&load(&path)).unwrap_err().is_config());
}

#[test]
fn a_style_manifest_overlapping_val_is_a_leak() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 8, 0.5, 16);
    let mut m = DatasetManifest::load(&manifest).unwrap();
    m.split.values_mut().for_each(|s| *s = Split::Train);
    let style_path = dir.path().join("style.json");
    m.save(&style_path).unwrap();
    let body = format!("style_manifest = \"{}\"\n{}", style_path.display(), toy_sections(1, 1));
    let path = write_config(dir.path(), "odsc", &manifest, &body);
    let err = run_odsc(&load(&path)).unwrap_err();
    assert!(matches!(err, PipelineError::Leak(_)), "{err}");
}
