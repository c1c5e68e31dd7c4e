mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use thermoscope_core::eval::{read_detections_jsonl, write_detections_jsonl};
use thermoscope_core::{LabeledImage, Split};
use thermoscope_detect::{
    benchmark_fps, register_detector, registered_pairs, Architecture, Backbone, DetectError, DetectorSpec, Protocol,
    EVAL_THRESHOLD,
};

use support::*;

#[test]
fn invariants_hold_on_fifty_images() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = thermal_corpus(dir.path(), 50, 11);
    let mut d = mini(2, 0);
    d.train(&all_in(&corpus, Split::Train)).unwrap();
    let out = d.infer(&corpus.records, EVAL_THRESHOLD).unwrap();
    assert!(out.skipped.is_empty());
    let labels: BTreeSet<&str> = corpus.class_set.iter().map(String::as_str).collect();
    for r in &corpus.records {
        let mine: Vec<_> = out.detections.iter().filter(|x| x.image_id == r.image_id).collect();
        assert!(mine.windows(2).all(|w| w[0].confidence >= w[1].confidence));
        for x in mine {
            assert!(x.bbox.fits_within(r.width, r.height), "{x:?}");
            assert!(labels.contains(x.label.as_str()));
            assert!(x.confidence >= EVAL_THRESHOLD && x.confidence <= 1.0);
        }
    }
    assert!(d.infer(&corpus.records, 1.01).unwrap().detections.is_empty());
}

#[test]
fn unreadable_images_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = thermal_corpus(dir.path(), 3, 0);
    let mut images = corpus.records.clone();
    let broken = dir.path().join("broken.png");
    std::fs::write(&broken, b"nope").unwrap();
    images.push(LabeledImage {
        image_id: "broken".into(),
        path: broken,
        ..images[0].clone()
    });
    let out = mini(1, 0).infer(&images, EVAL_THRESHOLD).unwrap();
    assert_eq!(out.skipped, vec!["broken".to_string()]);
    assert!(out.detections.iter().all(|d| d.image_id != "broken"));
}

#[test]
fn detections_export_as_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = thermal_corpus(&dir.path().join("data"), 2, 0);
    let dets = mini(1, 0).infer(&corpus.records, 0.005).unwrap().detections;
    assert!(!dets.is_empty());
    let path = dir.path().join("dets.jsonl");
    write_detections_jsonl(&path, &dets).unwrap();
    assert_eq!(read_detections_jsonl(&path).unwrap(), dets);
}

#[test]
fn registry_accepts_known_pairs_and_lists_them_on_error() {
    for (a, b) in registered_pairs() {
        let spec = DetectorSpec::defaults(a, b, classes(), Protocol::Baseline).unwrap();
        assert_eq!(register_detector(spec).unwrap().spec().name(), format!("{a}/{b}"));
    }
    let mut spec = mini_spec(1, 0);
    spec.backbone = Backbone::Resnet101;
    let err = register_detector(spec).unwrap_err();
    assert!(matches!(err, DetectError::Config(_)));
    let msg = err.to_string();
    for (a, b) in registered_pairs() {
        assert!(msg.contains(&format!("{a}/{b}")), "{msg}");
    }
}

#[test]
fn external_pair_without_command_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = all_in(&thermal_corpus(dir.path(), 2, 0), Split::Train);
    let spec = DetectorSpec::defaults(Architecture::Ssd512, Backbone::Vgg16, classes(), Protocol::Baseline).unwrap();
    let mut d = register_detector(spec).unwrap();
    let err = d.train(&corpus).unwrap_err();
    assert!(matches!(err, DetectError::Unavailable(_)), "{err}");
    assert!(err.to_string().contains("external_command"));
}

#[cfg(unix)]
#[test]
fn external_adapter_round_trip() {
    use std::os::unix::fs::PermissionsExt;

    let dir = tempfile::tempdir().unwrap();
    let corpus = all_in(&thermal_corpus(&dir.path().join("data"), 2, 0), Split::Train);
    let script = dir.path().join("adapter.sh");
    std::fs::write(
        &script,
        r#"#!/bin/sh
set -e
cmd=$1; shift
while [ $# -gt 0 ]; do
  case $1 in
    --out) out=$2 ;;
    --handle) handle=$2 ;;
  esac
  shift 2
done
if [ "$cmd" = train ]; then
  echo trained > "$out/weights"
else
  test -f "$handle/weights"
  printf '%s\n' '{"image_id":"a","label":"car","confidence":0.2,"box":[1,1,5,5]}' \
    '{"image_id":"a","label":"person","confidence":0.9,"box":[2,2,6,9]}' \
    '{"image_id":"a","label":"car","confidence":0.05,"box":[1,1,5,5]}' > "$out"
fi
"#,
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

    let mut spec = DetectorSpec::defaults(Architecture::FasterRcnn, Backbone::Resnet101, classes(), Protocol::Baseline)
        .unwrap();
    spec.external_command = Some(script);
    let mut d = register_detector(spec).unwrap();
    d.set_work_dir(dir.path().join("handle"));
    assert!(d.train(&corpus).unwrap().is_empty());
    let out = d.infer(&corpus.records, 0.1).unwrap();
    let conf: Vec<f64> = out.detections.iter().map(|x| x.confidence).collect();
    assert_eq!(conf, vec![0.9, 0.2]);

    let handle = dir.path().join("ext.safetensors");
    d.save(&handle).unwrap();
    let back = thermoscope_detect::Detector::load(&handle).unwrap();
    assert_eq!(back.infer(&corpus.records, 0.1).unwrap(), out);
}

#[test]
fn benchmark_counts_samples_and_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = thermal_corpus(dir.path(), 2, 0);
    let d = mini(1, 0);
    let report = benchmark_fps(&d, &corpus.records, 2, 10).unwrap();
    assert_eq!(report.samples(), 10);
    assert!(report.mean_fps > 0.0 && report.std_fps >= 0.0);
    assert!(!report.hardware.is_empty());
    assert!(matches!(benchmark_fps(&d, &[], 2, 10), Err(DetectError::EmptyBenchmark)));
}

#[test]
fn benchmark_time_scales_with_image_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = thermal_corpus(dir.path(), 16, 0);
    let d = mini(1, 0);
    let half = &corpus.records[..8];
    let full = &corpus.records[..16];
    // Best of three guards against scheduler noise on a shared machine.
    let best = |images: &[LabeledImage]| {
        (0..3)
            .map(|_| benchmark_fps(&d, images, 1, 5).unwrap().total_seconds())
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = best(full) / best(half);
    assert!((1.5..=2.5).contains(&ratio), "time ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn threshold_filters_monotonically(lo in 0.0f64..1.0, delta in 0.0f64..0.5) {
        let dir = tempfile::tempdir().unwrap();
        let corpus = thermal_corpus(dir.path(), 1, 0);
        let d = mini(1, 0);
        let a = d.infer(&corpus.records, lo).unwrap().detections;
        let b = d.infer(&corpus.records, lo + delta).unwrap().detections;
        prop_assert!(a.iter().all(|x| x.confidence >= lo));
        prop_assert!(b.len() <= a.len());
    }
}
