use std::fs;
use std::path::Path;

use serde_json::json;
use thermoscope_core::data::{
    parse_flir_annotations, parse_kaist_annotations, DataError, DatasetManifest, Spectrum, Split, FLIR_CLASSES,
};
use thermoscope_core::imageio::{save_png, PlanarImage};

fn flir_classes() -> Vec<String> {
    FLIR_CLASSES.iter().map(|s| s.to_string()).collect()
}

fn coco(images: &[(u64, &str)], anns: &[(u64, u64, [f64; 4])]) -> serde_json::Value {
    json!({
        "images": images.iter().map(|(id, f)| json!({"id": id, "file_name": f, "width": 640, "height": 512})).collect::<Vec<_>>(),
        "annotations": anns.iter().enumerate().map(|(i, (img, cat, b))| json!({"id": i, "image_id": img, "category_id": cat, "bbox": b})).collect::<Vec<_>>(),
        "categories": [
            {"id": 1, "name": "person"}, {"id": 2, "name": "bike"}, {"id": 3, "name": "car"}, {"id": 17, "name": "dog"}, {"id": 99, "name": "sign"}
        ]
    })
}

fn write_json(path: &Path, v: &serde_json::Value) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
}

#[test]
fn flir_three_images_with_dog_only_frame() {
    let dir = tempfile::tempdir().unwrap();
    let index = coco(
        &[(1, "thermal_8_bit/FLIR_00001.jpeg"), (2, "thermal_8_bit/FLIR_00002.jpeg"), (3, "thermal_8_bit/FLIR_00003.jpeg")],
        &[
            (1, 1, [10.0, 20.0, 30.0, 60.0]),
            (1, 3, [100.0, 100.0, 80.0, 40.0]),
            (2, 17, [5.0, 5.0, 20.0, 20.0]),
            (3, 2, [200.0, 150.0, 40.0, 40.0]),
            (3, 99, [1.0, 1.0, 2.0, 2.0]),
            (3, 1, [620.0, 500.0, 40.0, 40.0]),
        ],
    );
    write_json(&dir.path().join("thermal_annotations.json"), &index);
    let (m, report) = parse_flir_annotations(dir.path(), &flir_classes()).unwrap();

    assert_eq!(m.records.len(), 3);
    let dog_only = m.get("FLIR_00002").unwrap();
    assert!(dog_only.annotations.is_empty());
    assert_eq!(m.get("FLIR_00001").unwrap().annotations.len(), 2);
    let third = m.get("FLIR_00003").unwrap();
    assert_eq!(third.annotations[0].label, "bicycle");
    assert_eq!(third.annotations[1].bbox.x_max, 640.0);
    assert!(m.records.iter().all(|r| r.spectrum == Spectrum::Thermal));
    assert_eq!(report.dropped_dog, 1);
    assert_eq!(report.skipped_unknown_class, 1);
    assert_eq!(report.clipped_boxes, 1);
    assert_eq!(m.count(Split::Train) + m.count(Split::Val), 3);
    m.validate().unwrap();
}

#[test]
fn flir_standard_split_directories() {
    let dir = tempfile::tempdir().unwrap();
    write_json(
        &dir.path().join("train/thermal_annotations.json"),
        &coco(&[(1, "a.jpeg"), (2, "b.jpeg")], &[(1, 3, [1.0, 1.0, 5.0, 5.0])]),
    );
    write_json(&dir.path().join("val/thermal_annotations.json"), &coco(&[(1, "c.jpeg")], &[]));
    let (m, _) = parse_flir_annotations(dir.path(), &flir_classes()).unwrap();
    assert_eq!((m.count(Split::Train), m.count(Split::Val)), (2, 1));
    assert_eq!(m.get("c").unwrap().path, dir.path().join("val/c.jpeg"));
}

#[test]
fn flir_explicit_split_files() {
    let dir = tempfile::tempdir().unwrap();
    write_json(
        &dir.path().join("annotations.json"),
        &coco(&[(1, "a.png"), (2, "b.png"), (3, "c.png")], &[]),
    );
    fs::create_dir_all(dir.path().join("splits")).unwrap();
    fs::write(dir.path().join("splits/train.txt"), "a\nc\n").unwrap();
    fs::write(dir.path().join("splits/val.txt"), "b\n").unwrap();
    let (m, _) = parse_flir_annotations(dir.path(), &flir_classes()).unwrap();
    assert_eq!(m.split_of("b"), Some(Split::Val));
    assert_eq!(m.count(Split::Train), 2);
}

#[test]
fn flir_empty_missing_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        parse_flir_annotations(dir.path(), &flir_classes()),
        Err(DataError::MissingIndex(_))
    ));

    write_json(&dir.path().join("thermal_annotations.json"), &coco(&[], &[]));
    let (m, _) = parse_flir_annotations(dir.path(), &flir_classes()).unwrap();
    assert!(m.records.is_empty() && m.split.is_empty());

    write_json(
        &dir.path().join("thermal_annotations.json"),
        &json!({
            "images": [{"id": 1, "file_name": "FLIR_bad.jpeg", "width": 640, "height": 512}],
            "annotations": [{"id": 0, "image_id": 1, "category_id": 1, "bbox": [1.0, 2.0, 3.0]}],
            "categories": [{"id": 1, "name": "person"}]
        }),
    );
    let err = parse_flir_annotations(dir.path(), &flir_classes()).unwrap_err();
    assert!(err.to_string().contains("FLIR_bad"), "{err}");
}

fn write_frame(root: &Path, seq: &str, frame: &str, ann: &str, spectra: &[&str]) {
    let ann_path = root.join("annotations").join(seq).join(format!("{frame}.txt"));
    fs::create_dir_all(ann_path.parent().unwrap()).unwrap();
    fs::write(ann_path, ann).unwrap();
    for s in spectra {
        let p = root.join(seq).join(s).join(format!("{frame}.png"));
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        save_png(&p, &PlanarImage::filled(3, 256, 320, 0.5)).unwrap();
    }
}

#[test]
fn kaist_pairs_share_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let header = "% bbGt version=3\n";
    write_frame(dir.path(), "set00/V000", "I00000", &format!("{header}person 10 20 30 60 0 0 0 0 0 0 0\n"), &["visible", "lwir"]);
    write_frame(dir.path(), "set00/V000", "I00001", &format!("{header}person 50 40 20 50 0\npeople 1 1 9 9 0\n"), &["visible", "lwir"]);
    let (m, report) = parse_kaist_annotations(dir.path()).unwrap();

    assert_eq!(m.records.len(), 4);
    assert_eq!(m.filter_spectrum(Spectrum::Thermal).records.len(), 2);
    assert_eq!(m.class_set, vec!["person".to_string()]);
    assert_eq!(report.skipped_unknown_class, 1);
    let pairs = m.pairs().unwrap();
    assert_eq!(pairs.len(), 2);
    for (key, (v, t)) in &pairs {
        assert_eq!(v.annotations, t.annotations, "{key}");
        assert_eq!(v.annotations.len(), 1);
        assert_eq!(m.split_of(&v.image_id), m.split_of(&t.image_id));
    }
    let first = &pairs["set00/V000/I00000"].1;
    assert_eq!((first.annotations[0].bbox.x_max, first.annotations[0].bbox.y_max), (40.0, 80.0));
    assert_eq!((first.width, first.height), (320, 256));
}

#[test]
fn kaist_unpaired_frame_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write_frame(dir.path(), "set01/V002", "I00007", "person 1 1 5 5 0\n", &["lwir"]);
    match parse_kaist_annotations(dir.path()) {
        Err(DataError::Unpaired(frame)) => assert_eq!(frame, "set01/V002/I00007"),
        other => panic!("expected pairing error, got {other:?}"),
    }
}

#[test]
fn manifest_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_frame(dir.path(), "s", "f0", "person 1 1 5 5\n", &["visible", "lwir"]);
    let (m, _) = parse_kaist_annotations(dir.path()).unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}
