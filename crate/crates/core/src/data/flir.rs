//! FLIR-ADAS thermal annotations in COCO-style JSON.
//!
//! Two layouts are recognized under `source_dir`:
//!
//! * the distributed standard split: `train/thermal_annotations.json` and
//!   `val/thermal_annotations.json`, with image `file_name`s relative to the
//!   split directory;
//! * a single index `thermal_annotations.json` (or `annotations.json`) with
//!   file names relative to `source_dir`. Split membership then comes from
//!   `splits/train.txt` + `splits/val.txt` (one image id per line) when both
//!   exist, otherwise from [`make_split`](super::make_split).
//!
//! Image ids are file stems. The dog category is dropped; `bike` is read as
//! `bicycle`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use log::warn;
use serde::Deserialize;

use super::split::{make_split, SplitFallback};
use super::{
    BoundingBox, DataError, DatasetManifest, IngestReport, LabeledImage, ObjectAnnotation, Result,
    Spectrum, Split,
};

#[derive(Deserialize)]
struct CocoIndex {
    #[serde(default)]
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    category_id: u64,
    bbox: Vec<f64>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

fn canonical_label(name: &str) -> String {
    match name.to_ascii_lowercase().as_str() {
        "bike" => "bicycle".to_string(),
        other => other.to_string(),
    }
}

fn read_index(path: &Path) -> Result<CocoIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn image_id_of(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string())
}

/// Converts one COCO index into records.
fn records_from_index(
    index: CocoIndex,
    image_root: &Path,
    class_set: &[String],
    report: &mut IngestReport,
) -> Result<Vec<LabeledImage>> {
    let categories: HashMap<u64, String> = index
        .categories
        .into_iter()
        .map(|c| (c.id, canonical_label(&c.name)))
        .collect();

    let mut by_coco_id: BTreeMap<u64, LabeledImage> = BTreeMap::new();
    for img in index.images {
        let image_id = image_id_of(&img.file_name);
        if img.width == 0 || img.height == 0 {
            return Err(DataError::record(&image_id, "zero image dimension"));
        }
        let rec = LabeledImage {
            image_id: image_id.clone(),
            path: image_root.join(&img.file_name),
            width: img.width,
            height: img.height,
            spectrum: Spectrum::Thermal,
            annotations: Vec::new(),
            pair_key: None,
        };
        if by_coco_id.insert(img.id, rec).is_some() {
            return Err(DataError::record(&image_id, format!("duplicate COCO image id {}", img.id)));
        }
    }

    for ann in index.annotations {
        let Some(rec) = by_coco_id.get_mut(&ann.image_id) else {
            return Err(DataError::record(
                &ann.image_id.to_string(),
                "annotation references an unknown image",
            ));
        };
        let &[x, y, w, h] = ann.bbox.as_slice() else {
            return Err(DataError::record(
                &rec.image_id,
                format!("bbox must have 4 values, got {}", ann.bbox.len()),
            ));
        };
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(DataError::record(
                &rec.image_id,
                format!("malformed bbox [{x}, {y}, {w}, {h}]"),
            ));
        }
        let label = categories.get(&ann.category_id).cloned().unwrap_or_default();
        if label == "dog" {
            report.dropped_dog += 1;
            continue;
        }
        if !class_set.contains(&label) {
            report.skipped_unknown_class += 1;
            continue;
        }
        let raw = BoundingBox {
            x_min: x,
            y_min: y,
            x_max: x + w,
            y_max: y + h,
        };
        if let Some(bbox) = report.admit_box(raw, rec.width, rec.height) {
            rec.annotations.push(ObjectAnnotation::new(bbox, label));
        }
    }
    Ok(by_coco_id.into_values().collect())
}

fn read_split_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Applies `splits/train.txt` + `splits/val.txt` when present, else the fallback.
pub(crate) fn assign_split(
    mut manifest: DatasetManifest,
    source_dir: &Path,
    fallback: &SplitFallback,
    key_of: impl Fn(&LabeledImage) -> String,
) -> Result<DatasetManifest> {
    if manifest.records.is_empty() {
        manifest.split.clear();
        return Ok(manifest);
    }
    let train_file = source_dir.join("splits").join("train.txt");
    let val_file = source_dir.join("splits").join("val.txt");
    if !(train_file.is_file() && val_file.is_file()) {
        return make_split(&manifest, fallback.train_fraction, fallback.seed);
    }
    let mut side: HashMap<String, Split> = HashMap::new();
    for (file, s) in [(&train_file, Split::Train), (&val_file, Split::Val)] {
        for key in read_split_list(file)? {
            if side.insert(key.clone(), s).is_some_and(|prev| prev != s) {
                return Err(DataError::Split(format!("`{key}` listed in both train and val")));
            }
        }
    }
    manifest.split.clear();
    for r in &manifest.records {
        let key = key_of(r);
        let s = side.get(&key).copied().ok_or_else(|| {
            DataError::Split(format!("`{key}` is missing from the split files"))
        })?;
        manifest.split.insert(r.image_id.clone(), s);
    }
    Ok(manifest)
}

pub fn parse_flir_annotations(source_dir: &Path, class_set: &[String]) -> Result<(DatasetManifest, IngestReport)> {
    parse_flir_annotations_with(source_dir, class_set, &SplitFallback::default())
}

pub fn parse_flir_annotations_with(
    source_dir: &Path,
    class_set: &[String],
    fallback: &SplitFallback,
) -> Result<(DatasetManifest, IngestReport)> {
    let mut report = IngestReport::default();
    let mut manifest = DatasetManifest::new(
        source_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "flir".into()),
        class_set.to_vec(),
    );

    let standard: Vec<(Split, PathBuf)> = [Split::Train, Split::Val]
        .into_iter()
        .map(|s| {
            let dir = source_dir.join(match s {
                Split::Train => "train",
                Split::Val => "val",
            });
            (s, dir)
        })
        .collect();

    if standard.iter().all(|(_, d)| d.join("thermal_annotations.json").is_file()) {
        for (side, dir) in standard {
            let index = read_index(&dir.join("thermal_annotations.json"))?;
            for rec in records_from_index(index, &dir, class_set, &mut report)? {
                if manifest.split.insert(rec.image_id.clone(), side).is_some() {
                    return Err(DataError::record(&rec.image_id, "image id appears in both splits"));
                }
                manifest.records.push(rec);
            }
        }
    } else {
        let index_path = ["thermal_annotations.json", "annotations.json"]
            .iter()
            .map(|f| source_dir.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| DataError::MissingIndex(source_dir.to_path_buf()))?;
        let index = read_index(&index_path)?;
        manifest.records = records_from_index(index, source_dir, class_set, &mut report)?;
        manifest = assign_split(manifest, source_dir, fallback, |r| r.image_id.clone())?;
    }

    if report.warnings() > 0 {
        warn!(
            "{}: skipped {} annotations outside the class set, clipped {}, dropped {} degenerate",
            source_dir.display(),
            report.skipped_unknown_class,
            report.clipped_boxes,
            report.dropped_degenerate
        );
    }
    manifest.validate()?;
    Ok((manifest, report))
}
