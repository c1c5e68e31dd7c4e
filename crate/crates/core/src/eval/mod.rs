//! PASCAL-VOC style detection scoring.

mod ap;
mod matching;
mod weak;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BoundingBox, DatasetManifest, LabeledImage, ObjectAnnotation};

pub use ap::{average_precision, mean_ap, pr_curve, ClassCounts, Interpolation, PRCurve};
pub use matching::{iou, match_detections, MatchResult, Outcome};
pub use weak::{weak_label_report, WeakLabelReport};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation contract violated: {0}")]
    Contract(String),

    #[error("AP for class `{0}` is undefined (no ground truth); exclude the class explicitly")]
    AbsentAp(String),

    #[error("detection refers to image `{0}` outside the evaluation set")]
    UnknownImage(String),

    #[error("detection file {}: {reason}", .path.display())]
    Format { path: std::path::PathBuf, reason: String },

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A scored box. Serialized as `{image_id, label, confidence, box: [x1, y1, x2, y2]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionLine", into = "DetectionLine")]
pub struct Detection {
    pub image_id: String,
    pub label: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct DetectionLine {
    image_id: String,
    label: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

impl From<Detection> for DetectionLine {
    fn from(d: Detection) -> Self {
        let b = d.bbox;
        DetectionLine {
            image_id: d.image_id,
            label: d.label,
            confidence: d.confidence,
            bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
        }
    }
}

impl TryFrom<DetectionLine> for Detection {
    type Error = String;

    fn try_from(l: DetectionLine) -> Result<Self, String> {
        let [x0, y0, x1, y1] = l.bbox;
        let bbox = BoundingBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&l.confidence) {
            return Err(format!("confidence {} outside [0, 1]", l.confidence));
        }
        Ok(Detection {
            image_id: l.image_id,
            label: l.label,
            bbox,
            confidence: l.confidence,
        })
    }
}

impl Detection {
    pub fn new(image_id: impl Into<String>, label: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Self {
        Detection {
            image_id: image_id.into(),
            label: label.into(),
            bbox,
            confidence,
        }
    }
}

pub fn write_detections_jsonl(path: &Path, dets: &[Detection]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for d in dets {
        let line = serde_json::to_string(d).expect("detections serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_detections_jsonl(path: &Path) -> Result<Vec<Detection>, EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut dets = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        dets.push(serde_json::from_str(&line).map_err(|e| EvalError::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(dets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// Classes left out of the mean, typically those absent from the split.
    pub exclude_classes: Vec<String>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            interpolation: Interpolation::AllPoint,
            exclude_classes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub ap: Option<f64>,
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: BTreeMap<String, ClassReport>,
    pub map: f64,
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl EvalReport {
    pub fn ap(&self, class: &str) -> Option<f64> {
        self.classes.get(class).and_then(|c| c.ap)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Ground truths of `records`, keyed by image id, restricted to one class.
pub fn ground_truth_for<'a>(
    records: impl IntoIterator<Item = &'a LabeledImage>,
    class: &str,
) -> BTreeMap<String, Vec<ObjectAnnotation>> {
    records
        .into_iter()
        .map(|r| {
            let anns = r.annotations.iter().filter(|a| a.label == class).cloned().collect();
            (r.image_id.clone(), anns)
        })
        .collect()
}

/// Scores detections against every record of `manifest`.
pub fn evaluate(dets: &[Detection], manifest: &DatasetManifest, settings: &EvalSettings) -> Result<EvalReport, EvalError> {
    if let Some(d) = dets.iter().find(|d| !manifest.class_set.contains(&d.label)) {
        return Err(EvalError::Contract(format!(
            "detection label `{}` outside the class set",
            d.label
        )));
    }
    let mut classes = BTreeMap::new();
    let mut for_mean = BTreeMap::new();
    for class in &manifest.class_set {
        let class_dets: Vec<Detection> = dets.iter().filter(|d| &d.label == class).cloned().collect();
        let gts = ground_truth_for(&manifest.records, class);
        let (curve, counts) = pr_curve(&class_dets, &gts, settings.iou_threshold)?;
        let ap = curve.average_precision(counts.gt, settings.interpolation);
        if !settings.exclude_classes.contains(class) {
            for_mean.insert(class.as_str(), ap);
        }
        classes.insert(
            class.clone(),
            ClassReport {
                ap,
                gt: counts.gt,
                tp: counts.tp,
                fp: counts.fp,
                fn_: counts.fn_,
            },
        );
    }
    Ok(EvalReport {
        classes,
        map: mean_ap(&for_mean)?,
        iou_threshold: settings.iou_threshold,
        interpolation: settings.interpolation,
    })
}

/// Rows of `(name, report)` as a fixed-width table: one AP column per class
/// in `class_order`, then the mean.
pub fn render_table(rows: &[(&str, &EvalReport)], class_order: &[String]) -> String {
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "model");
    for c in class_order {
        let _ = write!(out, " {c:>9}");
    }
    let _ = writeln!(out, " {:>9}", "mAP");
    for (name, report) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for c in class_order {
            match report.ap(c) {
                Some(ap) => {
                    let _ = write!(out, " {ap:>9.4}");
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        let _ = writeln!(out, " {:>9.4}", report.map);
    }
    out
}
