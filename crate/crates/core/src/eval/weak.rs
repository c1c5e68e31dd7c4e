use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::match_detections;
use super::{Detection, EvalError};
use crate::data::ObjectAnnotation;

/// Pseudo-label audit against held-out ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `tp / (tp + fp + fn)`; absent when all three are zero.
    pub accuracy: Option<f64>,
}

impl WeakLabelReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let total = tp + fp + fn_;
        WeakLabelReport {
            tp,
            fp,
            fn_,
            accuracy: (total > 0).then(|| tp as f64 / total as f64),
        }
    }
}

/// Matches per image and per class, then sums counts over everything.
pub fn weak_label_report(
    dets: &[Detection],
    gts: &BTreeMap<String, Vec<ObjectAnnotation>>,
    iou_threshold: f64,
) -> Result<WeakLabelReport, EvalError> {
    type Group = (Vec<Detection>, Vec<ObjectAnnotation>);
    let mut groups: BTreeMap<(&str, &str), Group> = BTreeMap::new();
    for d in dets {
        if !gts.contains_key(&d.image_id) {
            return Err(EvalError::UnknownImage(d.image_id.clone()));
        }
        groups.entry((&d.image_id, &d.label)).or_default().0.push(d.clone());
    }
    for (image_id, anns) in gts {
        for a in anns {
            groups.entry((image_id, &a.label)).or_default().1.push(a.clone());
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (d, g) in groups.values() {
        let m = match_detections(d, g, iou_threshold)?;
        tp += m.true_positives();
        fp += m.false_positives();
        fn_ += m.false_negatives;
    }
    Ok(WeakLabelReport::from_counts(tp, fp, fn_))
}
