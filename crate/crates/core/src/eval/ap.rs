use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::matching::{confidence_order, match_detections, Outcome};
use super::{Detection, EvalError};
use crate::data::ObjectAnnotation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interpolation {
    #[default]
    #[serde(rename = "all-point")]
    AllPoint,
    #[serde(rename = "voc2007-11pt")]
    Voc11Point,
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Interpolation::AllPoint => "all-point",
            Interpolation::Voc11Point => "voc2007-11pt",
        })
    }
}

impl std::str::FromStr for Interpolation {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "all-point" => Ok(Interpolation::AllPoint),
            "voc2007-11pt" | "11-point" => Ok(Interpolation::Voc11Point),
            other => Err(EvalError::Contract(format!("unknown interpolation `{other}`"))),
        }
    }
}

/// Precision/recall after each non-ignored detection in confidence order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PRCurve {
    pub points: Vec<(f64, f64)>,
}

/// Dataset-level counts for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    /// Non-difficult ground truths.
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Matches one class over a dataset. `gts` maps image id to that image's
/// ground truths of the class; detections on unknown images are errors.
pub fn pr_curve(
    dets: &[Detection],
    gts: &BTreeMap<String, Vec<ObjectAnnotation>>,
    iou_threshold: f64,
) -> Result<(PRCurve, ClassCounts), EvalError> {
    let mut per_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        if !gts.contains_key(&d.image_id) {
            return Err(EvalError::UnknownImage(d.image_id.clone()));
        }
        per_image.entry(&d.image_id).or_default().push(i);
    }

    let mut outcome = vec![Outcome::Fp; dets.len()];
    let mut counts = ClassCounts::default();
    for (image_id, image_gts) in gts {
        counts.gt += image_gts.iter().filter(|g| !g.difficult).count();
        let idx = per_image.remove(image_id.as_str()).unwrap_or_default();
        let local: Vec<Detection> = idx.iter().map(|&i| dets[i].clone()).collect();
        let m = match_detections(&local, image_gts, iou_threshold)?;
        for (&k, o) in m.order.iter().zip(&m.outcomes) {
            outcome[idx[k]] = *o;
        }
        counts.fn_ += m.false_negatives;
    }

    let mut curve = PRCurve::default();
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in confidence_order(dets.iter().map(|d| &d.confidence)) {
        match outcome[i] {
            Outcome::Tp => tp += 1,
            Outcome::Fp => fp += 1,
            Outcome::Ignored => continue,
        }
        let recall = if counts.gt == 0 { 0.0 } else { tp as f64 / counts.gt as f64 };
        curve.points.push((recall, tp as f64 / (tp + fp) as f64));
    }
    counts.tp = tp;
    counts.fp = fp;
    Ok((curve, counts))
}

impl PRCurve {
    /// Area under the curve; `None` without ground truth.
    pub fn average_precision(&self, gt: usize, mode: Interpolation) -> Option<f64> {
        if gt == 0 {
            return None;
        }
        Some(match mode {
            Interpolation::AllPoint => {
                // Envelope: precision at each point becomes the best precision at
                // any equal-or-higher recall.
                let mut envelope: Vec<f64> = self.points.iter().map(|p| p.1).collect();
                for k in (0..envelope.len().saturating_sub(1)).rev() {
                    envelope[k] = envelope[k].max(envelope[k + 1]);
                }
                let mut ap = 0.0;
                let mut prev_recall = 0.0;
                for (&(recall, _), p) in self.points.iter().zip(&envelope) {
                    if recall > prev_recall {
                        ap += (recall - prev_recall) * p;
                        prev_recall = recall;
                    }
                }
                ap
            }
            Interpolation::Voc11Point => {
                (0..=10)
                    .map(|t| {
                        let t = t as f64 / 10.0;
                        self.points
                            .iter()
                            .filter(|p| p.0 >= t)
                            .map(|p| p.1)
                            .fold(0.0, f64::max)
                    })
                    .sum::<f64>()
                    / 11.0
            }
        })
    }
}

/// Single-class AP over a dataset. `None` when there is no non-difficult
/// ground truth.
pub fn average_precision(
    dets: &[Detection],
    gts: &BTreeMap<String, Vec<ObjectAnnotation>>,
    iou_threshold: f64,
    mode: Interpolation,
) -> Result<Option<f64>, EvalError> {
    let (curve, counts) = pr_curve(dets, gts, iou_threshold)?;
    Ok(curve.average_precision(counts.gt, mode))
}

/// Arithmetic mean over classes. Every AP must be defined: classes without
/// ground truth have to be excluded by the caller.
pub fn mean_ap<K: AsRef<str>>(per_class: &BTreeMap<K, Option<f64>>) -> Result<f64, EvalError> {
    if per_class.is_empty() {
        return Err(EvalError::Contract("mean AP over an empty class set".into()));
    }
    let mut sum = 0.0;
    for (class, ap) in per_class {
        sum += ap.ok_or_else(|| EvalError::AbsentAp(class.as_ref().to_string()))?;
    }
    Ok(sum / per_class.len() as f64)
}
