use serde::{Deserialize, Serialize};

use super::{Detection, EvalError};
use crate::data::{BoundingBox, ObjectAnnotation};

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Tp,
    Fp,
    /// Best match is a difficult ground truth: neither credited nor penalized.
    Ignored,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Input indices of the detections in processing order.
    pub order: Vec<usize>,
    /// Outcome of `order[k]`.
    pub outcomes: Vec<Outcome>,
    pub gt_matched: Vec<bool>,
    pub false_negatives: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.outcomes.iter().filter(|o| **o == Outcome::Tp).count()
    }

    pub fn false_positives(&self) -> usize {
        self.outcomes.iter().filter(|o| **o == Outcome::Fp).count()
    }
}

/// Indices sorted by descending confidence; ties keep input order.
pub(crate) fn confidence_order<'a>(confidences: impl Iterator<Item = &'a f64>) -> Vec<usize> {
    let conf: Vec<f64> = confidences.copied().collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    order
}

/// Greedy VOC matching for one image and one class.
///
/// Each detection, in descending confidence, claims the unmatched ground
/// truth with the highest IoU at or above `iou_threshold`. If that ground
/// truth is difficult the detection is ignored and the ground truth stays
/// claimable; difficult ground truths never count as misses.
pub fn match_detections(
    dets: &[Detection],
    gts: &[ObjectAnnotation],
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    if let Some(first) = dets.first() {
        if let Some(d) = dets.iter().find(|d| d.image_id != first.image_id) {
            return Err(EvalError::Contract(format!(
                "detections span images `{}` and `{}`",
                first.image_id, d.image_id
            )));
        }
    }
    let label = dets
        .first()
        .map(|d| d.label.as_str())
        .or_else(|| gts.first().map(|g| g.label.as_str()));
    if let Some(label) = label {
        let stray = dets
            .iter()
            .map(|d| d.label.as_str())
            .chain(gts.iter().map(|g| g.label.as_str()))
            .find(|l| *l != label);
        if let Some(other) = stray {
            return Err(EvalError::Contract(format!(
                "mixed classes `{label}` and `{other}` in one match"
            )));
        }
    }

    let order = confidence_order(dets.iter().map(|d| &d.confidence));
    let mut gt_matched = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    for &i in &order {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !gt_matched[*g])
            .map(|(g, gt)| (g, iou(&dets[i].bbox, &gt.bbox)))
            .filter(|(_, v)| *v >= iou_threshold)
            .fold(None, |acc: Option<(usize, f64)>, cand| match acc {
                Some((_, v)) if v >= cand.1 => acc,
                _ => Some(cand),
            });
        outcomes.push(match best {
            Some((g, _)) if gts[g].difficult => Outcome::Ignored,
            Some((g, _)) => {
                gt_matched[g] = true;
                Outcome::Tp
            }
            None => Outcome::Fp,
        });
    }
    let false_negatives = gts
        .iter()
        .zip(&gt_matched)
        .filter(|(g, m)| !g.difficult && !**m)
        .count();
    Ok(MatchResult {
        order,
        outcomes,
        gt_matched,
        false_negatives,
    })
}
