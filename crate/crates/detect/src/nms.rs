//! Greedy non-maximum suppression.

use crate::anchors::{rect_iou, Rect};

/// Default class-wise suppression threshold.
pub const NMS_IOU: f64 = 0.45;

/// Indices kept by greedy NMS, in descending score order. Ties keep the
/// lower input index first.
pub fn nms(boxes: &[Rect], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep.iter().all(|&k| rect_iou(&boxes[k], &boxes[i]) <= iou_threshold) {
            keep.push(i);
        }
    }
    keep
}
