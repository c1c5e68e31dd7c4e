//! Dense anchor grid, SSD box encoding and anchor-to-ground-truth assignment.

/// `[x1, y1, x2, y2]` in network-input pixels. Anchors may extend past the
/// image edge, so this is not a validated `BoundingBox`.
pub type Rect = [f64; 4];

/// Variances of the center and size offsets.
pub const CENTER_VARIANCE: f64 = 0.1;
pub const SIZE_VARIANCE: f64 = 0.2;
/// Size deltas are clamped before `exp` so decoding never overflows.
const MAX_SIZE_DELTA: f64 = 4.0;

pub fn area(r: &Rect) -> f64 {
    (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0)
}

pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Anchors of one feature map, indexed `(a · H + y) · W + x` so that the
/// `a`-th block of head channels lines up with anchor shape `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGrid {
    pub rects: Vec<Rect>,
    pub shapes: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl AnchorGrid {
    /// `shapes` are `(width, height)` as fractions of the input side.
    pub fn new(input_size: usize, stride: usize, shapes: &[(f64, f64)]) -> Self {
        let g = input_size / stride;
        let side = input_size as f64;
        let mut rects = Vec::with_capacity(shapes.len() * g * g);
        for &(fw, fh) in shapes {
            let (w, h) = (fw * side, fh * side);
            for y in 0..g {
                for x in 0..g {
                    let cx = (x as f64 + 0.5) * stride as f64;
                    let cy = (y as f64 + 0.5) * stride as f64;
                    rects.push([cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]);
                }
            }
        }
        AnchorGrid {
            rects,
            shapes: shapes.len(),
            grid_h: g,
            grid_w: g,
        }
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// Cells per anchor shape.
    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }
}

fn center_size(r: &Rect) -> (f64, f64, f64, f64) {
    ((r[0] + r[2]) / 2.0, (r[1] + r[3]) / 2.0, r[2] - r[0], r[3] - r[1])
}

pub fn encode(anchor: &Rect, gt: &Rect) -> [f64; 4] {
    let (ax, ay, aw, ah) = center_size(anchor);
    let (gx, gy, gw, gh) = center_size(gt);
    [
        (gx - ax) / aw / CENTER_VARIANCE,
        (gy - ay) / ah / CENTER_VARIANCE,
        (gw / aw).ln() / SIZE_VARIANCE,
        (gh / ah).ln() / SIZE_VARIANCE,
    ]
}

pub fn decode(anchor: &Rect, d: &[f64; 4]) -> Rect {
    let (ax, ay, aw, ah) = center_size(anchor);
    let cx = ax + d[0] * CENTER_VARIANCE * aw;
    let cy = ay + d[1] * CENTER_VARIANCE * ah;
    let w = aw * (d[2] * SIZE_VARIANCE).clamp(-MAX_SIZE_DELTA, MAX_SIZE_DELTA).exp();
    let h = ah * (d[3] * SIZE_VARIANCE).clamp(-MAX_SIZE_DELTA, MAX_SIZE_DELTA).exp();
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Index into the ground-truth list.
    Positive(usize),
    Negative,
    Ignore,
}

/// IoU ≥ `pos` is positive, IoU < `neg` negative, in between ignored. Each
/// ground truth also claims its best-overlapping anchor so none goes
/// unmatched.
pub fn assign(anchors: &[Rect], gts: &[Rect], pos: f64, neg: f64) -> Vec<Assignment> {
    let mut best: Vec<(f64, Option<usize>)> = vec![(0.0, None); anchors.len()];
    for (i, a) in anchors.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let v = rect_iou(a, g);
            if v > best[i].0 {
                best[i] = (v, Some(j));
            }
        }
    }
    let mut out: Vec<Assignment> = best
        .iter()
        .map(|&(v, j)| match j {
            Some(j) if v >= pos => Assignment::Positive(j),
            _ if v < neg => Assignment::Negative,
            _ => Assignment::Ignore,
        })
        .collect();
    for (j, g) in gts.iter().enumerate() {
        let forced = anchors
            .iter()
            .enumerate()
            .map(|(i, a)| (rect_iou(a, g), i))
            .fold((0.0, None), |acc, (v, i)| if v > acc.0 { (v, Some(i)) } else { acc });
        if let (_, Some(i)) = forced {
            out[i] = Assignment::Positive(j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let a = [10.0, 12.0, 30.0, 40.0];
        let g = [14.0, 9.0, 41.0, 33.0];
        let back = decode(&a, &encode(&a, &g));
        for (x, y) in back.iter().zip(&g) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(encode(&a, &a), [0.0; 4]);
    }

    #[test]
    fn grid_layout() {
        let grid = AnchorGrid::new(64, 8, &[(0.25, 0.25), (0.5, 0.25)]);
        assert_eq!(grid.len(), 2 * 64);
        assert_eq!(grid.rects[0], [-4.0, -4.0, 12.0, 12.0]);
        assert_eq!(grid.rects[64], [-12.0, -4.0, 20.0, 12.0]);
        assert_eq!(grid.rects[9], [4.0, 4.0, 20.0, 20.0]);
    }

    #[test]
    fn assignment_thresholds_and_forced_match() {
        let anchors = [[0.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 14.0], [50.0, 50.0, 60.0, 60.0], [0.0, 0.0, 10.0, 22.0]];
        let gts = [[0.0, 0.0, 10.0, 10.0], [48.0, 48.0, 56.0, 56.0]];
        let a = assign(&anchors, &gts, 0.5, 0.4);
        assert_eq!(a[0], Assignment::Positive(0));
        assert_eq!(a[1], Assignment::Positive(0));
        // The second GT overlaps nothing well; its best anchor is forced.
        assert_eq!(a[2], Assignment::Positive(1));
        assert_eq!(a[3], Assignment::Ignore);
        assert!(assign(&anchors, &[], 0.5, 0.4).iter().all(|x| *x == Assignment::Negative));
    }
}
