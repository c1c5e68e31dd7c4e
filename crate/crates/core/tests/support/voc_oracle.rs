//! Brute-force VOC average precision on integer-coordinate instances.
//!
//! Written against the definition only: every prefix of the confidence
//! ranking is re-matched from scratch with integer IoU comparisons, and the
//! area is summed one true positive at a time.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use thermoscope_core::data::{BoundingBox, ObjectAnnotation};
use thermoscope_core::eval::Detection;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl GridBox {
    fn area(&self) -> i64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// `(intersection, union)` as exact integers.
    fn overlap(&self, o: &GridBox) -> (i64, i64) {
        let iw = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0);
        let ih = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0);
        let inter = iw * ih;
        (inter, self.area() + o.area() - inter)
    }

    pub fn to_box(self) -> BoundingBox {
        BoundingBox::new(self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64).unwrap()
    }
}

#[derive(Clone, Debug)]
pub struct GridImage {
    pub gts: Vec<(GridBox, bool)>,
    /// `(box, confidence)`.
    pub dets: Vec<(GridBox, f64)>,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub images: Vec<GridImage>,
}

impl Instance {
    pub fn detections(&self) -> Vec<Detection> {
        self.images
            .iter()
            .enumerate()
            .flat_map(|(i, img)| {
                img.dets
                    .iter()
                    .map(move |(b, c)| Detection::new(format!("img{i}"), "car", b.to_box(), *c))
            })
            .collect()
    }

    pub fn ground_truth(&self) -> BTreeMap<String, Vec<ObjectAnnotation>> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let anns = img
                    .gts
                    .iter()
                    .map(|(b, difficult)| ObjectAnnotation {
                        bbox: b.to_box(),
                        label: "car".into(),
                        difficult: *difficult,
                    })
                    .collect();
                (format!("img{i}"), anns)
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Tp,
    Fp,
    Ignored,
}

/// Ranking of `(image, det)` pairs: descending confidence, ties by input order.
fn ranking(inst: &Instance) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = Vec::new();
    for (i, img) in inst.images.iter().enumerate() {
        for d in 0..img.dets.len() {
            all.push((i, d));
        }
    }
    let mut ranked: Vec<(usize, usize)> = Vec::new();
    for item in all {
        let c = inst.images[item.0].dets[item.1].1;
        let pos = ranked
            .iter()
            .position(|&(i, d)| inst.images[i].dets[d].1 < c)
            .unwrap_or(ranked.len());
        ranked.insert(pos, item);
    }
    ranked
}

/// Status of the last detection of `prefix` after matching the prefix anew.
fn status_of_last(inst: &Instance, prefix: &[(usize, usize)], thr: (i64, i64)) -> Status {
    let mut taken: Vec<Vec<bool>> = inst.images.iter().map(|img| vec![false; img.gts.len()]).collect();
    let mut last = Status::Fp;
    for &(i, d) in prefix {
        let det = inst.images[i].dets[d].0;
        let mut best: Option<(usize, i64, i64)> = None;
        for (g, (gt, _)) in inst.images[i].gts.iter().enumerate() {
            if taken[i][g] {
                continue;
            }
            let (inter, union) = det.overlap(gt);
            if inter * thr.1 < thr.0 * union {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bi, bu)) => inter * bu > bi * union,
            };
            if better {
                best = Some((g, inter, union));
            }
        }
        last = match best {
            None => Status::Fp,
            Some((g, _, _)) if inst.images[i].gts[g].1 => Status::Ignored,
            Some((g, _, _)) => {
                taken[i][g] = true;
                Status::Tp
            }
        };
    }
    last
}

/// `thr` is the IoU threshold as a fraction `num / den`.
pub fn brute_force_ap(inst: &Instance, thr: (i64, i64), eleven_point: bool) -> Option<f64> {
    let npos: usize = inst
        .images
        .iter()
        .map(|img| img.gts.iter().filter(|g| !g.1).count())
        .sum();
    if npos == 0 {
        return None;
    }
    let ranked = ranking(inst);
    let mut points: Vec<(usize, usize, Status)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for k in 1..=ranked.len() {
        let s = status_of_last(inst, &ranked[..k], thr);
        match s {
            Status::Tp => tp += 1,
            Status::Fp => fp += 1,
            Status::Ignored => continue,
        }
        points.push((tp, fp, s));
    }
    let precision = |p: &(usize, usize, Status)| p.0 as f64 / (p.0 + p.1) as f64;
    if eleven_point {
        let mut total = 0.0;
        for t in 0..=10usize {
            let best = points
                .iter()
                .filter(|p| 10 * p.0 >= t * npos)
                .map(precision)
                .fold(0.0, f64::max);
            total += best;
        }
        Some(total / 11.0)
    } else {
        let mut ap = 0.0;
        for (k, p) in points.iter().enumerate() {
            if p.2 == Status::Tp {
                let best = points[k..].iter().map(precision).fold(0.0, f64::max);
                ap += best / npos as f64;
            }
        }
        Some(ap)
    }
}

pub fn random_box(rng: &mut impl Rng, grid: i64) -> GridBox {
    let (a, b) = loop {
        let a = rng.random_range(0..=grid);
        let b = rng.random_range(0..=grid);
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    let (c, d) = loop {
        let c = rng.random_range(0..=grid);
        let d = rng.random_range(0..=grid);
        if c != d {
            break (c.min(d), c.max(d));
        }
    };
    GridBox { x0: a, y0: c, x1: b, y1: d }
}

/// Up to 3 images, ≤ 3 ground truths and ≤ 5 detections each, on a 4×4
/// grid; confidences come from a small set so ties occur.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let images = (0..rng.random_range(1..=3))
        .map(|_| GridImage {
            gts: (0..rng.random_range(0..=3))
                .map(|_| (random_box(rng, 4), rng.random_bool(0.2)))
                .collect(),
            dets: (0..rng.random_range(0..=5))
                .map(|_| (random_box(rng, 4), rng.random_range(1..=6) as f64 / 8.0))
                .collect(),
        })
        .collect();
    Instance { images }
}

/// Every box on a `grid`×`grid` lattice.
pub fn all_boxes(grid: i64) -> Vec<GridBox> {
    let mut out = Vec::new();
    for x0 in 0..grid {
        for x1 in x0 + 1..=grid {
            for y0 in 0..grid {
                for y1 in y0 + 1..=grid {
                    out.push(GridBox { x0, y0, x1, y1 });
                }
            }
        }
    }
    out
}
