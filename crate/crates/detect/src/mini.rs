//! reference-mini: a single-scale anchor-based detector small enough to
//! train on a CPU in seconds.
//!
//! Four 3×3 convolutions (three of them stride 2) reduce the input to an
//! 1/8-resolution grid. Two 3×3 heads predict, per anchor, one sigmoid logit
//! per class and four SSD box offsets. Training uses IoU assignment with a
//! forced best anchor per object and 3:1 hard-negative mining.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thermoscope_core::imageio::load_rgb;
use thermoscope_core::{seed, BoundingBox, DatasetManifest, Detection, LabeledImage, PlanarImage, Split};
use thermoscope_tensor::optim::Adam;
use thermoscope_tensor::{init, ParamStore, Tensor};

use crate::anchors::{assign, decode, encode, AnchorGrid, Assignment, Rect};
use crate::error::{DetectError, Result};
use crate::nms::{nms, NMS_IOU};
use crate::spec::DetectorSpec;

/// `(in, out, stride)` per backbone convolution.
const BACKBONE: [(usize, usize, usize); 4] = [(3, 32, 2), (32, 64, 2), (64, 128, 2), (128, 128, 1)];
const FEATURES: usize = 128;
pub const STRIDE: usize = 8;
const POSITIVE_IOU: f64 = 0.5;
const NEGATIVE_IOU: f64 = 0.4;
const NEGATIVES_PER_POSITIVE: usize = 3;
/// Initial foreground probability of every class logit.
const PRIOR: f64 = 0.01;
const HEAD_INIT_STD: f64 = 0.01;
pub const MAX_DETECTIONS: usize = 100;

/// Anchor `(width, height)` as fractions of the input side: three scales by
/// three aspect ratios.
pub fn anchor_shapes() -> Vec<(f64, f64)> {
    let r = std::f64::consts::SQRT_2;
    [0.12, 0.22, 0.36]
        .iter()
        .flat_map(|&s| [(s * r, s / r), (s, s), (s / r, s * r)])
        .collect()
}

/// One optimizer step of detector training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetTrainRecord {
    pub iter: usize,
    pub epoch: usize,
    pub loss: f64,
    pub cls: f64,
    #[serde(rename = "box")]
    pub box_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferOutput {
    pub detections: Vec<Detection>,
    /// Image ids that could not be decoded.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct MiniDetector {
    spec: DetectorSpec,
    params: ParamStore,
    anchors: AnchorGrid,
}

/// A network-ready image and the factors mapping input pixels back.
struct Prepared {
    tensor_data: Vec<f64>,
    scale_x: f64,
    scale_y: f64,
    width: u32,
    height: u32,
}

fn prepare(img: &PlanarImage, input: usize) -> Result<Prepared> {
    let resized = img.resized(input, input)?.expand_rgb()?;
    Ok(Prepared {
        tensor_data: resized.data,
        scale_x: img.width as f64 / input as f64,
        scale_y: img.height as f64 / input as f64,
        width: img.width as u32,
        height: img.height as u32,
    })
}

impl MiniDetector {
    pub fn new(spec: DetectorSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(spec.seed, "detector-init");
        let mut p = ParamStore::trainable();
        for (i, (cin, cout, _)) in BACKBONE.iter().enumerate() {
            let fan_in = cin * 9;
            p.insert(format!("backbone.{i}.weight"), init::kaiming_normal(&mut rng, cout * fan_in, fan_in), &[*cout, *cin, 3, 3])?;
            p.insert(format!("backbone.{i}.bias"), vec![0.0; *cout], &[*cout])?;
        }
        let a = anchor_shapes().len();
        let k = spec.class_set.len();
        let prior_bias = -((1.0 - PRIOR) / PRIOR).ln();
        p.insert("cls.weight", init::normal(&mut rng, a * k * FEATURES * 9, HEAD_INIT_STD), &[a * k, FEATURES, 3, 3])?;
        p.insert("cls.bias", vec![prior_bias; a * k], &[a * k])?;
        p.insert("box.weight", init::normal(&mut rng, a * 4 * FEATURES * 9, HEAD_INIT_STD), &[a * 4, FEATURES, 3, 3])?;
        p.insert("box.bias", vec![0.0; a * 4], &[a * 4])?;
        let anchors = AnchorGrid::new(spec.input_size, STRIDE, &anchor_shapes());
        Ok(MiniDetector { spec, params: p, anchors })
    }

    /// Restores a detector; parameter names and shapes must match `spec`.
    pub fn from_params(spec: DetectorSpec, params: ParamStore) -> Result<Self> {
        let fresh = MiniDetector::new(spec)?;
        if params.len() != fresh.params.len() {
            return Err(DetectError::Config(format!(
                "expected {} parameters, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (name, t) in fresh.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(DetectError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(MiniDetector { params, ..fresh })
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_values()
    }

    fn conv(&self, x: &Tensor, name: &str, stride: usize) -> Result<Tensor> {
        let w = self.params.get(&format!("{name}.weight"))?;
        let b = self.params.get(&format!("{name}.bias"))?;
        Ok(x.conv2d(w, Some(b), stride, 1)?)
    }

    /// Class logits `[N, A·K, g, g]` and box offsets `[N, A·4, g, g]`.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = x.clone();
        for (i, (_, _, stride)) in BACKBONE.iter().enumerate() {
            h = self.conv(&h, &format!("backbone.{i}"), *stride)?.relu();
        }
        Ok((self.conv(&h, "cls", 1)?, self.conv(&h, "box", 1)?))
    }

    fn class_index(&self, label: &str) -> Option<usize> {
        self.spec.class_set.iter().position(|c| c == label)
    }

    /// Loss targets for one image: per-logit class target and weight, and
    /// per-offset box target and weight. Returns the positive count.
    #[allow(clippy::too_many_arguments)]
    fn image_targets(
        &self,
        record: &LabeledImage,
        prepared: &Prepared,
        logits: &[f64],
        cls_t: &mut [f64],
        cls_w: &mut [f64],
        box_t: &mut [f64],
        box_w: &mut [f64],
    ) -> usize {
        let k = self.spec.class_set.len();
        let cells = self.anchors.cells();
        let objects: Vec<(Rect, usize)> = record
            .annotations
            .iter()
            .filter_map(|a| {
                let c = self.class_index(&a.label)?;
                let b = &a.bbox;
                Some((
                    [
                        b.x_min / prepared.scale_x,
                        b.y_min / prepared.scale_y,
                        b.x_max / prepared.scale_x,
                        b.y_max / prepared.scale_y,
                    ],
                    c,
                ))
            })
            .collect();
        let rects: Vec<Rect> = objects.iter().map(|(r, _)| *r).collect();
        let assignment = assign(&self.anchors.rects, &rects, POSITIVE_IOU, NEGATIVE_IOU);
        let logit_at = |anchor: usize, class: usize| {
            let (a, cell) = (anchor / cells, anchor % cells);
            (a * k + class) * cells + cell
        };
        let offset_at = |anchor: usize, j: usize| {
            let (a, cell) = (anchor / cells, anchor % cells);
            (a * 4 + j) * cells + cell
        };
        let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();

        let mut positives = 0;
        let mut negatives: Vec<(f64, usize)> = Vec::new();
        for (anchor, asg) in assignment.iter().enumerate() {
            match *asg {
                Assignment::Positive(j) => {
                    positives += 1;
                    let (rect, class) = objects[j];
                    for c in 0..k {
                        cls_w[logit_at(anchor, c)] = 1.0;
                    }
                    cls_t[logit_at(anchor, class)] = 1.0;
                    let d = encode(&self.anchors.rects[anchor], &rect);
                    for (jj, v) in d.iter().enumerate() {
                        box_t[offset_at(anchor, jj)] = *v;
                        box_w[offset_at(anchor, jj)] = 1.0;
                    }
                }
                Assignment::Negative => {
                    let loss: f64 = (0..k).map(|c| softplus(logits[logit_at(anchor, c)])).sum();
                    negatives.push((loss, anchor));
                }
                Assignment::Ignore => {}
            }
        }
        negatives.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, anchor) in negatives.iter().take(NEGATIVES_PER_POSITIVE * positives.max(1)) {
            for c in 0..k {
                cls_w[logit_at(anchor, c)] = 1.0;
            }
        }
        positives
    }

    /// Trains on the train split of `manifest` and returns the per-step log.
    pub fn train(&mut self, manifest: &DatasetManifest) -> Result<Vec<DetTrainRecord>> {
        self.check_classes(manifest)?;
        let records: Vec<&LabeledImage> = manifest.records_in(Split::Train).collect();
        if records.is_empty() {
            return Err(DetectError::EmptyTrainSplit(manifest.name.clone()));
        }
        let input = self.spec.input_size;
        let mut images: Vec<(&LabeledImage, Prepared)> = Vec::with_capacity(records.len());
        for r in records {
            match load_rgb(&r.path) {
                Ok(img) => images.push((r, prepare(&img, input)?)),
                Err(e) => log::warn!("skipping unreadable training image: {e}"),
            }
        }
        if images.is_empty() {
            return Err(DetectError::EmptyTrainSplit(manifest.name.clone()));
        }

        let mut adam = Adam::new(self.spec.learning_rate);
        let mut order_rng = seed::rng(self.spec.seed, "detector-order");
        let mut order: Vec<usize> = (0..images.len()).collect();
        let (k, a, cells) = (self.spec.class_set.len(), self.anchors.shapes, self.anchors.cells());
        let (cls_len, box_len) = (a * k * cells, a * 4 * cells);
        let mut history = Vec::new();
        for epoch in 0..self.spec.epochs {
            order.shuffle(&mut order_rng);
            for chunk in order.chunks(self.spec.batch_size) {
                let n = chunk.len();
                let mut data = Vec::with_capacity(n * 3 * input * input);
                for &i in chunk {
                    data.extend_from_slice(&images[i].1.tensor_data);
                }
                let x = Tensor::new(data, &[n, 3, input, input])?;
                let (cls, boxes) = self.forward(&x)?;

                let mut cls_t = vec![0.0; n * cls_len];
                let mut cls_w = vec![0.0; n * cls_len];
                let mut box_t = vec![0.0; n * box_len];
                let mut box_w = vec![0.0; n * box_len];
                let mut positives = 0;
                for (b, &i) in chunk.iter().enumerate() {
                    let (record, prepared) = &images[i];
                    positives += self.image_targets(
                        record,
                        prepared,
                        &cls.data()[b * cls_len..(b + 1) * cls_len],
                        &mut cls_t[b * cls_len..(b + 1) * cls_len],
                        &mut cls_w[b * cls_len..(b + 1) * cls_len],
                        &mut box_t[b * box_len..(b + 1) * box_len],
                        &mut box_w[b * box_len..(b + 1) * box_len],
                    );
                }
                let norm = 1.0 / positives.max(1) as f64;
                let cls_loss = cls.bce_with_logits(&cls_t)?.mul_const(&cls_w)?.sum_all().scale(norm);
                let box_loss = boxes.smooth_l1(&box_t, 1.0)?.mul_const(&box_w)?.sum_all().scale(norm);
                let loss = cls_loss.add(&box_loss)?;
                let record = DetTrainRecord {
                    iter: history.len(),
                    epoch,
                    loss: loss.item()?,
                    cls: cls_loss.item()?,
                    box_loss: box_loss.item()?,
                };
                if !record.loss.is_finite() {
                    return Err(DetectError::NonFiniteLoss {
                        iteration: record.iter,
                        detail: format!("cls={} box={}", record.cls, record.box_loss),
                    });
                }
                let grads = loss.backward()?;
                adam.step(&mut self.params, &grads)?;
                history.push(record);
            }
        }
        Ok(history)
    }

    fn check_classes(&self, manifest: &DatasetManifest) -> Result<()> {
        if manifest.class_set != self.spec.class_set {
            return Err(DetectError::Config(format!(
                "manifest classes {:?} do not match detector classes {:?}",
                manifest.class_set, self.spec.class_set
            )));
        }
        Ok(())
    }

    /// Detections on one decoded image, highest confidence first.
    pub fn detect(&self, image_id: &str, img: &PlanarImage, score_threshold: f64) -> Result<Vec<Detection>> {
        let input = self.spec.input_size;
        let prepared = prepare(img, input)?;
        let x = Tensor::new(prepared.tensor_data.clone(), &[1, 3, input, input])?;
        let (cls, boxes) = self.forward(&x)?;
        let (k, cells) = (self.spec.class_set.len(), self.anchors.cells());
        let (w, h) = (prepared.width as f64, prepared.height as f64);

        let mut out = Vec::new();
        for (c, label) in self.spec.class_set.iter().enumerate() {
            let mut rects = Vec::new();
            let mut scores = Vec::new();
            for anchor in 0..self.anchors.len() {
                let (a, cell) = (anchor / cells, anchor % cells);
                let score = 1.0 / (1.0 + (-cls.data()[(a * k + c) * cells + cell]).exp());
                if score < score_threshold {
                    continue;
                }
                let d: [f64; 4] = std::array::from_fn(|j| boxes.data()[(a * 4 + j) * cells + cell]);
                let r = decode(&self.anchors.rects[anchor], &d);
                let r = [
                    (r[0] * prepared.scale_x).clamp(0.0, w),
                    (r[1] * prepared.scale_y).clamp(0.0, h),
                    (r[2] * prepared.scale_x).clamp(0.0, w),
                    (r[3] * prepared.scale_y).clamp(0.0, h),
                ];
                if r[2] > r[0] && r[3] > r[1] {
                    rects.push(r);
                    scores.push(score);
                }
            }
            for i in nms(&rects, &scores, NMS_IOU) {
                let r = rects[i];
                let bbox = BoundingBox::new(r[0], r[1], r[2], r[3])?;
                out.push(Detection::new(image_id, label.clone(), bbox, scores[i]));
            }
        }
        out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        out.truncate(MAX_DETECTIONS);
        Ok(out)
    }

    /// Runs [`detect`](Self::detect) over records, skipping unreadable files.
    pub fn infer(&self, images: &[LabeledImage], score_threshold: f64) -> Result<InferOutput> {
        let mut out = InferOutput::default();
        for r in images {
            match load_rgb(&r.path) {
                Ok(img) => out.detections.extend(self.detect(&r.image_id, &img, score_threshold)?),
                Err(e) => {
                    log::warn!("skipping unreadable image: {e}");
                    out.skipped.push(r.image_id.clone());
                }
            }
        }
        if !out.skipped.is_empty() {
            log::warn!("{} image(s) skipped during inference", out.skipped.len());
        }
        Ok(out)
    }
}
