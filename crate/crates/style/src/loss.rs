//! Content, style and total-variation terms.
//!
//! Each term is built from differentiable tensor ops for training. The
//! [`analytic`] module holds closed-form gradients of the same terms for a
//! single item, used to cross-check the autodiff graph.

use serde::{Deserialize, Serialize};
use thermoscope_tensor::Tensor;

use crate::error::{Result, StyleError};
use crate::features::{FeaturePyramid, LossNetwork};
use crate::gram::{gram, GramMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_c: 1.0,
            lambda_s: 5.0,
            lambda_tv: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_c", self.lambda_c), ("lambda_s", self.lambda_s), ("lambda_tv", self.lambda_tv)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(StyleError::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn combine(&self, content: f64, style: f64, tv: f64) -> f64 {
        self.lambda_c * content + self.lambda_s * style + self.lambda_tv * tv
    }
}

/// Loss-network Grams of the style image, one per scale, detached.
#[derive(Clone, Debug)]
pub struct StyleTargets {
    pub grams: Vec<GramMatrix>,
}

pub fn set_style_targets(x_s: &Tensor, network: &LossNetwork) -> Result<StyleTargets> {
    let pyramid = crate::features::extract_features(&x_s.detach(), network)?;
    let grams = pyramid
        .maps
        .iter()
        .map(|m| gram(m).map(|g| g.detach()))
        .collect::<Result<Vec<_>>>()?;
    Ok(StyleTargets { grams })
}

/// `‖F_gen − F_c‖²_F`, averaged over the batch.
pub fn content_loss(f_gen: &crate::features::FeatureMap, f_c: &crate::features::FeatureMap) -> Result<Tensor> {
    if f_gen.values.shape() != f_c.values.shape() {
        return Err(StyleError::Dimension(format!(
            "content loss on {:?} vs {:?}",
            f_gen.values.shape(),
            f_c.values.shape()
        )));
    }
    let n = f_gen.dims().0 as f64;
    Ok(f_gen.values.sub(&f_c.values)?.sum_sq().scale(1.0 / n))
}

/// Target Gram broadcast to the batch of `g`.
fn broadcast_target(target: &GramMatrix, batch: usize) -> Result<Tensor> {
    let c = target.dim();
    match target.batch() {
        b if b == batch => Ok(target.values.detach()),
        1 => Ok(Tensor::new(target.values.data().repeat(batch), &[batch, c, c])?),
        b => Err(StyleError::Dimension(format!("target batch {b} vs generated batch {batch}"))),
    }
}

/// `Σ_j ‖G(F_j) − T_j‖²_F`, averaged over the batch.
pub fn style_loss(pyramid: &FeaturePyramid, targets: &StyleTargets) -> Result<Tensor> {
    if pyramid.maps.len() != targets.grams.len() {
        return Err(StyleError::Dimension(format!(
            "{} scales vs {} style targets",
            pyramid.maps.len(),
            targets.grams.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (map, target) in pyramid.maps.iter().zip(&targets.grams) {
        let g = gram(map)?;
        if g.dim() != target.dim() {
            return Err(StyleError::Dimension(format!(
                "scale {}: {} channels vs target {}",
                map.scale_index,
                g.dim(),
                target.dim()
            )));
        }
        let n = g.batch();
        let term = g.values.sub(&broadcast_target(target, n)?)?.sum_sq().scale(1.0 / n as f64);
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    total.ok_or_else(|| StyleError::Dimension("style loss over zero scales".into()))
}

fn difference_kernel(channels: usize, vertical: bool) -> Result<Tensor> {
    let mut w = vec![0.0; channels * channels * 2];
    for c in 0..channels {
        w[(c * channels + c) * 2] = -1.0;
        w[(c * channels + c) * 2 + 1] = 1.0;
    }
    let shape = if vertical { [channels, channels, 2, 1] } else { [channels, channels, 1, 2] };
    Ok(Tensor::new(w, &shape)?)
}

/// Anisotropic squared total variation, averaged over the batch.
pub fn tv_loss(image: &Tensor) -> Result<Tensor> {
    let image = match image.rank() {
        3 => {
            let s = image.shape().to_vec();
            image.reshape(&[1, s[0], s[1], s[2]])?
        }
        _ => image.clone(),
    };
    let (n, c, h, w) = image.dims4()?;
    if h < 2 || w < 2 {
        return Err(StyleError::Dimension(format!("TV loss needs at least 2x2 pixels, got {h}x{w}")));
    }
    let dx = image.conv2d(&difference_kernel(c, false)?, None, 1, 0)?;
    let dy = image.conv2d(&difference_kernel(c, true)?, None, 1, 0)?;
    Ok(dx.sum_sq().add(&dy.sum_sq())?.scale(1.0 / n as f64))
}

/// Unweighted terms and their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub tv: f64,
}

/// Weighted objective of a generated batch against precomputed content
/// features and style targets.
pub fn objective(
    generated: &Tensor,
    content_features: &crate::features::FeatureMap,
    targets: &StyleTargets,
    weights: &LossWeights,
    network: &LossNetwork,
) -> Result<(Tensor, ObjectiveTerms)> {
    let pyramid = network.extract(generated)?;
    let content = content_loss(pyramid.content(), content_features)?;
    let style = style_loss(&pyramid, targets)?;
    let tv = tv_loss(generated)?;
    let total = content
        .scale(weights.lambda_c)
        .add(&style.scale(weights.lambda_s))?
        .add(&tv.scale(weights.lambda_tv))?;
    let terms = ObjectiveTerms {
        total: total.item()?,
        content: content.item()?,
        style: style.item()?,
        tv: tv.item()?,
    };
    Ok((total, terms))
}

/// Closed-form values and gradients for one item.
pub mod analytic {
    /// `∂/∂F_gen ‖F_gen − F_c‖² = 2 (F_gen − F_c)`.
    pub fn content_grad(f_gen: &[f64], f_c: &[f64]) -> Vec<f64> {
        f_gen.iter().zip(f_c).map(|(a, b)| 2.0 * (a - b)).collect()
    }

    /// Gram of a `C × P` matrix `phi`, divided by `C·P`.
    pub fn gram(phi: &[f64], c: usize, p: usize) -> Vec<f64> {
        let norm = (c * p) as f64;
        let mut g = vec![0.0; c * c];
        for a in 0..c {
            for b in 0..c {
                g[a * c + b] = (0..p).map(|k| phi[a * p + k] * phi[b * p + k]).sum::<f64>() / norm;
            }
        }
        g
    }

    /// `‖G(Φ) − T‖²_F`.
    pub fn style_term(phi: &[f64], c: usize, p: usize, target: &[f64]) -> f64 {
        gram(phi, c, p).iter().zip(target).map(|(g, t)| (g - t).powi(2)).sum()
    }

    /// `∂/∂Φ ‖G(Φ) − T‖² = 4 (G − T) Φ / (C·P)` for symmetric `T`.
    pub fn style_grad(phi: &[f64], c: usize, p: usize, target: &[f64]) -> Vec<f64> {
        let g = gram(phi, c, p);
        let norm = (c * p) as f64;
        let mut out = vec![0.0; c * p];
        for a in 0..c {
            for b in 0..c {
                let d = 4.0 * (g[a * c + b] - target[a * c + b]) / norm;
                for k in 0..p {
                    out[a * p + k] += d * phi[b * p + k];
                }
            }
        }
        out
    }

    pub fn tv(img: &[f64], c: usize, h: usize, w: usize) -> f64 {
        let at = |ch: usize, y: usize, x: usize| img[(ch * h + y) * w + x];
        let mut s = 0.0;
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    if y + 1 < h {
                        s += (at(ch, y + 1, x) - at(ch, y, x)).powi(2);
                    }
                    if x + 1 < w {
                        s += (at(ch, y, x + 1) - at(ch, y, x)).powi(2);
                    }
                }
            }
        }
        s
    }

    pub fn tv_grad(img: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
        let at = |ch: usize, y: usize, x: usize| img[(ch * h + y) * w + x];
        let mut g = vec![0.0; img.len()];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = at(ch, y, x);
                    let mut d = 0.0;
                    if y > 0 {
                        d += 2.0 * (v - at(ch, y - 1, x));
                    }
                    if y + 1 < h {
                        d -= 2.0 * (at(ch, y + 1, x) - v);
                    }
                    if x > 0 {
                        d += 2.0 * (v - at(ch, y, x - 1));
                    }
                    if x + 1 < w {
                        d -= 2.0 * (at(ch, y, x + 1) - v);
                    }
                    g[(ch * h + y) * w + x] = d;
                }
            }
        }
        g
    }
}
