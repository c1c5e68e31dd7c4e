//! Second-order feature statistics and the CoMatch transform.

use thermoscope_tensor::Tensor;

use crate::error::{Result, StyleError};
use crate::features::FeatureMap;

/// Batch of Gram matrices `[N, C, C]` for one scale.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub values: Tensor,
    pub scale_index: usize,
    /// The divisor applied to `Φ Φᵀ`, i.e. `C·H·W`.
    pub normalization: f64,
}

impl GramMatrix {
    /// `C`.
    pub fn dim(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    /// Row-major `C×C` entries of batch item `n`.
    pub fn item(&self, n: usize) -> &[f64] {
        let cc = self.dim() * self.dim();
        &self.values.data()[n * cc..(n + 1) * cc]
    }

    pub fn detach(&self) -> GramMatrix {
        GramMatrix {
            values: self.values.detach(),
            scale_index: self.scale_index,
            normalization: self.normalization,
        }
    }
}

/// Φ: `[N, C, H, W]` → `[N, C, H·W]`.
pub fn phi(f: &FeatureMap) -> Result<Tensor> {
    let (n, c, h, w) = f.dims();
    Ok(f.values.reshape(&[n, c, h * w])?)
}

/// Φ⁻¹: `[N, C, H·W]` → `[N, C, H, W]`.
pub fn phi_inv(t: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (n, c, hw) = t.dims3()?;
    if hw != height * width {
        return Err(StyleError::Dimension(format!(
            "cannot unflatten {hw} positions into {height}x{width}"
        )));
    }
    Ok(t.reshape(&[n, c, height, width])?)
}

/// `Φ(F) Φ(F)ᵀ / (C·H·W)` per batch item.
pub fn gram(f: &FeatureMap) -> Result<GramMatrix> {
    if !f.values.all_finite() {
        return Err(StyleError::Numeric(format!("non-finite feature map at scale {}", f.scale_index)));
    }
    let (_, c, h, w) = f.dims();
    let p = phi(f)?;
    let norm = (c * h * w) as f64;
    let values = p.matmul(&p.transpose()?)?.scale(1.0 / norm);
    Ok(GramMatrix {
        values,
        scale_index: f.scale_index,
        normalization: norm,
    })
}

/// `ŷ = Φ⁻¹[Φ(F)ᵀ W G]ᵀ`, evaluated as `(W G)ᵀ Φ(F)`.
///
/// `target` holds either one Gram shared by the whole batch or one per item;
/// `w` is `[C, C]`.
pub fn comatch(f_c: &FeatureMap, target: &GramMatrix, w: &Tensor) -> Result<FeatureMap> {
    let (n, c, h, wd) = f_c.dims();
    if target.dim() != c || w.shape() != [c, c] {
        return Err(StyleError::Dimension(format!(
            "CoMatch on {c} channels with target {:?} and W {:?}",
            target.values.shape(),
            w.shape()
        )));
    }
    let g = match target.batch() {
        1 => target.values.reshape(&[c, c])?,
        b if b == n => target.values.clone(),
        b => {
            return Err(StyleError::Dimension(format!(
                "target batch {b} does not match feature batch {n}"
            )))
        }
    };
    let mixed = w.matmul(&g)?.transpose()?;
    let out = mixed.matmul(&phi(f_c)?)?;
    FeatureMap::new(phi_inv(&out, h, wd)?, f_c.scale_index)
}
