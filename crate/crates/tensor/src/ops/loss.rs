use super::elementwise::sigmoid;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl Tensor {
    /// Element-wise binary cross-entropy on logits against fixed targets in [0, 1].
    pub fn bce_with_logits(&self, targets: &[f64]) -> Result<Tensor> {
        if targets.len() != self.numel() {
            return Err(TensorError::invalid(
                "bce_with_logits",
                format!("{} targets for {} logits", targets.len(), self.numel()),
            ));
        }
        let data = self
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .collect();
        let (x, t) = (self.clone(), targets.to_vec());
        Ok(Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(
                g.iter()
                    .zip(x.data())
                    .zip(&t)
                    .map(|((g, &z), &t)| g * (sigmoid(z) - t))
                    .collect(),
            )]
        }))
    }

    /// Element-wise Huber-style smooth L1 against fixed targets.
    pub fn smooth_l1(&self, targets: &[f64], beta: f64) -> Result<Tensor> {
        if targets.len() != self.numel() {
            return Err(TensorError::invalid(
                "smooth_l1",
                format!("{} targets for {} values", targets.len(), self.numel()),
            ));
        }
        let data = self
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let d = (p - t).abs();
                if d < beta {
                    0.5 * d * d / beta
                } else {
                    d - 0.5 * beta
                }
            })
            .collect();
        let (x, t) = (self.clone(), targets.to_vec());
        Ok(Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(
                g.iter()
                    .zip(x.data())
                    .zip(&t)
                    .map(|((g, &p), &t)| {
                        let d = p - t;
                        g * if d.abs() < beta { d / beta } else { d.signum() }
                    })
                    .collect(),
            )]
        }))
    }
}
