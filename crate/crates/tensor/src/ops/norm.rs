use crate::error::Result;
use crate::tensor::Tensor;

impl Tensor {
    /// Normalizes each (sample, channel) plane of an NCHW tensor to zero mean
    /// and unit variance. Affine scaling is left to the caller.
    pub fn instance_norm(&self, eps: f64) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        let plane = h * w;
        let mut out = vec![0.0; self.numel()];
        let mut inv_std = vec![0.0; n * c];
        for (p, (src, dst)) in self
            .data()
            .chunks(plane)
            .zip(out.chunks_mut(plane))
            .enumerate()
        {
            let mean = src.iter().sum::<f64>() / plane as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[p] = istd;
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s - mean) * istd;
            }
        }
        let normalized = out.clone();
        Ok(Tensor::from_op(out, self.shape().to_vec(), vec![self.clone()], move |g| {
            let mut gx = vec![0.0; g.len()];
            for (p, ((gp, yp), dst)) in g
                .chunks(plane)
                .zip(normalized.chunks(plane))
                .zip(gx.chunks_mut(plane))
                .enumerate()
            {
                let mean_g = gp.iter().sum::<f64>() / plane as f64;
                let mean_gy = gp.iter().zip(yp).map(|(a, b)| a * b).sum::<f64>() / plane as f64;
                for ((d, gv), yv) in dst.iter_mut().zip(gp).zip(yp) {
                    *d = inv_std[p] * (gv - mean_g - yv * mean_gy);
                }
            }
            vec![Some(gx)]
        }))
    }
}
