use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl Tensor {
    fn check_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TensorError::mismatch(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = a
                    .requires_grad()
                    .then(|| g.iter().zip(b.data()).map(|(g, b)| g * b).collect());
                let gb = b
                    .requires_grad()
                    .then(|| g.iter().zip(a.data()).map(|(g, a)| g * a).collect());
                vec![ga, gb]
            },
        ))
    }

    /// Multiplies by a fixed array of the same size (no gradient to `mask`).
    pub fn mul_const(&self, mask: &[f64]) -> Result<Tensor> {
        if mask.len() != self.numel() {
            return Err(TensorError::invalid(
                "mul_const",
                format!("{} mask values for {} elements", mask.len(), self.numel()),
            ));
        }
        let data = self.data().iter().zip(mask).map(|(a, m)| a * m).collect();
        let mask = mask.to_vec();
        Ok(Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().zip(&mask).map(|(g, m)| g * m).collect())]
        }))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * factor).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().map(|v| v * factor).collect())]
        })
    }

    pub fn add_scalar(&self, value: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + value).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], |g| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn sqr(&self) -> Tensor {
        let data = self.data().iter().map(|v| v * v).collect();
        let x = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().zip(x.data()).map(|(g, x)| 2.0 * g * x).collect())]
        })
    }

    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|v| v.max(0.0)).collect();
        let x = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(
                g.iter()
                    .zip(x.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect(),
            )]
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| sigmoid(*v)).collect();
        let y = data.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().zip(&y).map(|(g, y)| g * y * (1.0 - y)).collect())]
        })
    }

    pub fn tanh(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v.tanh()).collect();
        let y = data.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().zip(&y).map(|(g, y)| g * (1.0 - y * y)).collect())]
        })
    }

    pub fn sum_all(&self) -> Tensor {
        let total = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], Vec::new(), vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum of squared entries, fused so large feature maps do not allocate
    /// an intermediate.
    pub fn sum_sq(&self) -> Tensor {
        let total = self.data().iter().map(|v| v * v).sum();
        let x = self.clone();
        Tensor::from_op(vec![total], Vec::new(), vec![self.clone()], move |g| {
            vec![Some(x.data().iter().map(|v| 2.0 * g[0] * v).collect())]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::mismatch("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Adds `bias[c]` to every element of channel `c` of an NCHW tensor.
    pub fn add_channel(&self, bias: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = self.dims4()?;
        if bias.shape() != [c] {
            return Err(TensorError::mismatch("add_channel", self.shape(), bias.shape()));
        }
        let plane = h * w;
        let mut data = self.to_vec();
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            let b = bias.data()[i % c];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let bias_rg = bias.requires_grad();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), bias.clone()],
            move |g| {
                let gb = bias_rg.then(|| {
                    let mut gb = vec![0.0; c];
                    for (i, chunk) in g.chunks(plane).enumerate() {
                        gb[i % c] += chunk.iter().sum::<f64>();
                    }
                    gb
                });
                vec![Some(g.to_vec()), gb]
            },
        ))
    }

    /// Multiplies every element of channel `c` of an NCHW tensor by `scale[c]`.
    pub fn mul_channel(&self, scale: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = self.dims4()?;
        if scale.shape() != [c] {
            return Err(TensorError::mismatch("mul_channel", self.shape(), scale.shape()));
        }
        let plane = h * w;
        let mut data = self.to_vec();
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            let s = scale.data()[i % c];
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        let (x, s) = (self.clone(), scale.clone());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), scale.clone()],
            move |g| {
                let gx = x.requires_grad().then(|| {
                    let mut gx = g.to_vec();
                    for (i, chunk) in gx.chunks_mut(plane).enumerate() {
                        let sv = s.data()[i % c];
                        chunk.iter_mut().for_each(|v| *v *= sv);
                    }
                    gx
                });
                let gs = s.requires_grad().then(|| {
                    let mut gs = vec![0.0; c];
                    for (i, (gc, xc)) in g.chunks(plane).zip(x.data().chunks(plane)).enumerate() {
                        gs[i % c] += gc.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gs
                });
                vec![gx, gs]
            },
        ))
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
