use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Named parameter tensors, iterated in name order.
///
/// A trainable store hands out leaf tensors that collect gradients; a frozen
/// store holds constants.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    frozen: bool,
}

impl ParamStore {
    pub fn trainable() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn frozen() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            frozen: true,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn insert(&mut self, name: impl Into<String>, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = if self.frozen {
            Tensor::new(data, shape)?
        } else {
            Tensor::var(data, shape)?
        };
        self.params.insert(name.into(), t.clone());
        Ok(t)
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn assign(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let shape = self.get(name)?.shape().to_vec();
        if data.len() != shape.iter().product::<usize>() {
            return Err(TensorError::invalid(
                "assign",
                format!("{} values for `{name}` of shape {shape:?}", data.len()),
            ));
        }
        self.insert(name, data, &shape)?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Constant copy of every parameter.
    pub fn freeze(&self) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.detach()))
                .collect(),
            frozen: true,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }
}

/// Weight initializers.
pub mod init {
    use rand::Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    /// He-normal initialization for layers followed by a ReLU.
    pub fn kaiming_normal<R: Rng + ?Sized>(rng: &mut R, numel: usize, fan_in: usize) -> Vec<f64> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        normal(rng, numel, std)
    }

    pub fn normal<R: Rng + ?Sized>(rng: &mut R, numel: usize, std: f64) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..numel).map(|_| dist.sample(rng)).collect()
    }

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, numel: usize, bound: f64) -> Vec<f64> {
        if bound == 0.0 {
            return vec![0.0; numel];
        }
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        (0..numel).map(|_| dist.sample(rng)).collect()
    }
}
