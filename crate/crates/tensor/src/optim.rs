use std::collections::HashMap;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::Gradients;

/// Adam with bias correction. `beta1` plays the role of momentum.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every parameter of `store` that received a gradient and
    /// returns how many were updated.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<usize> {
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut updates = Vec::new();
        for (name, param) in store.iter() {
            let Some(g) = grads.get(param) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let mut values = param.to_vec();
            for i in 0..values.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
            updates.push((name.to_string(), values));
        }
        let count = updates.len();
        for (name, values) in updates {
            store.assign(&name, values)?;
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::trainable();
        store.insert("x", vec![3.0, -2.0], &[2]).unwrap();
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            let x = store.get("x").unwrap().clone();
            let loss = x.add_scalar(-1.0).sqr().sum_all();
            let grads = loss.backward().unwrap();
            adam.step(&mut store, &grads).unwrap();
        }
        let x = store.get("x").unwrap();
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-2), "{:?}", x.data());
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::trainable();
        store.insert("w", vec![0.0], &[1]).unwrap();
        let w = store.get("w").unwrap().clone();
        let grads = w.scale(5.0).sum_all().backward().unwrap();
        Adam::new(0.01).step(&mut store, &grads).unwrap();
        let moved = store.get("w").unwrap().data()[0];
        assert!((moved + 0.01).abs() < 1e-9, "{moved}");
    }
}
