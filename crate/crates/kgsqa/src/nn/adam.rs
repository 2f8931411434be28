//! Adam optimizer with bias correction.

use super::store::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-tensor first/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> AdamState {
        let m = store
            .iter()
            .map(|(_, t, _)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        let v = store
            .iter()
            .map(|(_, t, _)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            cfg,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. Missing gradient slots count as zero; non-trainable
    /// tensors are never touched. All parameters are checked finite after
    /// the update.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);

        for id in store.ids().collect::<Vec<_>>() {
            if !store.is_trainable(id) {
                continue;
            }
            let shape = store.get(id).shape();
            if let Some(g) = grads.get(id) {
                if g.shape() != shape {
                    return Err(Error::DimensionMismatch(format!(
                        "gradient shape {:?} for parameter `{}` of shape {:?}",
                        g.shape(),
                        store.name(id),
                        shape
                    )));
                }
            }
            let zero;
            let g = match grads.get(id) {
                Some(g) => g,
                None => {
                    zero = Tensor::zeros(shape.0, shape.1);
                    &zero
                }
            };
            let m = self.m[id.0].as_mut_slice();
            let v = self.v[id.0].as_mut_slice();
            let p = store.get_mut(id).as_mut_slice();
            for ((pi, mi), (vi, gi)) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut().zip(g.as_slice()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        store.assert_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::store::ParamStore;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut store = ParamStore::new();
        let id = store
            .add("p", Tensor::from_vec(2, 1, vec![1.5, -0.5]).unwrap(), true)
            .unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let grads = Grads::new(&store);
        adam.update(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).as_slice(), &[1.5, -0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // p=1, g=1, lr=0.1, defaults: bias-corrected m_hat = v_hat = 1,
        // so p' = 1 - 0.1/(1 + 1e-8) ~= 0.9
        let mut store = ParamStore::new();
        let id = store
            .add("p", Tensor::from_vec(1, 1, vec![1.0]).unwrap(), true)
            .unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.1));
        let mut grads = Grads::new(&store);
        grads.slot_mut(id, 1, 1).as_mut_slice()[0] = 1.0;
        adam.update(&mut store, &grads).unwrap();
        let p = store.get(id).as_slice()[0];
        assert!((p - 0.9).abs() < 1e-7);
    }

    #[test]
    fn frozen_tensor_is_never_updated() {
        let mut store = ParamStore::new();
        let id = store
            .add("frozen", Tensor::from_vec(1, 2, vec![0.25, -0.75]).unwrap(), false)
            .unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.5));
        let mut grads = Grads::new(&store);
        let g = grads.slot_mut(id, 1, 2);
        g.as_mut_slice().copy_from_slice(&[10.0, -10.0]);
        adam.update(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).as_slice(), &[0.25, -0.75]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut store = ParamStore::new();
        let id = store
            .add("p", Tensor::zeros(2, 2), true)
            .unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let mut bad = Grads::new(&store);
        bad.slot_mut(id, 1, 2);
        assert!(adam.update(&mut store, &bad).is_err());
    }
}
