//! Adam with decoupled weight decay.

use crate::error::{HgError, Result};
use crate::tensor::ParamSet;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(HgError::config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        })
    }
}

/// First/second moment buffers, one pair per parameter matrix, aligned with
/// the ParamSet's canonical order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn for_params(params: &ParamSet) -> Self {
        let m = params
            .iter()
            .map(|(_, mat)| vec![0.0; mat.data().len()])
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, step: 0 }
    }

    /// One decoupled-weight-decay Adam step over every parameter's grad
    /// buffer. Parameters without a populated grad are treated as zero-grad
    /// (they still receive weight decay).
    pub fn step(&mut self, params: &mut ParamSet, cfg: &AdamConfig) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(HgError::config(
                "optimizer state does not match parameter set".to_string(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (slot, (_, mat)) in params.iter_mut().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            if m.len() != mat.data().len() {
                return Err(HgError::config(
                    "optimizer state shape does not match parameter".to_string(),
                ));
            }
            let zero;
            let grad: &[f64] = match &mat.grad {
                Some(g) => g,
                None => {
                    zero = vec![0.0; m.len()];
                    &zero
                }
            };
            // update moments first, then apply decay decoupled from them
            for i in 0..m.len() {
                let g = grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            }
            let data = mat.data_mut();
            for i in 0..m.len() {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * data[i]);
            }
        }
        Ok(())
    }
}
