use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// A fixed set of named parameter tensors.
///
/// Gradients are represented by the same type, so `tensors()` of a model
/// and of its gradient line up entry by entry.
pub trait Parameterized {
    fn tensors(&self) -> Vec<(&'static str, &Tensor2)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data().len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_model<P: Parameterized + ?Sized>(model: &P) -> Self {
        let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.data().len()).collect();
        AdamState {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update of `params` from `grads`.
pub fn adam_step<P: Parameterized + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let grads = grads.tensors();
    for (name, g) in &grads {
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient in `{name}`")));
        }
    }
    let mut params = params.tensors_mut();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(
            "parameters, gradients and optimizer state disagree".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, ((name, p), (_, g))) in params.iter_mut().zip(&grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != g.data().len() {
            return Err(Error::Dimension(format!("shape mismatch for `{name}`")));
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (((w, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = *mj / c1;
            let v_hat = *vj / c2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
