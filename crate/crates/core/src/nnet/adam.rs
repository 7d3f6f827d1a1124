use serde::{Deserialize, Serialize};

use super::model::{Gradients, PredictorModel};
use super::tensor::Tensor;
use super::NnetError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(model: &PredictorModel) -> Self {
        let zeros = || model.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { step: 0, m: zeros(), v: zeros() }
    }
}

/// One Adam update with bias correction:
///
/// ```text
/// m <- b1 m + (1 - b1) g        m_hat = m / (1 - b1^t)
/// v <- b2 v + (1 - b2) g^2      v_hat = v / (1 - b2^t)
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// ```
pub fn adam_step(
    model: &mut PredictorModel,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<(), NnetError> {
    let n = model.params.len();
    if grads.0.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(NnetError::ShapeMismatch("optimizer state does not match the model".into()));
    }
    for i in 0..n {
        let shape = model.params[i].shape();
        if grads.0[i].shape() != shape || state.m[i].shape() != shape || state.v[i].shape() != shape {
            return Err(NnetError::ShapeMismatch(format!("tensor {i} shape differs from its gradient or moments")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..n {
        let theta = model.params[i].data_mut();
        let g = grads.0[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for j in 0..theta.len() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            theta[j] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
