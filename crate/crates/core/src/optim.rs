//! Plain SGD and Adam parameter updates.

use crate::error::{GlomError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// First/second moment estimates for Adam, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamMoments {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of updates applied so far (bias correction uses step + 1).
    pub step: u64,
}

impl AdamMoments {
    pub fn zeros_like(params: &[&Tensor]) -> Self {
        AdamMoments {
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            step: 0,
        }
    }
}

fn check_step(params: &[&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    if lr <= 0.0 {
        return Err(GlomError::config(format!("learning rate must be positive, got {lr}")));
    }
    if params.len() != grads.len() {
        return Err(GlomError::usage("parameter/gradient count mismatch"));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(GlomError::usage(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(GlomError::numeric("NaN/Inf in gradients; update aborted"));
        }
    }
    Ok(())
}

pub fn sgd_update(mut params: Vec<&mut Tensor>, grads: &[Tensor], lr: f64) -> Result<()> {
    check_step(&params, grads, lr)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub fn adam_update(
    mut params: Vec<&mut Tensor>,
    grads: &[Tensor],
    moments: &mut AdamMoments,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    check_step(&params, grads, lr)?;
    if moments.m.len() != params.len() {
        return Err(GlomError::usage("moment count does not match parameter count"));
    }
    moments.step += 1;
    let t = moments.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = moments.m[i].data_mut();
        let v = moments.v[i].data_mut();
        for ((pv, gv), (mv, vv)) in
            p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
