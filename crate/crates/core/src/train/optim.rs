use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::network::{Grads, ParamBank};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Momentum buffers aligned with a bank's learnable slots.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub velocity: Vec<Vec<T>>,
    pub config: SgdConfig,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(bank: &ParamBank<T>, config: SgdConfig) -> Self {
        Self {
            velocity: bank.slots().iter().map(|(s, _)| vec![T::zero(); s.len()]).collect(),
            config,
        }
    }
}

/// `v ← m·v + g + wd·p; p ← p − lr·v` on one slot.
pub fn sgd_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    momentum: f64,
    weight_decay: f64,
    lr: f64,
) -> Result<()> {
    ensure_dim("gradient length", param.len(), grad.len())?;
    ensure_dim("velocity length", param.len(), velocity.len())?;
    let (m, wd, lr) = (T::of(momentum), T::of(weight_decay), T::of(lr));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = m * *v + g + wd * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// One momentum-SGD step. Weight decay applies to weight tensors only.
/// Slots the gradient never touched (parameters of other domains) are left
/// exactly as they are, velocity included.
pub fn sgd_step<T: Scalar>(
    bank: &mut ParamBank<T>,
    grads: &Grads<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    let mut slots = bank.slots_mut();
    ensure_dim("gradient slots", slots.len(), grads.slots.len())?;
    ensure_dim("velocity slots", slots.len(), state.velocity.len())?;
    for (((param, decay), g), v) in slots.iter_mut().zip(&grads.slots).zip(&mut state.velocity) {
        if let Some(g) = g {
            let wd = if *decay { state.config.weight_decay } else { 0.0 };
            sgd_update(param, g, v, state.config.momentum, wd, lr)?;
        }
    }
    Ok(())
}
