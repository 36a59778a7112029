//! Deterministic policy gradient on the actor mean.

use alloc::vec::Vec;

use crate::actor::{flatten, GaussianPolicy};
use crate::critic::ActionValue;
use crate::error::check_dim;
use crate::{Error, Result};

/// Ascent direction `mean_s J_φ(s)ᵀ ∇_a Q̂(s, a)|_{a = φ(s)}` in the layout of
/// the actor's mean-network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DpgDirection(pub Vec<f64>);

impl DpgDirection {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn dpg_direction<C: ActionValue + ?Sized, S: AsRef<[f64]>>(actor: &GaussianPolicy, critic: &C, states: &[S]) -> Result<DpgDirection> {
    let n = states.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    check_dim(actor.state_dim(), critic.state_dim())?;
    check_dim(actor.action_dim(), critic.action_dim())?;
    let x = flatten(states, actor.state_dim())?;
    let means = actor.policy_means_flat(&x, n)?;
    let (_, mut grads) = critic.q_value_grad_batch(&x, &means, n)?;
    let inv_n = 1.0 / n as f64;
    grads.iter_mut().for_each(|g| *g *= inv_n);
    Ok(DpgDirection(actor.mean_vjp(&x, n, &grads)?))
}

/// `θ ← θ + α·direction`
pub fn dpg_step(actor: &mut GaussianPolicy, direction: &DpgDirection, alpha: f64) -> Result<()> {
    let params = actor.mean_network_mut().params_mut();
    if params.len() != direction.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), found: direction.len() });
    }
    for (p, d) in params.iter_mut().zip(direction.as_slice()) {
        *p += alpha * d;
    }
    Ok(())
}

/// `mean_s Q̂(s, φ(s))`, the objective the direction ascends.
pub fn surrogate_objective<C: ActionValue + ?Sized, S: AsRef<[f64]>>(actor: &GaussianPolicy, critic: &C, states: &[S]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in states {
        total += critic.q_value(s.as_ref(), &actor.policy_mean(s.as_ref())?)?;
    }
    Ok(total / states.len() as f64)
}
