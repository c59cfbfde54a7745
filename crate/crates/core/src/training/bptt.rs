//! Reverse-mode differentiation of the closed-loop cost through the rollout.

use rayon::prelude::*;

use crate::controllers::{ControllerParams, Tape};
use crate::dynamics::{guard, step, LinearPlant};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Cost and parameter gradient of one trajectory from `x0`.
///
/// The forward sweep keeps every state, control and controller tape. The
/// backward sweep carries the state adjoint
/// `λ_t = 2Q x_t + Aᵀ λ_{t+1} + (∂Φ/∂x)ᵀ g_t` with
/// `g_t = 2R u_t + Bᵀ λ_{t+1} B̄ᵀ` the control adjoint.
pub fn trajectory_gradient(
    plant: &LinearPlant,
    support: Option<&DenseMatrix>,
    params: &ControllerParams,
    x0: &DenseMatrix,
) -> Result<(f64, Vec<f64>)> {
    let horizon = plant.horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut tapes: Vec<Tape> = Vec::with_capacity(horizon);
    let mut cost = 0.0;
    let mut x = x0.clone();
    for t in 0..horizon {
        guard(&x, t, states.len())?;
        let (u, tape) = params.forward_taped(support, &x)?;
        let next = step(plant, &x, &u)?;
        cost += plant.stage_cost(&x, Some(&u))?;
        states.push(x);
        controls.push(u);
        tapes.push(tape);
        x = next;
    }
    guard(&x, horizon, states.len())?;
    cost += plant.stage_cost(&x, None)?;
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost { step: horizon });
    }
    states.push(x);

    let mut grad = vec![0.0; params.values.len()];
    let two_q = plant.q.scale(2.0);
    let two_r = plant.r.scale(2.0);
    let mut lambda = two_q.matmul(&states[horizon])?;
    for t in (0..horizon).rev() {
        let bl = plant.b.t_matmul(&lambda)?;
        let mut du = if plant.b_bar.shape() == (1, 1) {
            bl.scale(plant.b_bar[(0, 0)])
        } else {
            bl.matmul_t(&plant.b_bar)?
        };
        du.axpy(1.0, &two_r.matmul(&controls[t])?)?;
        let dx = params.backward(support, &tapes[t], &du, &mut grad)?;
        let mut next = two_q.matmul(&states[t])?;
        next.axpy(1.0, &plant.a.t_matmul(&lambda)?)?;
        next.axpy(1.0, &dx)?;
        lambda = next;
    }
    Ok((cost, grad))
}

/// Mean cost over `batch` and its gradient. Trajectories run in parallel;
/// their contributions are summed in batch order so the result does not
/// depend on the number of worker threads.
pub fn batch_gradient(
    plant: &LinearPlant,
    support: Option<&DenseMatrix>,
    params: &ControllerParams,
    batch: &[DenseMatrix],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|x0| trajectory_gradient(plant, support, params, x0))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut cost = 0.0;
    let mut grad = vec![0.0; params.values.len()];
    for part in parts {
        let (c, g) = part?;
        cost += c;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((cost * scale, grad))
}
