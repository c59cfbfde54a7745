use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ADAM hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 bound on the gradient before the moment update.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_counter: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_counter: 0,
        }
    }
}

/// Scales `grad` in place so its L2 norm is at most `clip`. Returns the
/// norm before clipping.
pub fn clip_gradient(grad: &mut [f64], clip: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip && norm > 0.0 {
        let s = clip / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One bias-corrected ADAM update after global norm clipping.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], gradient: &[f64], cfg: &AdamConfig) -> Result<()> {
    if params.len() != gradient.len() || state.first_moment.len() != params.len() {
        return Err(Error::shape("adam_step", params.len(), gradient.len()));
    }
    let mut g = gradient.to_vec();
    clip_gradient(&mut g, cfg.grad_clip);
    state.step_counter += 1;
    let t = state.step_counter as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &gi), m), v) in params
        .iter_mut()
        .zip(&g)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut st = OptimizerState::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut st, &mut p, &[0.0; 3], &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut st = OptimizerState::new(1);
        let mut p = vec![0.5];
        adam_step(&mut st, &mut p, &[1.0], &AdamConfig::default()).unwrap();
        let expected = 0.5 - 0.01 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn clipped_gradient_matches_rescaled_direction() {
        let cfg = AdamConfig::default();
        let big: Vec<f64> = vec![60.0, 80.0];
        let small: Vec<f64> = vec![6.0, 8.0];
        let (mut s1, mut s2) = (OptimizerState::new(2), OptimizerState::new(2));
        let (mut p1, mut p2) = (vec![0.0; 2], vec![0.0; 2]);
        for _ in 0..3 {
            adam_step(&mut s1, &mut p1, &big, &cfg).unwrap();
            adam_step(&mut s2, &mut p2, &small, &cfg).unwrap();
        }
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut st = OptimizerState::new(2);
        let mut p = vec![0.25, -0.75];
        adam_step(&mut st, &mut p, &[3.0, -4.0], &cfg).unwrap();
        assert_eq!(p, vec![0.25, -0.75]);
    }
}
