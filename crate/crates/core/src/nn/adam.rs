use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer hyperparameters. Weight decay is L2 coupled: `weight_decay · θ`
/// is added to the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Fails without touching `params` or `state` if any gradient is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::shape("adam gradients", params.len(), grads.len()));
    }
    if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::shape("adam state", params.len(), state.first_moment.len()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate {lr} must be positive")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let g = g + cfg.weight_decay * *p;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut s = AdamState::new(3);
        for _ in 0..3 {
            adam_step(&mut p, &[0.0; 3], &mut s, 0.01, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            eps: 1e-12,
            ..AdamConfig::default()
        };
        let mut p = vec![1.0, 1.0, 1.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[2.5, -0.01, 300.0], &mut s, 0.1, &cfg).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-9);
        assert!((p[1] - 1.1).abs() < 1e-9);
        assert!((p[2] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // Scalar simulation of f(w) = w², gradient 2w.
        let cfg = AdamConfig::default();
        let mut w = vec![1.0];
        let mut s = AdamState::new(1);
        let mut prev = w[0];
        for _ in 0..5 {
            let g = vec![2.0 * w[0]];
            adam_step(&mut w, &g, &mut s, 0.1, &cfg).unwrap();
            assert!(w[0] < prev);
            prev = w[0];
        }
        assert!(s.second_moment.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[f64::NAN, 0.0], &mut s, 0.1, &AdamConfig::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step_count, 0);
    }
}
