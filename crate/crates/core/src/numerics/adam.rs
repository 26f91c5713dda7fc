use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Result<Self> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(invalid_arg!("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(invalid_arg!("Adam betas must lie in [0, 1)"));
        }
        if !(config.eps > 0.0) {
            return Err(invalid_arg!("Adam epsilon must be positive"));
        }
        Ok(Self {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid_arg!(
                "Adam state holds {} parameters, got params {} and grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(invalid_arg!("non-finite gradient at index {i}"));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut st = AdamState::new(3, AdamConfig::with_lr(0.1)).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.first_moment(), &[0.0; 3]);
        assert_eq!(st.second_moment(), &[0.0; 3]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 0.01;
        let mut st = AdamState::new(2, AdamConfig::with_lr(lr)).unwrap();
        let mut p = vec![0.0, 0.0];
        st.step(&mut p, &[5.0, -0.3]).unwrap();
        assert!((p[0] + lr).abs() < 1e-9);
        assert!((p[1] - lr).abs() < 1e-9);
    }

    #[test]
    fn quadratic_loss_decreases() {
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.05)).unwrap();
        let mut x = vec![4.0];
        let mut prev = x[0] * x[0];
        for _ in 0..100 {
            let g = [2.0 * x[0]];
            st.step(&mut x, &g).unwrap();
            let loss = x[0] * x[0];
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::new(2, AdamConfig::default()).unwrap();
        assert!(st.step(&mut [0.0, 0.0], &[1.0]).is_err());
        assert!(st.step(&mut [0.0], &[1.0, 1.0]).is_err());
    }
}
