use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            steps: 0,
        }
    }

    /// Applies one update in place. Non-finite gradients abort without
    /// touching the parameters or the moments.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidInput(
                "optimizer, parameter and gradient sizes differ".into(),
            ));
        }
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::TrainingAbort(format!("non-finite gradient at parameter {k}")));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(lr);
        let eps = T::lit(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_unit_direction() {
        let mut opt = Adam::new(1);
        let mut theta = [1.0f64];
        let grad = [theta[0]];
        opt.step(&mut theta, &grad, 1e-3).unwrap();
        assert!((theta[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut opt = Adam::new(3);
        let mut theta = [0.3, -2.0, 5.0];
        for _ in 0..100 {
            opt.step(&mut theta, &[0.0; 3], 1e-2).unwrap();
        }
        assert_eq!(theta, [0.3, -2.0, 5.0]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = Adam::new(2);
        let mut theta = [1.0, 1.0];
        let r = opt.step(&mut theta, &[0.1, f64::NAN], 1e-3);
        assert!(matches!(r, Err(Error::TrainingAbort(_))));
        assert_eq!(theta, [1.0, 1.0]);
        assert_eq!(opt.steps, 0);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut opt = Adam::new(2);
        let mut theta = [2.0f32, -1.0];
        for _ in 0..3000 {
            let g = [theta[0] - 0.5, 4.0 * (theta[1] + 0.25)];
            opt.step(&mut theta, &g, 1e-2).unwrap();
        }
        assert!((theta[0] - 0.5).abs() < 1e-2 && (theta[1] + 0.25).abs() < 1e-2);
    }
}
