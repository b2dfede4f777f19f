//! ADAM with bias correction, used by every solver in the crate.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        Self::with_hyperparams(shape, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON)
    }

    pub fn with_hyperparams(shape: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `params` in the direction opposing `grad`.
    /// Non-finite gradient entries are an error, never silently clamped.
    pub fn step(&mut self, params: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
        if params.shape() != self.m.shape() || grad.shape() != self.m.shape() {
            return Err(Error::ShapeMismatch {
                context: "adam_step",
                expected: self.m.shape().to_vec(),
                got: if params.shape() != self.m.shape() {
                    params.shape().to_vec()
                } else {
                    grad.shape().to_vec()
                },
            });
        }
        if !grad.all_finite() {
            return Err(Error::NonFinite("adam_step: gradient".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        let p = params.data_mut();
        let g = grad.data();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    /// Independent scalar reference following the published update rule,
    /// kept deliberately separate from the tensor implementation.
    fn scalar_adam_sequence(p0: f64, grad: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad * grad;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(&[5]);
        let mut params = Tensor::from_vec(vec![1.0, -2.0, 3.0, 0.0, 0.5]);
        let before = params.clone();
        let grad = Tensor::zeros(&[5]);
        for _ in 0..7 {
            state.step(&mut params, &grad, 0.1).unwrap();
        }
        assert_eq!(params.data(), before.data());
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        for &g in &[1.0, -3.5, 0.25] {
            let mut state = AdamState::new(&[1]);
            let mut params = Tensor::from_vec(vec![2.0]);
            let grad = Tensor::from_vec(vec![g]);
            state.step(&mut params, &grad, 0.1).unwrap();
            let delta = params.data()[0] - 2.0;
            let expected = -0.1 * g / (g.abs() + 1e-8);
            assert!((delta - expected).abs() < 1e-12, "g={g} delta={delta}");
            assert!((delta + 0.1 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_scalar_reference_over_ten_steps() {
        let mut state = AdamState::new(&[1]);
        let mut params = Tensor::from_vec(vec![0.7]);
        let grad = Tensor::from_vec(vec![0.3]);
        for _ in 0..10 {
            state.step(&mut params, &grad, 0.05).unwrap();
        }
        let expected = scalar_adam_sequence(0.7, 0.3, 0.05, 10);
        assert!((params.data()[0] - expected).abs() < 1e-12);
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn step_magnitude_bounded_by_lr_for_constant_gradient() {
        let mut rng = RngStream::new(20);
        for _ in 0..20 {
            let g = rng.next_gaussian() * 10.0;
            if g == 0.0 {
                continue;
            }
            let lr = rng.next_f64();
            let mut state = AdamState::new(&[1]);
            let mut params = Tensor::from_vec(vec![0.0]);
            let grad = Tensor::from_vec(vec![g]);
            let mut prev = 0.0;
            for _ in 0..50 {
                state.step(&mut params, &grad, lr).unwrap();
                let step = (params.data()[0] - prev).abs();
                assert!(step <= lr * (1.0 + 1e-9), "step {step} lr {lr}");
                prev = params.data()[0];
            }
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_non_finite() {
        let mut state = AdamState::new(&[2]);
        let mut params = Tensor::zeros(&[2]);
        let bad_shape = Tensor::zeros(&[3]);
        assert!(state.step(&mut params, &bad_shape, 0.1).is_err());
        let nan_grad = Tensor::from_vec(vec![0.0, f64::NAN]);
        assert!(matches!(
            state.step(&mut params, &nan_grad, 0.1),
            Err(Error::NonFinite(_))
        ));
    }
}
