//! Adam with bias correction and global-norm gradient clipping, operating
//! on flat parameter vectors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(num_params: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: vec![F::zero(); num_params],
            v: vec![F::zero(); num_params],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update in place. Moment estimates stay in `F`; the bias
    /// corrections and the final delta are computed in f64.
    pub fn step(&mut self, params: &mut [F], grads: &[F], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state sized for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i].as_f64() / c1;
            let v_hat = self.v[i].as_f64() / c2;
            let delta = lr * m_hat / (v_hat.sqrt() + self.epsilon);
            params[i] = params[i] - F::from_f64(delta);
        }
        Ok(())
    }
}

/// Global L2 norm, accumulated in f64.
pub fn global_norm<F: Scalar>(grads: &[F]) -> f64 {
    grads
        .iter()
        .map(|&g| {
            let v = g.as_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Scale `grads` so the global L2 norm is at most `max_norm`; gradients
/// under the bound (including all-zero) pass through untouched. Returns the
/// pre-clip norm.
pub fn clip_gradient<F: Scalar>(grads: &mut [F], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = F::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradients_never_move_parameters() {
        let mut adam = AdamState::<f64>::new(3, 0.9, 0.999, 1e-8);
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.0; 3];
        for _ in 0..10 {
            adam.step(&mut params, &grads, 0.1).unwrap();
        }
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_the_recurrences_by_hand() {
        // g = 0.5, lr = 0.1: m1 = 0.05, v1 = 0.00025, m^ = 0.5, v^ = 0.25,
        // delta = 0.1 * 0.5 / (0.5 + 1e-8).
        let mut adam = AdamState::<f64>::new(1, 0.9, 0.999, 1e-8);
        let mut params = vec![0.0];
        adam.step(&mut params, &[0.5], 0.1).unwrap();
        let expect = -0.1 * 0.5 / (0.5 + 1e-8);
        assert_abs_diff_eq!(params[0], expect, epsilon = 1e-15);
        // Sign-magnitude behavior: one step moves by nearly -lr * sign(g).
        assert!((params[0] + 0.1).abs() < 1e-6);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn updates_are_elementwise_independent() {
        let grads = [0.3, -0.8, 0.1, 0.9];
        let start = [1.0, 2.0, 3.0, 4.0];

        let mut a = AdamState::<f64>::new(4, 0.9, 0.999, 1e-8);
        let mut pa = start.to_vec();
        a.step(&mut pa, &grads, 0.05).unwrap();

        // Same values presented in reverse order.
        let mut b = AdamState::<f64>::new(4, 0.9, 0.999, 1e-8);
        let mut pb: Vec<f64> = start.iter().rev().cloned().collect();
        let gb: Vec<f64> = grads.iter().rev().cloned().collect();
        b.step(&mut pb, &gb, 0.05).unwrap();

        for i in 0..4 {
            assert_eq!(pa[i], pb[3 - i]);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut adam = AdamState::<f32>::new(2, 0.9, 0.999, 1e-8);
        let mut params = vec![0.0f32; 3];
        assert!(matches!(
            adam.step(&mut params, &[0.0; 3], 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn clip_halves_an_overlong_gradient() {
        // 3-4-... vector with norm 10.
        let mut grads = vec![6.0f64, 8.0];
        let pre = clip_gradient(&mut grads, 5.0);
        assert_abs_diff_eq!(pre, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grads[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grads[1], 4.0, epsilon = 1e-12);
        assert!(global_norm(&grads) <= 5.0 + 1e-6);
    }

    #[test]
    fn clip_leaves_short_and_zero_gradients_untouched() {
        let mut grads = vec![1.0f32, 2.0, 2.0]; // norm 3
        let pre = clip_gradient(&mut grads, 5.0);
        assert_abs_diff_eq!(pre, 3.0, epsilon = 1e-6);
        assert_eq!(grads, vec![1.0, 2.0, 2.0]);

        let mut zeros = vec![0.0f32; 4];
        let pre = clip_gradient(&mut zeros, 5.0);
        assert_eq!(pre, 0.0);
        assert!(zeros.iter().all(|v| *v == 0.0 && v.is_finite()));
    }
}
