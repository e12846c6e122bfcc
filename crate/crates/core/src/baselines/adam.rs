use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One Adam update of `params` given `grads` (descent direction is `-grads`).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (self.beta1, self.beta2);
        // bias corrections folded into one step size and one scale of sqrt(v)
        let step = self.lr / (1.0 - libm::pow(b1, t));
        let scale = 1.0 / sqrt(1.0 - libm::pow(b2, t));
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (sqrt(*v) * scale + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = AdamState::new(3, 0.01);
        let mut p = vec![0.0; 3];
        s.step(&mut p, &[3.0, -0.2, 1e-3]);
        // m_hat = g, v_hat = g^2: the step is lr * g / (|g| + eps)
        for (x, g) in p.iter().zip([3.0f64, -0.2, 1e-3]) {
            let want = -0.01 * g / (g.abs() + 1e-8);
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        for scale in [1e-3, 1.0, 1e3] {
            let mut s = AdamState::new(1, 0.01);
            let mut p = vec![0.0];
            let mut last = 0.0;
            for _ in 0..2000 {
                let before = p[0];
                s.step(&mut p, &[scale]);
                last = before - p[0];
            }
            // fixed point of the bias-corrected moments: m_hat = g, v_hat = g^2
            assert!((last - 0.01 * scale / (scale + 1e-8)).abs() < 1e-9, "{last}");
        }
    }
}
