use alloc::vec;
use alloc::vec::Vec;

use super::{AdamState, DenseStack};
use crate::error::{check_len, Result};
use crate::math::{exp, ln, sigmoid, softplus, ActivationKind, Rng};

/// Output layer loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax cross-entropy against a one-hot target.
    Softmax,
    /// Independent sigmoid cross-entropy per output unit.
    Sigmoid,
    /// `0.5 * ||y - logits||^2`.
    SquaredError,
}

/// Pre-activations and activations of one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

/// Multilayer perceptron: affine + `g` on hidden layers, linear logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub stack: DenseStack,
    pub activation: ActivationKind,
    pub head: Head,
    pub adam: AdamState,
    grads: Vec<f64>,
}

impl MlpModel {
    pub fn new(sizes: &[usize], activation: ActivationKind, head: Head, lr: f64, rng: &mut Rng) -> Result<Self> {
        let stack = DenseStack::new(sizes, rng)?;
        let n = stack.len();
        Ok(MlpModel {
            stack,
            activation,
            head,
            adam: AdamState::new(n, lr),
            grads: vec![0.0; n],
        })
    }

    pub fn input_width(&self) -> usize {
        self.stack.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.stack.sizes.last().unwrap()
    }

    /// Logits for `x`; the cache keeps what the backward pass needs.
    pub fn forward<'c>(&self, x: &[f64], cache: &'c mut ForwardCache) -> Result<&'c [f64]> {
        check_len(self.input_width(), x.len())?;
        let n = self.stack.layer_count();
        cache.pre.resize_with(n, Vec::new);
        cache.acts.resize_with(n + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for k in 0..n {
            let (before, after) = cache.acts.split_at_mut(k + 1);
            self.stack.affine(k, &before[k], &mut cache.pre[k]);
            let out = &mut after[0];
            out.clear();
            if k + 1 == n {
                out.extend_from_slice(&cache.pre[k]);
            } else {
                let g = self.activation;
                out.extend(cache.pre[k].iter().map(|&z| g.apply(z)));
            }
        }
        Ok(&cache.acts[n])
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        Ok(self.forward(x, &mut cache)?.to_vec())
    }

    pub fn predict_class(&self, x: &[f64], cache: &mut ForwardCache) -> Result<usize> {
        let z = self.forward(x, cache)?;
        if z.len() == 1 {
            return Ok((z[0] > 0.0) as usize);
        }
        Ok(crate::hgf::argmax(z))
    }

    /// Loss of `logits` against `y` and its gradient with respect to the logits.
    pub fn head_loss(&self, logits: &[f64], y: &[f64], dlogits: &mut Vec<f64>) -> f64 {
        dlogits.clear();
        match self.head {
            Head::Softmax => {
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|&z| exp(z - max)).sum();
                let lse = max + ln(sum);
                let mut loss = 0.0;
                for (&z, &t) in logits.iter().zip(y) {
                    loss -= t * (z - lse);
                    dlogits.push(exp(z - lse) - t);
                }
                loss
            }
            Head::Sigmoid => {
                let mut loss = 0.0;
                for (&z, &t) in logits.iter().zip(y) {
                    loss += softplus(z) - t * z;
                    dlogits.push(sigmoid(z) - t);
                }
                loss
            }
            Head::SquaredError => {
                let mut loss = 0.0;
                for (&z, &t) in logits.iter().zip(y) {
                    loss += 0.5 * (t - z) * (t - z);
                    dlogits.push(z - t);
                }
                loss
            }
        }
    }

    /// Loss on `(x, y)`; adds `scale * dLoss/dparams` into `grads`.
    pub fn loss_and_grads(
        &self,
        x: &[f64],
        y: &[f64],
        scale: f64,
        grads: &mut [f64],
        cache: &mut ForwardCache,
    ) -> Result<f64> {
        check_len(self.output_width(), y.len())?;
        self.forward(x, cache)?;
        let n = self.stack.layer_count();
        let mut delta = core::mem::take(&mut cache.delta);
        let mut back = core::mem::take(&mut cache.back);
        let loss = self.head_loss(&cache.acts[n], y, &mut delta);
        for k in (0..n).rev() {
            self.stack.accumulate_outer(k, &delta, &cache.acts[k], scale, grads);
            if k > 0 {
                self.stack.affine_transpose(k, &delta, &mut back);
                let g = self.activation;
                delta.clear();
                delta.extend(back.iter().zip(&cache.pre[k - 1]).map(|(b, &z)| b * g.deriv(z)));
            }
        }
        cache.delta = delta;
        cache.back = back;
        Ok(loss)
    }

    /// Mean loss and gradient over a batch, followed by one Adam step.
    pub fn train_batch(&mut self, xs: &[&[f64]], ys: &[&[f64]], cache: &mut ForwardCache) -> Result<f64> {
        if xs.is_empty() {
            return Ok(0.0);
        }
        let mut grads = core::mem::take(&mut self.grads);
        grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            loss += self.loss_and_grads(x, y, scale, &mut grads, cache)?;
        }
        self.adam.step(&mut self.stack.params, &grads);
        self.grads = grads;
        Ok(loss * scale)
    }

    pub fn loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let mut cache = ForwardCache::default();
        let z = self.forward(x, &mut cache)?.to_vec();
        let mut d = Vec::new();
        Ok(self.head_loss(&z, y, &mut d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut m = MlpModel::new(
            &[3, 4, 2],
            ActivationKind::leaky(),
            Head::Softmax,
            1e-3,
            &mut Rng::new(0),
        )
        .unwrap();
        m.stack.params.iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.logits(&[0.3, 0.1, 0.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let m = MlpModel::new(&[2, 2], ActivationKind::leaky(), Head::Softmax, 1e-3, &mut Rng::new(1)).unwrap();
        let p = &m.stack.params;
        let x = [0.5, -1.5];
        let z = m.logits(&x).unwrap();
        for i in 0..2 {
            let want = p[4 + i] + p[2 * i] * x[0] + p[2 * i + 1] * x[1];
            assert!((z[i] - want).abs() < 1e-15);
        }
        assert_eq!(z, m.logits(&x).unwrap());
    }

    #[test]
    fn uniform_logits_cost_ln_classes() {
        let mut m = MlpModel::new(
            &[3, 4, 10],
            ActivationKind::leaky(),
            Head::Softmax,
            1e-3,
            &mut Rng::new(0),
        )
        .unwrap();
        m.stack.params.iter_mut().for_each(|p| *p = 0.0);
        let mut y = vec![0.0; 10];
        y[4] = 1.0;
        assert!((m.loss(&[1.0, 2.0, 3.0], &y).unwrap() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_cost_nothing() {
        let m = MlpModel::new(&[1, 3], ActivationKind::leaky(), Head::Softmax, 1e-3, &mut Rng::new(0)).unwrap();
        let mut d = Vec::new();
        assert!(m.head_loss(&[40.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &mut d) < 1e-6);
        let s = MlpModel {
            head: Head::Sigmoid,
            ..m
        };
        assert!(s.head_loss(&[40.0], &[1.0], &mut d) < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, head) in [(3, Head::Softmax), (4, Head::Sigmoid), (5, Head::SquaredError)] {
            let mut rng = Rng::new(seed);
            let out = if head == Head::Sigmoid { 1 } else { 3 };
            let m = MlpModel::new(&[3, 4, 4, out], ActivationKind::leaky(), head, 1e-3, &mut rng).unwrap();
            let x = [0.7, -0.4, 1.1];
            let y: Vec<f64> = (0..out).map(|i| (i == 0) as u8 as f64).collect();
            let mut grads = vec![0.0; m.stack.len()];
            m.loss_and_grads(&x, &y, 1.0, &mut grads, &mut ForwardCache::default())
                .unwrap();
            for k in 0..m.stack.len() {
                let h = 1e-6;
                let mut plus = m.clone();
                plus.stack.params[k] += h;
                let mut minus = m.clone();
                minus.stack.params[k] -= h;
                let fd = (plus.loss(&x, &y).unwrap() - minus.loss(&x, &y).unwrap()) / (2.0 * h);
                let denom = fd.abs().max(grads[k].abs()).max(1e-8);
                assert!((fd - grads[k]).abs() / denom < 1e-4, "param {k}: {fd} vs {}", grads[k]);
            }
        }
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = Rng::new(8);
        let mut m = MlpModel::new(&[2, 8, 2], ActivationKind::leaky(), Head::Softmax, 1e-2, &mut rng).unwrap();
        let xs: Vec<[f64; 2]> = (0..32).map(|i| [i as f64 / 32.0, 1.0 - i as f64 / 32.0]).collect();
        let ys: Vec<[f64; 2]> = (0..32).map(|i| if i < 16 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
        let xr: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let yr: Vec<&[f64]> = ys.iter().map(|y| &y[..]).collect();
        let mut cache = ForwardCache::default();
        let first = m.train_batch(&xr, &yr, &mut cache).unwrap();
        let mut last = first;
        for _ in 0..300 {
            last = m.train_batch(&xr, &yr, &mut cache).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
