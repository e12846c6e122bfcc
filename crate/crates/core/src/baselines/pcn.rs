use alloc::vec;
use alloc::vec::Vec;

use super::{AdamState, DenseStack};
use crate::error::{check_len, Result};
use crate::math::{ActivationKind, Rng};

/// Discriminative predictive-coding network with identity precisions.
///
/// Activities `x[1..L-1]` are free, `x[0]` is the input and `x[L]` is clamped
/// to the target. The energy is
///
/// ```text
/// E = sum_k 0.5 * || x[k] - W_k phi(x[k-1]) - b_k ||^2
/// ```
///
/// with `phi = g` on hidden activities and the identity on the input. Hidden
/// activities start from a feedforward pass and descend `E` for `steps`
/// iterations before the weights take one Adam step on `dE/dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcnModel {
    pub stack: DenseStack,
    pub activation: ActivationKind,
    pub adam: AdamState,
    pub steps: usize,
    pub activity_lr: f64,
    acts: Vec<Vec<f64>>,
    errs: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    phi: Vec<f64>,
    grads: Vec<f64>,
}

/// Energy before the first relaxation step and after each step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelaxTrace {
    pub energies: Vec<f64>,
}

impl PcnModel {
    pub fn new(sizes: &[usize], activation: ActivationKind, lr: f64, rng: &mut Rng) -> Result<Self> {
        let stack = DenseStack::new(sizes, rng)?;
        let n = stack.len();
        Ok(PcnModel {
            stack,
            activation,
            adam: AdamState::new(n, lr),
            steps: 20,
            activity_lr: 0.1,
            acts: Vec::new(),
            errs: Vec::new(),
            scratch: Vec::new(),
            phi: Vec::new(),
            grads: vec![0.0; n],
        })
    }

    pub fn with_steps(mut self, steps: usize, activity_lr: f64) -> Self {
        self.steps = steps;
        self.activity_lr = activity_lr;
        self
    }

    pub fn input_width(&self) -> usize {
        self.stack.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.stack.sizes.last().unwrap()
    }

    fn phi_into(&self, k: usize, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if k == 0 {
            out.extend_from_slice(x);
        } else {
            let g = self.activation;
            out.extend(x.iter().map(|&v| g.apply(v)));
        }
    }

    /// Feedforward prediction of the output layer.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_width(), x.len())?;
        let mut cur = x.to_vec();
        let mut phi = Vec::new();
        let mut next = Vec::new();
        for k in 0..self.stack.layer_count() {
            self.phi_into(k, &cur, &mut phi);
            self.stack.affine(k, &phi, &mut next);
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let z = self.logits(x)?;
        if z.len() == 1 {
            return Ok((z[0] > 0.5) as usize);
        }
        Ok(crate::hgf::argmax(&z))
    }

    /// Current activities after the last relaxation, input first.
    pub fn activities(&self) -> &[Vec<f64>] {
        &self.acts
    }

    fn feedforward_init(&mut self, x: &[f64], y: &[f64]) {
        let n = self.stack.layer_count();
        let mut acts = core::mem::take(&mut self.acts);
        let mut phi = core::mem::take(&mut self.phi);
        acts.resize_with(n + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for k in 0..n {
            let (before, after) = acts.split_at_mut(k + 1);
            self.phi_into(k, &before[k], &mut phi);
            self.stack.affine(k, &phi, &mut after[0]);
        }
        acts[n].clear();
        acts[n].extend_from_slice(y);
        self.acts = acts;
        self.phi = phi;
    }

    /// Recomputes every layer's error `x[k] - prediction` and returns the energy.
    fn refresh_errors(&mut self) -> f64 {
        let n = self.stack.layer_count();
        let mut errs = core::mem::take(&mut self.errs);
        let mut phi = core::mem::take(&mut self.phi);
        let mut pred = core::mem::take(&mut self.scratch);
        errs.resize_with(n + 1, Vec::new);
        let mut energy = 0.0;
        for k in 0..n {
            self.phi_into(k, &self.acts[k], &mut phi);
            self.stack.affine(k, &phi, &mut pred);
            let e = &mut errs[k + 1];
            e.clear();
            e.extend(self.acts[k + 1].iter().zip(&pred).map(|(a, p)| a - p));
            energy += 0.5 * e.iter().map(|v| v * v).sum::<f64>();
        }
        self.errs = errs;
        self.phi = phi;
        self.scratch = pred;
        energy
    }

    /// Gradient descent on the hidden activities for `steps` iterations.
    pub fn relax(&mut self, x: &[f64], y: &[f64], steps: usize) -> Result<RelaxTrace> {
        check_len(self.input_width(), x.len())?;
        check_len(self.output_width(), y.len())?;
        self.feedforward_init(x, y);
        let n = self.stack.layer_count();
        let mut trace = RelaxTrace::default();
        trace.energies.push(self.refresh_errors());
        let mut back = Vec::new();
        let g = self.activation;
        for _ in 0..steps {
            for k in 1..n {
                self.stack.affine_transpose(k, &self.errs[k + 1], &mut back);
                let lr = self.activity_lr;
                for ((a, e), b) in self.acts[k].iter_mut().zip(&self.errs[k]).zip(&back) {
                    let grad = e - g.deriv(*a) * b;
                    *a -= lr * grad;
                }
            }
            trace.energies.push(self.refresh_errors());
        }
        Ok(trace)
    }

    /// Adds `scale * dE/dparams` at the current (relaxed) activities.
    fn accumulate_weight_grads(&mut self, scale: f64, grads: &mut [f64]) {
        let mut phi = core::mem::take(&mut self.phi);
        for k in 0..self.stack.layer_count() {
            self.phi_into(k, &self.acts[k], &mut phi);
            // dE/dW_k = -err_{k+1} phi(x_k)^T
            self.stack.accumulate_outer(k, &self.errs[k + 1], &phi, -scale, grads);
        }
        self.phi = phi;
    }

    /// Weight gradient of the energy after relaxing on one sample.
    pub fn weight_gradients(&mut self, x: &[f64], y: &[f64], steps: usize) -> Result<Vec<f64>> {
        self.relax(x, y, steps)?;
        let mut g = vec![0.0; self.stack.len()];
        self.accumulate_weight_grads(1.0, &mut g);
        Ok(g)
    }

    /// Relaxes each sample independently, averages the weight gradients and
    /// applies one Adam step. Returns the mean relaxed energy.
    pub fn train_batch(&mut self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<f64> {
        if xs.is_empty() {
            return Ok(0.0);
        }
        let mut grads = core::mem::take(&mut self.grads);
        grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / xs.len() as f64;
        let mut energy = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let trace = self.relax(x, y, self.steps)?;
            energy += trace.energies.last().copied().unwrap_or(0.0);
            self.accumulate_weight_grads(scale, &mut grads);
        }
        self.adam.step(&mut self.stack.params, &grads);
        self.grads = grads;
        Ok(energy * scale)
    }
}
