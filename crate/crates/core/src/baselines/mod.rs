//! Comparison models: a backprop MLP trained with Adam and a vanilla
//! predictive-coding network with identity precisions and iterative
//! activity relaxation. Both share [`DenseStack`] for their parameters.

mod adam;
mod mlp;
mod pcn;

use alloc::vec;
use alloc::vec::Vec;

pub use adam::AdamState;
pub use mlp::{ForwardCache, Head, MlpModel};
pub use pcn::{PcnModel, RelaxTrace};

use crate::error::{invalid, Result};
use crate::math::{he_init, Rng};

/// Fully connected layer stack with every parameter in one flat vector, so
/// optimizers can treat it as a single array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    /// `[input, hidden.., output]`.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    offsets: Vec<(usize, usize)>,
}

impl DenseStack {
    /// He-initialised weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("a dense stack needs at least two non-empty layers"));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut n = 0;
        for k in 0..sizes.len() - 1 {
            let w = n;
            n += sizes[k] * sizes[k + 1];
            offsets.push((w, n));
            n += sizes[k + 1];
        }
        let mut params = vec![0.0; n];
        for (k, &(w, b)) in offsets.iter().enumerate() {
            for p in &mut params[w..b] {
                *p = he_init(sizes[k], rng)?;
            }
        }
        Ok(DenseStack {
            sizes: sizes.to_vec(),
            params,
            offsets,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Range of layer `k`'s weight block (row-major `[out x in]`) in `params`.
    pub fn weight_range(&self, k: usize) -> core::ops::Range<usize> {
        let (w, b) = self.offsets[k];
        w..b
    }

    pub fn bias_range(&self, k: usize) -> core::ops::Range<usize> {
        let (_, b) = self.offsets[k];
        b..b + self.sizes[k + 1]
    }

    /// `out = W_k * input + b_k`.
    pub fn affine(&self, k: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
        debug_assert_eq!(input.len(), n_in);
        let w = &self.params[self.weight_range(k)];
        let b = &self.params[self.bias_range(k)];
        out.clear();
        out.extend((0..n_out).map(|i| {
            let row = &w[i * n_in..(i + 1) * n_in];
            b[i] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
        }));
    }

    /// `out = W_k^T * err`.
    pub fn affine_transpose(&self, k: usize, err: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
        let w = &self.params[self.weight_range(k)];
        out.clear();
        out.resize(n_in, 0.0);
        for i in 0..n_out {
            let e = err[i];
            if e == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                *o += a * e;
            }
        }
    }

    /// `grads[W_k] += scale * err * input^T`, `grads[b_k] += scale * err`.
    pub fn accumulate_outer(&self, k: usize, err: &[f64], input: &[f64], scale: f64, grads: &mut [f64]) {
        let n_in = self.sizes[k];
        let wr = self.weight_range(k);
        let br = self.bias_range(k);
        for (i, &e) in err.iter().enumerate() {
            let e = e * scale;
            grads[br.start + i] += e;
            if e == 0.0 {
                continue;
            }
            let row = &mut grads[wr.start + i * n_in..wr.start + (i + 1) * n_in];
            for (g, x) in row.iter_mut().zip(input) {
                *g += e * x;
            }
        }
    }
}
