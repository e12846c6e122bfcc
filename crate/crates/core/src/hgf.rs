//! Deep hierarchical Gaussian filter network.
//!
//! Layers are stored output-first: index 0 is the output layer and the last
//! index is the clamped input layer. Every continuous layer `l` is predicted
//! by its parent `l + 1` through a coupling matrix, a bias and the
//! piecewise-linear function `g`:
//!
//! ```text
//! mu_hat[l] = alpha[l] * g(mu[l + 1]) + bias[l]
//! pi_hat[l] = 1 / (1 / pi_prev[l] + exp(mu_vol[l] + omega[l]))
//! ```
//!
//! With a binary output the widths list `[in, h1, .., hk, C]` produces an
//! extra continuous "logit" layer of width `C` between the last hidden layer
//! and the `C` binary nodes; each binary node is predicted as
//! `sigmoid(mu_hat_logit)` with precision `1 / (m (1 - m))`.
//!
//! A sample is processed by [`HgfNetwork::predict_sweep`] (top-down),
//! [`HgfNetwork::prediction_errors`], [`HgfNetwork::posterior_update`]
//! (bottom-up, one closed-form step per layer) and, when volatility parents are
//! attached, [`HgfNetwork::volatility_update`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::math::{exp, he_init, ln, sigmoid, softplus, ActivationKind, Rng, LN_2PI};
use crate::plasticity::WeightRule;

/// Lower bound applied to volatility-parent precisions after an update.
pub const VOLATILITY_PRECISION_FLOOR: f64 = 1e-8;

/// Smallest `m (1 - m)` used for a binary node's predicted precision.
const BINARY_VARIANCE_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// One binary node per class, each fed by a continuous logit unit.
    Binary,
    /// An observed continuous layer clamped to the target.
    Gaussian,
}

/// How the previous posterior precision enters the next prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionMode {
    /// `pi_prev` is the configured prior at every sample.
    ResetEachSample,
    /// `pi_prev` is the posterior precision left by the previous sample.
    TemporalCarryover,
}

/// What a binary node sends to its continuous logit parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryCoupling {
    /// The node's predicted precision `1 / (m (1 - m))` weights its error
    /// with unit coupling and unit slope: the parent gains `pi_hat_bin` in
    /// precision and `pi_hat_bin * delta_bin` in its mean numerator.
    PrecisionWeighted,
    /// The sigmoid slope `m (1 - m)` is used as `g'`: the parent gains
    /// `m (1 - m)` in precision and `delta_bin` in its mean numerator, which is
    /// the quadratic expansion of the Bernoulli log-likelihood in logit space.
    SigmoidSlope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityConfig {
    /// Tonic log-volatility of the volatility parents themselves.
    pub omega_vol: f64,
}

impl Default for VolatilityConfig {
    fn default() -> Self {
        VolatilityConfig { omega_vol: -4.0 }
    }
}

/// Everything needed to build a network.
#[derive(Debug, Clone, PartialEq)]
pub struct HgfConfig {
    /// `[input, hidden.., output]`.
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
    /// Tonic log-volatility shared by every continuous layer.
    pub omega: f64,
    pub volatility: Option<VolatilityConfig>,
    pub precision_mode: PrecisionMode,
    pub weight_rule: WeightRule,
    pub output: OutputKind,
    pub binary_coupling: BinaryCoupling,
    pub prior_precision: f64,
    /// Pass the clamped input through `g` before it predicts the first hidden
    /// layer. Off by default: inputs couple linearly.
    pub activate_input: bool,
}

impl HgfConfig {
    pub fn new(widths: &[usize]) -> Self {
        HgfConfig {
            widths: widths.to_vec(),
            activation: ActivationKind::leaky(),
            omega: -10.0,
            volatility: None,
            precision_mode: PrecisionMode::TemporalCarryover,
            weight_rule: WeightRule::default(),
            output: OutputKind::Binary,
            binary_coupling: BinaryCoupling::SigmoidSlope,
            prior_precision: 1.0,
            activate_input: false,
        }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_activation(mut self, g: ActivationKind) -> Self {
        self.activation = g;
        self
    }

    pub fn with_volatility(mut self, vol: Option<VolatilityConfig>) -> Self {
        self.volatility = vol;
        self
    }

    pub fn with_precision_mode(mut self, mode: PrecisionMode) -> Self {
        self.precision_mode = mode;
        self
    }

    pub fn with_weight_rule(mut self, rule: WeightRule) -> Self {
        self.weight_rule = rule;
        self
    }

    pub fn with_output(mut self, output: OutputKind) -> Self {
        self.output = output;
        self
    }

    pub fn with_binary_coupling(mut self, coupling: BinaryCoupling) -> Self {
        self.binary_coupling = coupling;
        self
    }

    pub fn with_prior_precision(mut self, prior: f64) -> Self {
        self.prior_precision = prior;
        self
    }
}

/// Belief state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBeliefs {
    pub mu: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    /// Value prediction error `mu - mu_hat`.
    pub delta: Vec<f64>,
}

impl LayerBeliefs {
    pub fn new(width: usize, prior: f64) -> Self {
        LayerBeliefs {
            mu: vec![0.0; width],
            pi: vec![prior; width],
            mu_hat: vec![0.0; width],
            pi_hat: vec![prior; width],
            delta: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mu.len()
    }
}

/// Value couplings from a parent layer to a child layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// Row-major `[child_width x parent_width]`.
    pub alpha: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Coupling {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Coupling {
            alpha: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
            rows,
            cols,
        }
    }

    pub fn he(rows: usize, cols: usize, rng: &mut Rng) -> Result<Self> {
        let mut c = Coupling::zeros(rows, cols);
        for a in c.alpha.iter_mut() {
            *a = he_init(cols, rng)?;
        }
        Ok(c)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.alpha[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.alpha[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = alpha * input + bias`.
    pub fn affine(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = self.row(i);
            let mut acc = self.bias[i];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o = acc;
        }
    }
}

/// Implicit volatility parent: one log-volatility belief per child unit.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityParentState {
    pub mu_vol: Vec<f64>,
    pub pi_vol: Vec<f64>,
    pub mu_hat_vol: Vec<f64>,
    pub pi_hat_vol: Vec<f64>,
    /// Last volatility prediction error of each child unit.
    pub vope: Vec<f64>,
    pub omega_vol: f64,
}

impl VolatilityParentState {
    pub fn new(width: usize, omega_vol: f64) -> Self {
        VolatilityParentState {
            mu_vol: vec![0.0; width],
            pi_vol: vec![1.0; width],
            mu_hat_vol: vec![0.0; width],
            pi_hat_vol: vec![1.0; width],
            vope: vec![0.0; width],
            omega_vol,
        }
    }
}

/// Result of one volatility-parent update for a single child unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityStep {
    pub mu_vol: f64,
    pub pi_vol: f64,
    pub vope: f64,
    pub floored: bool,
}

/// Volatility prediction error `pi_hat / pi + pi_hat * delta^2 - 1`.
#[inline]
pub fn volatility_prediction_error(pi_hat: f64, pi: f64, delta: f64) -> f64 {
    pi_hat / pi + pi_hat * delta * delta - 1.0
}

/// Closed-form update of one volatility parent from its child's beliefs.
///
/// `gamma = pi_hat_child * exp(mu_hat_vol + omega_child)` is the effective
/// volatility weight. The precision gains `gamma^2 (1 + vope) / 2`, and the mean
/// moves by `gamma * vope / (2 pi_vol)`.
pub fn volatility_step(
    mu_hat_vol: f64,
    pi_hat_vol: f64,
    omega_child: f64,
    pi_hat_child: f64,
    pi_child: f64,
    delta_child: f64,
) -> VolatilityStep {
    let vope = volatility_prediction_error(pi_hat_child, pi_child, delta_child);
    let gamma = pi_hat_child * exp(mu_hat_vol + omega_child);
    let mut pi_vol = pi_hat_vol + 0.5 * gamma * gamma * (1.0 + vope);
    let floored = !(pi_vol > VOLATILITY_PRECISION_FLOOR);
    if floored {
        pi_vol = VOLATILITY_PRECISION_FLOOR;
    }
    let mu_vol = mu_hat_vol + gamma / (2.0 * pi_vol) * vope;
    VolatilityStep {
        mu_vol,
        pi_vol,
        vope,
        floored,
    }
}

/// Layered belief network.
#[derive(Debug, Clone, PartialEq)]
pub struct HgfNetwork {
    /// Output layer first, input layer last.
    pub layers: Vec<LayerBeliefs>,
    /// `couplings[k]` predicts layer `k + first_coupled_layer()` from the
    /// layer above it.
    pub couplings: Vec<Coupling>,
    /// Tonic log-volatility per layer.
    pub omega: Vec<f64>,
    pub activation: ActivationKind,
    /// Volatility parent per layer; only updated hidden layers carry one.
    pub volatility: Vec<Option<VolatilityParentState>>,
    pub precision_mode: PrecisionMode,
    pub weight_rule: WeightRule,
    pub output: OutputKind,
    pub binary_coupling: BinaryCoupling,
    pub prior_precision: f64,
    pub activate_input: bool,
    /// Number of volatility precisions raised to the floor so far.
    pub volatility_floor_hits: u64,
    input_clamped: bool,
    target_clamped: bool,
    scratch_pi: Vec<f64>,
    scratch_num: Vec<f64>,
}

impl HgfNetwork {
    /// Builds a network with He-initialised couplings, zero biases, zero
    /// means and every precision at the configured prior.
    pub fn build(config: &HgfConfig, rng: &mut Rng) -> Result<Self> {
        let widths = &config.widths;
        if widths.len() < 3 {
            return Err(invalid(
                "widths needs an input, at least one hidden and an output entry",
            ));
        }
        if widths.contains(&0) {
            return Err(invalid("every layer width must be at least 1"));
        }
        if !(config.prior_precision > 0.0) || !config.prior_precision.is_finite() {
            return Err(invalid("prior precision must be positive and finite"));
        }
        if !config.omega.is_finite() {
            return Err(invalid("omega must be finite"));
        }
        if !(config.weight_rule.eta >= 0.0) {
            return Err(invalid("learning rate must be non-negative"));
        }

        // Output-first layer widths.
        let out = *widths.last().unwrap();
        let mut layer_widths = Vec::with_capacity(widths.len() + 1);
        layer_widths.push(out);
        if config.output == OutputKind::Binary {
            layer_widths.push(out);
        }
        layer_widths.extend(widths[..widths.len() - 1].iter().rev());

        let prior = config.prior_precision;
        let layers: Vec<LayerBeliefs> = layer_widths.iter().map(|&w| LayerBeliefs::new(w, prior)).collect();
        let first = match config.output {
            OutputKind::Binary => 1,
            OutputKind::Gaussian => 0,
        };
        let mut couplings = Vec::with_capacity(layer_widths.len() - 1 - first);
        for child in first..layer_widths.len() - 1 {
            couplings.push(Coupling::he(layer_widths[child], layer_widths[child + 1], rng)?);
        }
        let n = layers.len();
        let volatility = (0..n)
            .map(|l| match config.volatility {
                Some(v) if l >= 1 && l < n - 1 => Some(VolatilityParentState::new(layer_widths[l], v.omega_vol)),
                _ => None,
            })
            .collect();
        let max_w = layer_widths.iter().copied().max().unwrap_or(0);
        Ok(HgfNetwork {
            layers,
            couplings,
            omega: vec![config.omega; n],
            activation: config.activation,
            volatility,
            precision_mode: config.precision_mode,
            weight_rule: config.weight_rule,
            output: config.output,
            binary_coupling: config.binary_coupling,
            prior_precision: prior,
            activate_input: config.activate_input,
            volatility_floor_hits: 0,
            input_clamped: false,
            target_clamped: false,
            scratch_pi: vec![0.0; max_w],
            scratch_num: vec![0.0; max_w],
        })
    }

    /// Index of the clamped input layer.
    #[inline]
    pub fn input_layer(&self) -> usize {
        self.layers.len() - 1
    }

    /// Lowest layer that has a coupling matrix.
    #[inline]
    pub fn first_coupled_layer(&self) -> usize {
        match self.output {
            OutputKind::Binary => 1,
            OutputKind::Gaussian => 0,
        }
    }

    /// Coupling predicting layer `child` from `child + 1`.
    #[inline]
    pub fn coupling(&self, child: usize) -> &Coupling {
        &self.couplings[child - self.first_coupled_layer()]
    }

    #[inline]
    pub fn coupling_mut(&mut self, child: usize) -> &mut Coupling {
        let first = self.first_coupled_layer();
        &mut self.couplings[child - first]
    }

    /// Layers that receive posterior updates.
    pub fn hidden_layers(&self) -> core::ops::Range<usize> {
        1..self.input_layer()
    }

    pub fn input_width(&self) -> usize {
        self.layers[self.input_layer()].width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn has_volatility(&self) -> bool {
        self.volatility.iter().any(Option::is_some)
    }

    pub fn is_input_clamped(&self) -> bool {
        self.input_clamped
    }

    /// Value the parent layer `parent` presents to its children.
    #[inline]
    pub fn parent_activation(&self, parent: usize, x: f64) -> f64 {
        if parent == self.input_layer() && !self.activate_input {
            x
        } else {
            self.activation.apply(x)
        }
    }

    /// Clamps the input layer to a data point. The input layer is observed and
    /// never updated.
    pub fn clamp_input(&mut self, x: &[f64]) -> Result<()> {
        let top = self.input_layer();
        check_len(self.layers[top].width(), x.len())?;
        let prior = self.prior_precision;
        let pi_hat = 1.0 / (1.0 / prior + exp(self.omega[top]));
        let layer = &mut self.layers[top];
        layer.mu.copy_from_slice(x);
        layer.mu_hat.copy_from_slice(x);
        layer.delta.iter_mut().for_each(|d| *d = 0.0);
        layer.pi.iter_mut().for_each(|p| *p = prior);
        layer.pi_hat.iter_mut().for_each(|p| *p = pi_hat);
        self.input_clamped = true;
        Ok(())
    }

    /// Clamps the output layer to a target (one-hot for classification).
    pub fn clamp_target(&mut self, y: &[f64]) -> Result<()> {
        check_len(self.layers[0].width(), y.len())?;
        self.layers[0].mu.copy_from_slice(y);
        self.target_clamped = true;
        Ok(())
    }

    /// Releases the output clamp; the output then follows its prediction.
    pub fn clear_target(&mut self) {
        self.target_clamped = false;
    }

    /// Top-down prediction of every non-input layer.
    ///
    /// Each continuous layer's mean is first set to its prediction, so the
    /// sweep is a forward pass of the prior means. Precisions only move from
    /// `pi` to `pi_hat`; `pi` itself is untouched here.
    pub fn predict_sweep(&mut self) -> Result<()> {
        if !self.input_clamped {
            return Err(Error::Precondition(
                "input layer must be clamped before the prediction sweep".into(),
            ));
        }
        let top = self.input_layer();
        let first = self.first_coupled_layer();
        for l in (first..top).rev() {
            self.predict_layer(l);
        }
        if self.output == OutputKind::Binary {
            let (bin, rest) = self.layers.split_at_mut(1);
            let logit = &rest[0];
            let bin = &mut bin[0];
            for i in 0..bin.width() {
                let z = logit.mu_hat[i];
                let m = sigmoid(z);
                let s = (sigmoid(z) * sigmoid(-z)).max(BINARY_VARIANCE_FLOOR);
                bin.mu_hat[i] = m;
                bin.pi_hat[i] = 1.0 / s;
                if !self.target_clamped {
                    bin.mu[i] = m;
                }
            }
        }
        Ok(())
    }

    fn predict_layer(&mut self, l: usize) {
        let is_output = l == 0;
        let carry = self.precision_mode == PrecisionMode::TemporalCarryover && !is_output;
        let prior = self.prior_precision;
        let omega = self.omega[l];

        // Volatility parent prediction first; it sets this layer's step size.
        if let Some(vol) = self.volatility[l].as_mut() {
            let e = exp(vol.omega_vol);
            for j in 0..vol.mu_vol.len() {
                vol.mu_hat_vol[j] = vol.mu_vol[j];
                vol.pi_hat_vol[j] = 1.0 / (1.0 / vol.pi_vol[j] + e);
            }
        }

        let linear_parent = l + 1 == self.layers.len() - 1 && !self.activate_input;
        let first = self.first_coupled_layer();
        let g = self.activation;
        let (lower, upper) = self.layers.split_at_mut(l + 1);
        let parent = &upper[0];
        let layer = &mut lower[l];
        let coupling = &self.couplings[l - first];

        let act = &mut self.scratch_num;
        act.clear();
        if linear_parent {
            act.extend_from_slice(&parent.mu);
        } else {
            act.extend(parent.mu.iter().map(|&x| g.apply(x)));
        }
        coupling.affine(act, &mut layer.mu_hat);

        let vol = self.volatility[l].as_ref();
        let tonic = exp(omega);
        for j in 0..layer.width() {
            let pi_prev = if carry { layer.pi[j] } else { prior };
            let step = match vol {
                Some(v) => exp(v.mu_hat_vol[j] + omega),
                None => tonic,
            };
            let pi_hat = 1.0 / (1.0 / pi_prev + step);
            debug_assert!(pi_hat > 0.0 && pi_hat <= pi_prev);
            layer.pi_hat[j] = pi_hat;
        }
        if !(is_output && self.target_clamped) {
            layer.mu.copy_from_slice(&layer.mu_hat);
        }
        if is_output {
            // observed layer keeps its prior precision
            layer.pi.iter_mut().for_each(|p| *p = prior);
        }
    }

    /// Value prediction errors `delta = mu - mu_hat` for every non-input layer.
    ///
    /// Before the posterior sweep only the clamped output carries a non-zero
    /// error; [`HgfNetwork::posterior_update`] refreshes each hidden layer's
    /// error as soon as that layer is revised.
    pub fn prediction_errors(&mut self) {
        let top = self.input_layer();
        for layer in &mut self.layers[..top] {
            for ((d, m), mh) in layer.delta.iter_mut().zip(&layer.mu).zip(&layer.mu_hat) {
                *d = m - mh;
            }
        }
    }

    /// Bottom-up closed-form posterior update of every hidden layer.
    ///
    /// For hidden layer `b` with child `a = b - 1`:
    ///
    /// ```text
    /// pi[b][j] = pi_hat[b][j] + g'(mu_hat[b][j])^2 * sum_i pi_hat[a][i] alpha[i][j]^2
    /// mu[b][j] = mu_hat[b][j] + g'(mu_hat[b][j]) * sum_i pi_hat[a][i] alpha[i][j] delta[a][i] / pi[b][j]
    /// ```
    ///
    /// after which `delta[b] = mu[b] - mu_hat[b]` is what `b` sends upward.
    pub fn posterior_update(&mut self) -> Result<()> {
        let top = self.input_layer();
        for b in 1..top {
            self.posterior_update_layer(b)?;
        }
        Ok(())
    }

    /// Posterior update of a single hidden layer from its child layer.
    pub fn posterior_update_layer(&mut self, b: usize) -> Result<()> {
        if b == 0 || b >= self.input_layer() {
            return Err(invalid(format!("layer {b} is not a hidden layer")));
        }
        let width = self.layers[b].width();
        let mut acc_pi = core::mem::take(&mut self.scratch_pi);
        let mut acc_num = core::mem::take(&mut self.scratch_num);
        acc_pi.clear();
        acc_pi.resize(width, 0.0);
        acc_num.clear();
        acc_num.resize(width, 0.0);

        let binary_child = b == 1 && self.output == OutputKind::Binary;
        let child = &self.layers[b - 1];
        if binary_child {
            for j in 0..width {
                let pi_hat_bin = child.pi_hat[j];
                let delta_bin = child.delta[j];
                match self.binary_coupling {
                    BinaryCoupling::PrecisionWeighted => {
                        acc_pi[j] = pi_hat_bin;
                        acc_num[j] = pi_hat_bin * delta_bin;
                    }
                    BinaryCoupling::SigmoidSlope => {
                        let slope = 1.0 / pi_hat_bin;
                        acc_pi[j] = pi_hat_bin * slope * slope;
                        acc_num[j] = pi_hat_bin * slope * delta_bin;
                    }
                }
            }
        } else {
            let coupling = self.coupling(b - 1);
            for i in 0..coupling.rows {
                let w = child.pi_hat[i];
                let wd = w * child.delta[i];
                let row = coupling.row(i);
                for ((a, p), n) in row.iter().zip(acc_pi.iter_mut()).zip(acc_num.iter_mut()) {
                    *p += w * a * a;
                    *n += wd * a;
                }
            }
        }

        let g = self.activation;
        let layer = &mut self.layers[b];
        for j in 0..width {
            let mh = layer.mu_hat[j];
            let slope = if binary_child { 1.0 } else { g.deriv(mh) };
            let pi = layer.pi_hat[j] + slope * slope * acc_pi[j];
            if !(pi > 0.0) || !pi.is_finite() {
                self.scratch_pi = acc_pi;
                self.scratch_num = acc_num;
                return Err(Error::Numerical(format!(
                    "non-positive or non-finite posterior precision {pi} at layer {b}, unit {j}"
                )));
            }
            let mu = mh + slope * acc_num[j] / pi;
            layer.pi[j] = pi;
            layer.mu[j] = mu;
            layer.delta[j] = mu - mh;
        }
        self.scratch_pi = acc_pi;
        self.scratch_num = acc_num;
        Ok(())
    }

    /// Updates every volatility parent from its child's posterior beliefs.
    /// A no-op for networks without volatility parents.
    pub fn volatility_update(&mut self) {
        for b in 1..self.input_layer() {
            self.volatility_update_layer(b);
        }
    }

    pub fn volatility_update_layer(&mut self, b: usize) {
        let omega = self.omega[b];
        let mut hits = 0;
        if let Some(vol) = self.volatility[b].as_mut() {
            let layer = &self.layers[b];
            for j in 0..layer.width() {
                let step = volatility_step(
                    vol.mu_hat_vol[j],
                    vol.pi_hat_vol[j],
                    omega,
                    layer.pi_hat[j],
                    layer.pi[j],
                    layer.delta[j],
                );
                vol.mu_vol[j] = step.mu_vol;
                vol.pi_vol[j] = step.pi_vol;
                vol.vope[j] = step.vope;
                hits += step.floored as u64;
            }
        }
        self.volatility_floor_hits += hits;
    }

    /// Prediction without touching any belief: class probabilities for a
    /// binary output, predicted means for a Gaussian output.
    ///
    /// Equal to the output of [`HgfNetwork::predict_sweep`] on the same input,
    /// since predicted means do not depend on precisions.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_width(), x.len())?;
        let mut cur = x.to_vec();
        let mut act = Vec::new();
        let top = self.input_layer();
        for child in (self.first_coupled_layer()..top).rev() {
            let parent = child + 1;
            act.clear();
            act.extend(cur.iter().map(|&v| self.parent_activation(parent, v)));
            let c = self.coupling(child);
            cur.resize(c.rows, 0.0);
            c.affine(&act, &mut cur);
        }
        if self.output == OutputKind::Binary {
            cur.iter_mut().for_each(|z| *z = sigmoid(*z));
        }
        Ok(cur)
    }

    /// Index of the largest output.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let out = self.infer(x)?;
        Ok(argmax(&out))
    }

    /// Free energy of the current sample from the cached predictions and
    /// errors: Gaussian terms `(pi_hat delta^2 - ln pi_hat + ln 2 pi) / 2` over
    /// every non-input continuous layer, plus the binary cross-entropy of each
    /// clamped binary node.
    pub fn free_energy(&self) -> f64 {
        let top = self.input_layer();
        let mut f = 0.0;
        let first_cont = match self.output {
            OutputKind::Binary => 1,
            OutputKind::Gaussian => 0,
        };
        for layer in &self.layers[first_cont..top] {
            for (&d, &ph) in layer.delta.iter().zip(&layer.pi_hat) {
                f += 0.5 * (ph * d * d - ln(ph) + LN_2PI);
            }
        }
        if self.output == OutputKind::Binary && self.target_clamped {
            let logit = &self.layers[1];
            for (i, &y) in self.layers[0].mu.iter().enumerate() {
                f += bce_from_logit(y, logit.mu_hat[i]);
            }
        }
        f
    }

    /// Energy of the current posterior means with predicted precisions held
    /// fixed: every prediction is recomputed from the parent's posterior mean.
    ///
    /// The one-shot posterior update is the stationary point of this function
    /// for a single hidden unit in the linear branch of `g`.
    pub fn energy(&self) -> f64 {
        let top = self.input_layer();
        let first = self.first_coupled_layer();
        let mut f = 0.0;
        let mut act = Vec::new();
        let mut pred = Vec::new();
        for l in first..top {
            let parent = l + 1;
            act.clear();
            act.extend(
                self.layers[parent]
                    .mu
                    .iter()
                    .map(|&v| self.parent_activation(parent, v)),
            );
            let c = self.coupling(l);
            pred.clear();
            pred.resize(c.rows, 0.0);
            c.affine(&act, &mut pred);
            let layer = &self.layers[l];
            for j in 0..layer.width() {
                let d = layer.mu[j] - pred[j];
                let ph = layer.pi_hat[j];
                f += 0.5 * (ph * d * d - ln(ph) + LN_2PI);
            }
        }
        if self.output == OutputKind::Binary && self.target_clamped {
            for (i, &y) in self.layers[0].mu.iter().enumerate() {
                f += bce_from_logit(y, self.layers[1].mu[i]);
            }
        }
        f
    }

    /// Restores every value-layer precision to the prior and clears means.
    pub fn reset_beliefs(&mut self) {
        let prior = self.prior_precision;
        for layer in &mut self.layers {
            *layer = LayerBeliefs::new(layer.width(), prior);
        }
        self.input_clamped = false;
        self.target_clamped = false;
    }
}

/// Binary cross-entropy `-(y ln m + (1 - y) ln(1 - m))` with `m = sigmoid(z)`.
#[inline]
pub fn bce_from_logit(y: f64, z: f64) -> f64 {
    softplus(z) - y * z
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plasticity::{WeightRule, WeightRuleKind};

    fn gaussian_chain(widths: &[usize]) -> HgfNetwork {
        let cfg = HgfConfig::new(widths)
            .with_output(OutputKind::Gaussian)
            .with_precision_mode(PrecisionMode::ResetEachSample);
        HgfNetwork::build(&cfg, &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn build_shapes() {
        let net = HgfNetwork::build(&HgfConfig::new(&[784, 32, 32, 10]), &mut Rng::new(0)).unwrap();
        let shapes: Vec<(usize, usize)> = net.couplings.iter().map(|c| (c.rows, c.cols)).collect();
        // output-first storage: logit <- h2, h2 <- h1, h1 <- input
        assert_eq!(shapes, vec![(10, 32), (32, 32), (32, 784)]);
        assert_eq!(net.layers.len(), 5);
        assert_eq!(net.output_width(), 10);
        assert!(net.couplings.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
        assert!(net.layers.iter().all(|l| l.pi.iter().all(|&p| p == 1.0)));
    }

    #[test]
    fn build_spiral_depth_six() {
        let mut widths = vec![2];
        widths.extend([12; 6]);
        widths.push(1);
        let net = HgfNetwork::build(
            &HgfConfig::new(&widths).with_volatility(Some(VolatilityConfig::default())),
            &mut Rng::new(0),
        )
        .unwrap();
        assert_eq!(net.couplings.len(), 7);
        assert_eq!(net.hidden_layers().len(), 7);
        assert_eq!(net.volatility.iter().filter(|v| v.is_some()).count(), 7);
    }

    #[test]
    fn build_rejects_bad_widths() {
        assert!(HgfNetwork::build(&HgfConfig::new(&[4, 2]), &mut Rng::new(0)).is_err());
        assert!(HgfNetwork::build(&HgfConfig::new(&[4, 0, 2]), &mut Rng::new(0)).is_err());
        assert!(HgfNetwork::build(&HgfConfig::new(&[]), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = HgfConfig::new(&[5, 4, 3]);
        let a = HgfNetwork::build(&cfg, &mut Rng::new(9)).unwrap();
        let b = HgfNetwork::build(&cfg, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predicted_precision_examples() {
        let mut net = gaussian_chain(&[1, 1, 1]);
        net.omega = vec![0.0; 3];
        net.clamp_input(&[1.0]).unwrap();
        net.predict_sweep().unwrap();
        assert!((net.layers[1].pi_hat[0] - 0.5).abs() < 1e-15);

        net.omega = vec![-10.0; 3];
        net.predict_sweep().unwrap();
        // 1 / (1 + e^-10), evaluated with mpmath to 20 digits
        let expected = 0.999_954_602_131_297_6;
        assert!((net.layers[1].pi_hat[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn binary_node_prediction_at_zero_logit() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[2, 3, 1]), &mut Rng::new(0)).unwrap();
        net.couplings
            .iter_mut()
            .for_each(|c| c.alpha.iter_mut().for_each(|a| *a = 0.0));
        net.clamp_input(&[0.3, -0.2]).unwrap();
        net.predict_sweep().unwrap();
        assert_eq!(net.layers[0].mu_hat[0], 0.5);
        assert_eq!(net.layers[0].pi_hat[0], 4.0);
    }

    #[test]
    fn predict_requires_clamped_input() {
        let mut net = gaussian_chain(&[2, 2, 2]);
        assert!(matches!(net.predict_sweep(), Err(Error::Precondition(_))));
    }

    #[test]
    fn clamp_dimension_checks() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[784, 8, 10]), &mut Rng::new(0)).unwrap();
        assert!(net.clamp_input(&[0.0; 784]).is_ok());
        assert!(net.clamp_target(&[0.0; 9]).is_err());
        assert!(net.clamp_input(&[0.0; 783]).is_err());
    }

    #[test]
    fn prediction_error_examples() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[3, 4, 10]), &mut Rng::new(2)).unwrap();
        net.clamp_input(&[0.1, 0.2, 0.3]).unwrap();
        net.predict_sweep().unwrap();
        net.prediction_errors();
        assert!(net.layers.iter().all(|l| l.delta.iter().all(|&d| d == 0.0)));

        net.layers[0].mu_hat = vec![0.1; 10];
        let mut y = vec![0.0; 10];
        y[3] = 1.0;
        net.clamp_target(&y).unwrap();
        net.prediction_errors();
        for (i, &d) in net.layers[0].delta.iter().enumerate() {
            let want = if i == 3 { 0.9 } else { -0.1 };
            assert!((d - want).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unit_posterior_example() {
        // prior N(mu_hat, 1), unit-precision observation, gain 1/2
        let mut net = gaussian_chain(&[1, 1, 1]);
        net.omega = vec![-800.0; 3]; // exp underflows to 0: pi_hat == prior
        net.coupling_mut(1).set(0, 0, 2.0);
        net.coupling_mut(0).set(0, 0, 1.0);
        net.clamp_input(&[0.5]).unwrap();
        net.predict_sweep().unwrap();
        let mu_hat_b = net.layers[1].mu_hat[0];
        assert_eq!(mu_hat_b, 1.0);
        net.clamp_target(&[net.layers[0].mu_hat[0] + 0.6]).unwrap();
        net.prediction_errors();
        assert!((net.layers[0].delta[0] - 0.6).abs() < 1e-15);
        net.posterior_update().unwrap();
        assert_eq!(net.layers[1].pi[0], 2.0);
        assert!((net.layers[1].mu[0] - (mu_hat_b + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn zero_error_leaves_mean_at_prediction() {
        let mut net = gaussian_chain(&[3, 4, 2]);
        net.clamp_input(&[0.3, 0.1, 0.9]).unwrap();
        net.predict_sweep().unwrap();
        let y = net.layers[0].mu_hat.clone();
        net.clamp_target(&y).unwrap();
        net.prediction_errors();
        net.posterior_update().unwrap();
        let l = &net.layers[1];
        let c = net.coupling(0);
        for j in 0..l.width() {
            assert_eq!(l.mu[j], l.mu_hat[j]);
            let g = net.activation.deriv(l.mu_hat[j]);
            let inc: f64 = (0..c.rows)
                .map(|i| net.layers[0].pi_hat[i] * c.get(i, j).powi(2) * g * g)
                .sum();
            assert!((l.pi[j] - (l.pi_hat[j] + inc)).abs() < 1e-12);
        }
    }

    #[test]
    fn leaky_branch_scales_contributions() {
        let mut net = gaussian_chain(&[1, 1, 1]);
        net.omega = vec![-800.0; 3];
        net.coupling_mut(1).set(0, 0, -1.0);
        net.coupling_mut(0).set(0, 0, 1.0);
        net.clamp_input(&[1.0]).unwrap();
        net.predict_sweep().unwrap();
        assert_eq!(net.layers[1].mu_hat[0], -1.0);
        let y = net.layers[0].mu_hat[0] + 1.0;
        net.clamp_target(&[y]).unwrap();
        net.prediction_errors();
        net.posterior_update().unwrap();
        let pi = 1.0 + 0.01f64.powi(2);
        assert!((net.layers[1].pi[0] - pi).abs() < 1e-15);
        assert!((net.layers[1].mu[0] - (-1.0 + 0.01 / pi)).abs() < 1e-15);
    }

    #[test]
    fn input_is_never_updated() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[3, 5, 2]), &mut Rng::new(4)).unwrap();
        let x = [0.2, 0.7, 0.1];
        net.clamp_input(&x).unwrap();
        net.predict_sweep().unwrap();
        net.clamp_target(&[1.0, 0.0]).unwrap();
        net.prediction_errors();
        net.posterior_update().unwrap();
        assert_eq!(net.layers[net.input_layer()].mu, x.to_vec());
    }

    #[test]
    fn infer_matches_prediction_sweep() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[4, 6, 5, 3]), &mut Rng::new(5)).unwrap();
        let x = [0.4, -0.3, 0.9, 0.0];
        let p = net.infer(&x).unwrap();
        net.clamp_input(&x).unwrap();
        net.predict_sweep().unwrap();
        assert_eq!(p, net.layers[0].mu_hat);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, net.infer(&x).unwrap());
    }

    #[test]
    fn untrained_zero_input_gives_half() {
        let net = HgfNetwork::build(&HgfConfig::new(&[4, 6, 3]), &mut Rng::new(5)).unwrap();
        let p = net.infer(&[0.0; 4]).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn free_energy_examples() {
        let mut net = gaussian_chain(&[1, 1, 1]);
        net.clamp_input(&[0.0]).unwrap();
        for l in &mut net.layers {
            l.delta = vec![0.0];
            l.pi_hat = vec![1.0];
        }
        let floor = net.free_energy();
        assert!((floor - LN_2PI).abs() < 1e-15); // two continuous units

        net.layers[0].delta = vec![1.0];
        let one = net.free_energy() - floor;
        net.layers[0].delta = vec![2.0];
        let two = net.free_energy() - floor;
        assert!((two - 4.0 * one).abs() < 1e-15);

        net.layers[0].delta = vec![1.0];
        net.layers[0].pi_hat = vec![2.0];
        let term = net.free_energy() - 0.5 * LN_2PI;
        assert!((term - 0.5 * (2.0 - 2f64.ln() + LN_2PI)).abs() < 1e-15);
    }

    #[test]
    fn binary_free_energy_vanishes_when_prediction_is_exact() {
        let mut net = HgfNetwork::build(&HgfConfig::new(&[1, 1, 1]), &mut Rng::new(0)).unwrap();
        net.clamp_input(&[0.0]).unwrap();
        net.predict_sweep().unwrap();
        net.layers[1].mu_hat = vec![60.0];
        net.clamp_target(&[1.0]).unwrap();
        for l in &mut net.layers {
            l.delta = vec![0.0];
            l.pi_hat = vec![1.0];
        }
        let f = net.free_energy();
        assert!((f - LN_2PI).abs() < 1e-12, "{f}"); // logit and hidden unit
    }

    #[test]
    fn binary_coupling_variants() {
        for kind in [BinaryCoupling::PrecisionWeighted, BinaryCoupling::SigmoidSlope] {
            let cfg = HgfConfig::new(&[2, 3, 1])
                .with_binary_coupling(kind)
                .with_precision_mode(PrecisionMode::ResetEachSample)
                .with_omega(-800.0);
            let mut net = HgfNetwork::build(&cfg, &mut Rng::new(3)).unwrap();
            net.couplings[0].alpha.iter_mut().for_each(|a| *a = 0.0);
            net.clamp_input(&[0.3, 0.4]).unwrap();
            net.predict_sweep().unwrap();
            net.clamp_target(&[1.0]).unwrap();
            net.prediction_errors();
            net.posterior_update().unwrap();
            let logit = &net.layers[1];
            match kind {
                BinaryCoupling::PrecisionWeighted => {
                    assert_eq!(logit.pi[0], 5.0);
                    assert!((logit.mu[0] - 4.0 * 0.5 / 5.0).abs() < 1e-15);
                }
                BinaryCoupling::SigmoidSlope => {
                    assert_eq!(logit.pi[0], 1.25);
                    assert!((logit.mu[0] - 0.5 / 1.25).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn multi_child_additivity() {
        let mut one = gaussian_chain(&[1, 1, 1]);
        let mut two = gaussian_chain(&[1, 1, 2]);
        for net in [&mut one, &mut two] {
            net.coupling_mut(net.input_layer() - 1).set(0, 0, 0.8);
            let c = net.coupling_mut(0);
            for i in 0..c.rows {
                c.set(i, 0, 1.3);
            }
            net.clamp_input(&[0.5]).unwrap();
            net.predict_sweep().unwrap();
            let y: Vec<f64> = net.layers[0].mu_hat.iter().map(|m| m + 0.25).collect();
            net.clamp_target(&y).unwrap();
            net.prediction_errors();
            net.posterior_update().unwrap();
        }
        let (a, b) = (&one.layers[1], &two.layers[1]);
        let inc1 = a.pi[0] - a.pi_hat[0];
        let inc2 = b.pi[0] - b.pi_hat[0];
        assert!((inc2 - 2.0 * inc1).abs() < 1e-12);
        let num1 = a.delta[0] * a.pi[0];
        let num2 = b.delta[0] * b.pi[0];
        assert!((num2 - 2.0 * num1).abs() < 1e-12);
    }

    #[test]
    fn volatility_step_examples() {
        let s = volatility_step(0.3, 1.0, -2.0, 2.0, 2.0, 0.0);
        assert_eq!(s.vope, 0.0);
        assert_eq!(s.mu_vol, 0.3);

        // pi_hat * delta^2 = 2 and pi_hat / pi = 1 -> vope = 2
        let s = volatility_step(0.0, 1.0, -2.0, 2.0, 2.0, 1.0);
        assert_eq!(s.vope, 2.0);
        assert!(s.mu_vol > 0.0);

        let s = volatility_step(0.0, 1.0, -2.0, 1.0, 4.0, 0.1);
        assert!(s.vope < 0.0 && s.mu_vol < 0.0);
        assert!(!s.floored);
    }

    #[test]
    fn volatility_floor_is_applied() {
        let s = volatility_step(0.0, 1e-12, 0.0, 1e-9, 1.0, 0.0);
        assert!(s.floored);
        assert_eq!(s.pi_vol, VOLATILITY_PRECISION_FLOOR);
    }

    #[test]
    fn reset_mode_starts_every_sample_at_prior() {
        let cfg = HgfConfig::new(&[3, 4, 2])
            .with_precision_mode(PrecisionMode::ResetEachSample)
            .with_weight_rule(WeightRule::new(WeightRuleKind::Precision, 1e-3));
        let mut net = HgfNetwork::build(&cfg, &mut Rng::new(1)).unwrap();
        let expected = 1.0 / (1.0 + (-10f64).exp());
        for k in 0..5 {
            let x = [0.1 * k as f64, 0.5, 0.2];
            net.clamp_input(&x).unwrap();
            net.predict_sweep().unwrap();
            for l in net.hidden_layers() {
                assert!(net.layers[l].pi_hat.iter().all(|&p| (p - expected).abs() < 1e-15));
            }
            net.clamp_target(&[1.0, 0.0]).unwrap();
            net.prediction_errors();
            net.posterior_update().unwrap();
        }
    }
}
