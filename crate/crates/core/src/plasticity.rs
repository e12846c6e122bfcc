//! Hebbian weight updates and the single-sample training step.
//!
//! Every rule changes `alpha[i][j]` by `eta * delta[i] * g(mu_parent[j])`
//! times a gain built only from the precisions of units `i` and `j`:
//!
//! | rule        | gain                                   |
//! |-------------|----------------------------------------|
//! | `Standard`  | 1                                      |
//! | `Precision` | `pi_child[i]`                          |
//! | `Ratio`     | `p_child[i] / (p_child[i] + p_parent[j])` |
//!
//! where `p` is the posterior or predicted precision depending on
//! [`RatioPrecision`]. Biases are couplings from an always-on parent whose
//! activation is 1 and whose precision is the prior.

use alloc::vec::Vec;

use crate::error::Result;
use crate::hgf::HgfNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRuleKind {
    Standard,
    Precision,
    Ratio,
}

/// Which precisions the ratio rule compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioPrecision {
    /// Posterior precisions of child and parent.
    Posterior,
    /// Predicted precisions of child and parent.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRule {
    pub kind: WeightRuleKind,
    pub eta: f64,
    pub ratio_precision: RatioPrecision,
}

impl WeightRule {
    pub fn new(kind: WeightRuleKind, eta: f64) -> Self {
        WeightRule {
            kind,
            eta,
            ratio_precision: RatioPrecision::Posterior,
        }
    }

    pub fn with_ratio_precision(mut self, which: RatioPrecision) -> Self {
        self.ratio_precision = which;
        self
    }

    /// Gain applied to the raw Hebbian increment of `alpha[i][j]`.
    #[inline]
    pub fn gain(&self, child_pi: f64, child_pi_hat: f64, parent_pi: f64, parent_pi_hat: f64) -> f64 {
        match self.kind {
            WeightRuleKind::Standard => 1.0,
            WeightRuleKind::Precision => child_pi,
            WeightRuleKind::Ratio => {
                let (c, p) = match self.ratio_precision {
                    RatioPrecision::Posterior => (child_pi, parent_pi),
                    RatioPrecision::Predicted => (child_pi_hat, parent_pi_hat),
                };
                ratio_gain(c, p)
            }
        }
    }
}

impl Default for WeightRule {
    fn default() -> Self {
        WeightRule::new(WeightRuleKind::Precision, 1e-3)
    }
}

#[inline]
pub fn ratio_gain(child: f64, parent: f64) -> f64 {
    let r = child / (child + parent);
    debug_assert!(r > 0.0 && r < 1.0 || !(child > 0.0 && parent > 0.0));
    r
}

/// Per-layer readout of one training step, indexed like `HgfNetwork::layers`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainDiagnostics {
    /// Mean `|delta|` per layer.
    pub mean_abs_delta: Vec<f64>,
    /// Mean predicted precision per layer.
    pub mean_pi_hat: Vec<f64>,
    /// Mean `|mu - mu_hat| * pi_hat` per layer.
    pub mean_pwpe: Vec<f64>,
    /// Mean `|d alpha|` of the coupling predicting each layer (0 where there is
    /// no coupling).
    pub mean_abs_dw: Vec<f64>,
    pub free_energy: f64,
}

/// Applies `rule` to every coupling of `net` using the current sample's
/// errors and posterior means. Returns the mean absolute change of each
/// coupling matrix, indexed by child layer.
pub fn weight_update(net: &mut HgfNetwork, rule: &WeightRule) -> Vec<f64> {
    let n = net.layers.len();
    let mut mean_dw = alloc::vec![0.0; n];
    if rule.eta == 0.0 {
        return mean_dw;
    }
    let first = net.first_coupled_layer();
    let top = net.input_layer();
    let prior = net.prior_precision;
    let mut act = Vec::new();
    for child in first..top {
        let parent = child + 1;
        act.clear();
        act.extend(net.layers[parent].mu.iter().map(|&v| net.parent_activation(parent, v)));
        let (lower, upper) = net.layers.split_at(parent);
        let c_layer = &lower[child];
        let p_layer = &upper[0];
        let coupling = &mut net.couplings[child - first];
        let mut total = 0.0;
        for i in 0..coupling.rows {
            let base = rule.eta * c_layer.delta[i];
            if base == 0.0 {
                continue;
            }
            let (cp, cph) = (c_layer.pi[i], c_layer.pi_hat[i]);
            let row = &mut coupling.alpha[i * coupling.cols..(i + 1) * coupling.cols];
            match rule.kind {
                WeightRuleKind::Standard | WeightRuleKind::Precision => {
                    let s = base * rule.gain(cp, cph, 0.0, 0.0);
                    for (w, &a) in row.iter_mut().zip(&act) {
                        let d = s * a;
                        *w += d;
                        total += d.abs();
                    }
                }
                WeightRuleKind::Ratio => {
                    for (j, (w, &a)) in row.iter_mut().zip(&act).enumerate() {
                        let gain = rule.gain(cp, cph, p_layer.pi[j], p_layer.pi_hat[j]);
                        let d = base * gain * a;
                        *w += d;
                        total += d.abs();
                    }
                }
            }
            coupling.bias[i] += base * rule.gain(cp, cph, prior, prior);
        }
        mean_dw[child] = total / (coupling.rows * coupling.cols) as f64;
    }
    mean_dw
}

/// One training step on `(x, y)`: clamp, predict top-down, compute errors,
/// revise posteriors bottom-up, update volatility parents, then weights.
pub fn train_step(net: &mut HgfNetwork, x: &[f64], y: &[f64], rule: &WeightRule) -> Result<TrainDiagnostics> {
    net.clamp_input(x)?;
    net.clamp_target(y)?;
    net.predict_sweep()?;
    net.prediction_errors();
    net.posterior_update()?;
    net.volatility_update();
    let free_energy = net.free_energy();
    let mean_abs_dw = weight_update(net, rule);
    Ok(diagnostics(net, mean_abs_dw, free_energy))
}

/// Training step without the per-layer readout.
pub fn train_sample(net: &mut HgfNetwork, x: &[f64], y: &[f64], rule: &WeightRule) -> Result<()> {
    net.clamp_input(x)?;
    net.clamp_target(y)?;
    net.predict_sweep()?;
    net.prediction_errors();
    net.posterior_update()?;
    net.volatility_update();
    weight_update(net, rule);
    Ok(())
}

fn diagnostics(net: &HgfNetwork, mean_abs_dw: Vec<f64>, free_energy: f64) -> TrainDiagnostics {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mut d = TrainDiagnostics {
        mean_abs_dw,
        free_energy,
        ..Default::default()
    };
    for layer in &net.layers {
        d.mean_abs_delta
            .push(layer.delta.iter().map(|x| x.abs()).sum::<f64>() / layer.width() as f64);
        d.mean_pi_hat.push(mean(&layer.pi_hat));
        d.mean_pwpe.push(
            layer
                .mu
                .iter()
                .zip(&layer.mu_hat)
                .zip(&layer.pi_hat)
                .map(|((m, mh), ph)| (m - mh).abs() * ph)
                .sum::<f64>()
                / layer.width() as f64,
        );
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgf::{HgfConfig, OutputKind, PrecisionMode};
    use crate::math::Rng;

    /// 1 -> 1 -> 1 Gaussian chain with hand-set beliefs on the top coupling.
    fn chain(kind: WeightRuleKind) -> (HgfNetwork, WeightRule) {
        let rule = WeightRule::new(kind, 1e-3);
        let cfg = HgfConfig::new(&[1, 1, 1])
            .with_output(OutputKind::Gaussian)
            .with_weight_rule(rule);
        (HgfNetwork::build(&cfg, &mut Rng::new(0)).unwrap(), rule)
    }

    fn set_beliefs(net: &mut HgfNetwork, delta: f64, parent_mu: f64, child_pi: f64) {
        for l in &mut net.layers {
            l.delta = alloc::vec![0.0];
        }
        net.layers[1].mu = alloc::vec![parent_mu];
        net.layers[0].delta = alloc::vec![delta];
        net.layers[0].pi = alloc::vec![child_pi];
    }

    #[test]
    fn standard_rule_arithmetic() {
        let (mut net, rule) = chain(WeightRuleKind::Standard);
        set_beliefs(&mut net, 1.0, 2.0, 1.0);
        let before = net.coupling(0).get(0, 0);
        weight_update(&mut net, &rule);
        assert!((net.coupling(0).get(0, 0) - before - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn precision_rule_arithmetic() {
        let (mut net, rule) = chain(WeightRuleKind::Precision);
        set_beliefs(&mut net, 1.0, 2.0, 3.0);
        let before = net.coupling(0).get(0, 0);
        weight_update(&mut net, &rule);
        assert!((net.coupling(0).get(0, 0) - before - 6e-3).abs() < 1e-15);
    }

    #[test]
    fn ratio_gain_is_half_for_equal_precisions() {
        let rule = WeightRule::new(WeightRuleKind::Ratio, 1.0).with_ratio_precision(RatioPrecision::Predicted);
        assert_eq!(rule.gain(9.0, 3.7, 1.0, 3.7), 0.5);
        let rule = rule.with_ratio_precision(RatioPrecision::Posterior);
        assert_eq!(rule.gain(2.5, 1.0, 2.5, 7.0), 0.5);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let cfg = HgfConfig::new(&[3, 4, 2]);
        let mut net = HgfNetwork::build(&cfg, &mut Rng::new(3)).unwrap();
        let before = net.couplings.clone();
        let rule = WeightRule::new(WeightRuleKind::Precision, 0.0);
        let d = train_step(&mut net, &[0.2, 0.4, 0.9], &[0.0, 1.0], &rule).unwrap();
        assert_eq!(net.couplings, before);
        assert!(d.mean_abs_dw.iter().all(|&w| w == 0.0));
        // beliefs still moved
        assert!(net.layers[1].delta.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn repeated_sample_lowers_free_energy() {
        let cfg = HgfConfig::new(&[4, 6, 3]).with_precision_mode(PrecisionMode::ResetEachSample);
        let mut net = HgfNetwork::build(&cfg, &mut Rng::new(11)).unwrap();
        let rule = WeightRule::new(WeightRuleKind::Standard, 1e-2);
        let x = [0.3, 0.8, 0.1, 0.5];
        let y = [0.0, 1.0, 0.0];
        let mut energies = Vec::new();
        for _ in 0..21 {
            energies.push(train_step(&mut net, &x, &y, &rule).unwrap().free_energy);
        }
        let violations = energies.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(violations <= 1, "{energies:?}");
        assert!(energies[20] < energies[0]);
    }

    #[test]
    fn diagnostics_have_one_entry_per_layer() {
        let cfg = HgfConfig::new(&[3, 5, 4, 2]);
        let mut net = HgfNetwork::build(&cfg, &mut Rng::new(3)).unwrap();
        let d = train_step(&mut net, &[0.1, 0.2, 0.3], &[1.0, 0.0], &WeightRule::default()).unwrap();
        assert_eq!(d.mean_pi_hat.len(), net.layers.len());
        assert_eq!(d.mean_abs_dw.len(), net.layers.len());
        assert_eq!(d.mean_abs_dw[0], 0.0); // binary link has no weights
        assert!(d.mean_abs_dw[1] > 0.0);
    }
}
