//! Numerical self-checks of the update equations and the baselines.

use std::time::Instant;

use dhgf_core::baselines::{ForwardCache, Head, MlpModel, PcnModel};
use dhgf_core::hgf::{HgfConfig, HgfNetwork, OutputKind, PrecisionMode, VolatilityConfig};
use dhgf_core::plasticity::{train_step, weight_update, WeightRule, WeightRuleKind};
use dhgf_core::{ActivationKind, Rng};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let t = Instant::now();
    let (passed, detail) = f();
    Check {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Runs every check.
pub fn run_all() -> Vec<Check> {
    vec![
        timed("one-shot stationarity", || {
            let g = max_stationarity_gradient(20, 0, false);
            (g < 1e-6, format!("max |dF/dmu| {g:.2e} over 20 chains"))
        }),
        timed("stationarity negative control", || {
            let g = max_stationarity_gradient(20, 0, true);
            (g > 1e-3, format!("sign-flipped update leaves |dF/dmu| {g:.2e}"))
        }),
        timed("kalman equivalence", || {
            let e = max_kalman_error(100, 1);
            (e < 1e-12, format!("max relative error {e:.2e} over 100 chains"))
        }),
        timed("mlp gradient check", || {
            let e = max_mlp_gradient_error(50, 2);
            (e < 1e-4, format!("max relative error {e:.2e} over 50 nets"))
        }),
        timed("pcn-bp correspondence", || {
            let c = min_pcn_bp_cosine(20, 3, 0.2, true);
            let he = min_pcn_bp_cosine(20, 3, 1.0, false);
            (
                c > 0.95,
                format!("min cosine {c:.4} over 20 weakly coupled nets ({he:.4} at He scale, one-hot targets)"),
            )
        }),
        timed("precision monotonicity", || {
            let v = precision_violations(1000, 4);
            (v == 0, format!("{v} violations over 1000 samples"))
        }),
        timed("weight-rule algebra", || {
            let v = rule_algebra_mismatches(100, 5);
            (v == 0, format!("{v} mismatches over 100 states"))
        }),
    ]
}

/// Fixed-width table of `checks`.
pub fn table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s += &format!(
            "{:<4} {:<30} {:>8.3} s  {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    s
}

/// Gaussian-output chain input(1) -> hidden(1) -> output(`outs`) with
/// random couplings placing the hidden prediction in the positive branch.
fn random_chain(rng: &mut Rng, outs: usize) -> (HgfNetwork, Vec<f64>, Vec<f64>) {
    let cfg = HgfConfig::new(&[1, 1, outs])
        .with_output(OutputKind::Gaussian)
        .with_precision_mode(PrecisionMode::ResetEachSample)
        .with_omega(-4.0 + 6.0 * rng.uniform())
        .with_prior_precision(0.2 + 4.0 * rng.uniform());
    let mut net = HgfNetwork::build(&cfg, rng).expect("valid chain");
    let hidden = net.coupling_mut(1);
    hidden.alpha[0] = 0.5 + rng.uniform();
    hidden.bias[0] = 0.5 + rng.uniform();
    let out = net.coupling_mut(0);
    for a in out.alpha.iter_mut() {
        *a = rng.normal();
    }
    for b in out.bias.iter_mut() {
        *b = 0.3 * rng.normal();
    }
    let x = vec![0.2 + rng.uniform()];
    let y = (0..outs).map(|_| 0.5 * rng.normal()).collect();
    (net, x, y)
}

/// Largest central-difference `|dF/dmu_hidden|` after one posterior update;
/// `flip` negates the update step as a negative control.
pub fn max_stationarity_gradient(chains: usize, seed: u64, flip: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < chains {
        let outs = 1 + rng.below(3);
        let (mut net, x, y) = random_chain(&mut rng, outs);
        net.clamp_input(&x).unwrap();
        net.clamp_target(&y).unwrap();
        net.predict_sweep().unwrap();
        net.prediction_errors();
        net.posterior_update().unwrap();
        let h = &mut net.layers[1];
        if flip {
            h.mu[0] = 2.0 * h.mu_hat[0] - h.mu[0];
        }
        let mu = h.mu[0];
        // the chain must stay in the linear branch around the posterior
        if mu < 0.05 || h.mu_hat[0] < 0.05 {
            continue;
        }
        let eps = 1e-5;
        net.layers[1].mu[0] = mu + eps;
        let fp = net.energy();
        net.layers[1].mu[0] = mu - eps;
        let fm = net.energy();
        net.layers[1].mu[0] = mu;
        worst = worst.max(((fp - fm) / (2.0 * eps)).abs());
        done += 1;
    }
    worst
}

/// Largest relative error between the closed-form update of a single hidden
/// unit observed through one linear Gaussian child and the conjugate posterior
/// in covariance (Kalman gain) form.
pub fn max_kalman_error(cases: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (mut net, x, y) = random_chain(&mut rng, 1);
        net.clamp_input(&x).unwrap();
        net.clamp_target(&y).unwrap();
        net.predict_sweep().unwrap();
        net.prediction_errors();
        net.posterior_update().unwrap();
        let (m0, p0) = (net.layers[1].mu_hat[0], 1.0 / net.layers[1].pi_hat[0]);
        let r = 1.0 / net.layers[0].pi_hat[0];
        let (a, b) = (net.coupling(0).alpha[0], net.coupling(0).bias[0]);
        let k = p0 * a / (a * a * p0 + r);
        let mean = m0 + k * (y[0] - a * m0 - b);
        let var = (1.0 - k * a) * p0;
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
        worst = worst
            .max(rel(net.layers[1].mu[0], mean))
            .max(rel(1.0 / net.layers[1].pi[0], var));
    }
    worst
}

/// Largest relative error of hand-derived MLP gradients against central
/// differences on width-4 depth-2 networks, per network as
/// `|g - g_fd| / max(|g|, |g_fd|)` over the whole parameter vector.
pub fn max_mlp_gradient_error(nets: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let heads = [Head::Softmax, Head::Sigmoid, Head::SquaredError];
    let mut worst: f64 = 0.0;
    for n in 0..nets {
        let head = heads[n % 3];
        let out = if head == Head::Sigmoid { 1 } else { 3 };
        let m = MlpModel::new(&[4, 4, 4, out], ActivationKind::leaky(), head, 1e-3, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..out).map(|i| (i == n % out) as u8 as f64).collect();
        let mut g = vec![0.0; m.stack.len()];
        m.loss_and_grads(&x, &y, 1.0, &mut g, &mut ForwardCache::default())
            .unwrap();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den_a = 0.0;
        let mut den_b = 0.0;
        for k in 0..m.stack.len() {
            let mut p = m.clone();
            p.stack.params[k] += h;
            let mut q = m.clone();
            q.stack.params[k] -= h;
            let fd = (p.loss(&x, &y).unwrap() - q.loss(&x, &y).unwrap()) / (2.0 * h);
            num += (g[k] - fd) * (g[k] - fd);
            den_a += g[k] * g[k];
            den_b += fd * fd;
        }
        worst = worst.max(num.sqrt() / den_a.sqrt().max(den_b.sqrt()).max(1e-12));
    }
    worst
}

/// Smallest cosine similarity between relaxed PCN weight gradients and
/// backpropagation gradients of the squared error on the same parameters,
/// over toy `4-8-8-3` networks with He weights scaled by `weight_scale`.
/// With `near_targets` the target is the feedforward output plus noise of
/// standard deviation 0.1, otherwise a one-hot vector.
///
/// The correspondence is a weak-coupling, small-error result: at equilibrium
/// the output error is `(I + J J^T)^-1` times the feedforward error, `J` being
/// the output Jacobian of the last hidden layer, so it only approaches the
/// backpropagated error when `J J^T` is small.
pub fn min_pcn_bp_cosine(nets: usize, seed: u64, weight_scale: f64, near_targets: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 1.0;
    for _ in 0..nets {
        let sizes = [4, 8, 8, 3];
        let g = ActivationKind::leaky();
        let mut pcn = PcnModel::new(&sizes, g, 1e-3, &mut rng).unwrap();
        pcn.stack.params.iter_mut().for_each(|p| *p *= weight_scale);
        let mut mlp = MlpModel::new(&sizes, g, Head::SquaredError, 1e-3, &mut Rng::new(0)).unwrap();
        mlp.stack.params.clone_from(&pcn.stack.params);
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let y: Vec<f64> = if near_targets {
            let z = mlp.logits(&x).unwrap();
            z.iter().map(|v| v + 0.1 * rng.normal()).collect()
        } else {
            let k = rng.below(3);
            (0..3).map(|i| (i == k) as u8 as f64).collect()
        };
        let gp = pcn.weight_gradients(&x, &y, PCN_STEPS).unwrap();
        let mut gb = vec![0.0; mlp.stack.len()];
        mlp.loss_and_grads(&x, &y, 1.0, &mut gb, &mut ForwardCache::default())
            .unwrap();
        worst = worst.min(cosine(&gp, &gb));
    }
    worst
}

/// Relaxation steps treated as convergence for the toy networks.
pub const PCN_STEPS: usize = 2000;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Training steps on random data, half with volatility parents, counting
/// hidden units where `pi_hat >= pi_prev` or `pi < pi_hat`.
pub fn precision_violations(samples: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let mut violations = 0;
    for vol in [false, true] {
        let cfg = HgfConfig::new(&[5, 8, 8, 3])
            .with_volatility(vol.then_some(VolatilityConfig::default()))
            .with_weight_rule(WeightRule::new(WeightRuleKind::Precision, 1e-2));
        let mut net = HgfNetwork::build(&cfg, &mut rng).unwrap();
        let rule = cfg.weight_rule;
        for _ in 0..samples / 2 {
            let prev: Vec<Vec<f64>> = net.layers.iter().map(|l| l.pi.clone()).collect();
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..3).map(|_| (rng.uniform() < 0.5) as u8 as f64).collect();
            train_step(&mut net, &x, &y, &rule).unwrap();
            for l in net.hidden_layers() {
                let layer = &net.layers[l];
                for j in 0..layer.width() {
                    if !(layer.pi_hat[j] < prev[l][j]) || !(layer.pi[j] >= layer.pi_hat[j]) {
                        violations += 1;
                    }
                }
            }
        }
    }
    violations
}

/// With every precision set to 1, the precision rule must equal the standard
/// rule and the ratio rule half of it, bit for bit.
pub fn rule_algebra_mismatches(states: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let mut bad = 0;
    for _ in 0..states {
        let cfg = HgfConfig::new(&[3, 4, 2]).with_output(OutputKind::Gaussian);
        let mut net = HgfNetwork::build(&cfg, &mut rng).unwrap();
        for layer in &mut net.layers {
            for j in 0..layer.width() {
                layer.mu[j] = rng.normal();
                layer.delta[j] = rng.normal();
                layer.pi[j] = 1.0;
                layer.pi_hat[j] = 1.0;
            }
        }
        let eta = 10f64.powf(-1.0 - 3.0 * rng.uniform());
        // increments land on zeroed weights, so the weights are the increments
        let raw = |kind| {
            let mut n = net.clone();
            for c in &mut n.couplings {
                c.alpha.iter_mut().for_each(|a| *a = 0.0);
                c.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            weight_update(&mut n, &WeightRule::new(kind, eta));
            n.couplings
                .iter()
                .flat_map(|c| c.alpha.iter().chain(&c.bias).copied())
                .collect::<Vec<f64>>()
        };
        let (rs, rp, rr) = (
            raw(WeightRuleKind::Standard),
            raw(WeightRuleKind::Precision),
            raw(WeightRuleKind::Ratio),
        );
        bad += rs.iter().zip(&rp).filter(|(a, b)| a != b).count();
        bad += rs.iter().zip(&rr).filter(|(a, b)| 0.5 * **a != **b).count();
    }
    bad
}
