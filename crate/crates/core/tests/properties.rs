use dhgf_core::baselines::{ForwardCache, Head, MlpModel};
use dhgf_core::data::{stratified_indices, Dataset, DriftSchedule};
use dhgf_core::hgf::{HgfConfig, HgfNetwork, OutputKind, PrecisionMode, VolatilityConfig};
use dhgf_core::plasticity::{train_step, weight_update, WeightRule, WeightRuleKind};
use dhgf_core::{ActivationKind, Rng};
use proptest::prelude::*;

fn net(widths: &[usize], vol: bool, reset: bool, seed: u64) -> HgfNetwork {
    let cfg = HgfConfig::new(widths)
        .with_volatility(vol.then_some(VolatilityConfig::default()))
        .with_precision_mode(if reset {
            PrecisionMode::ResetEachSample
        } else {
            PrecisionMode::TemporalCarryover
        })
        .with_weight_rule(WeightRule::new(WeightRuleKind::Precision, 5e-3));
    HgfNetwork::build(&cfg, &mut Rng::new(seed)).unwrap()
}

fn inputs(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Predicted precision never exceeds the previous posterior, and the
    /// posterior never falls below the prediction.
    #[test]
    fn precision_ordering(seed in 0u64..1000, vol: bool, depth in 1usize..5, width in 1usize..9, scale in 0.1f64..5.0) {
        let mut widths = vec![3];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(2);
        let mut n = net(&widths, vol, false, seed);
        let rule = n.weight_rule;
        let mut rng = Rng::new(seed + 1);
        for _ in 0..40 {
            let prev: Vec<Vec<f64>> = n.layers.iter().map(|l| l.pi.clone()).collect();
            let x = inputs(&mut rng, 3, scale);
            let y = [(rng.uniform() < 0.5) as u8 as f64, (rng.uniform() < 0.5) as u8 as f64];
            train_step(&mut n, &x, &y, &rule).unwrap();
            for l in n.hidden_layers() {
                for j in 0..n.layers[l].width() {
                    let layer = &n.layers[l];
                    prop_assert!(layer.pi_hat[j] < prev[l][j]);
                    prop_assert!(layer.pi[j] >= layer.pi_hat[j]);
                    prop_assert!(layer.mu[j].is_finite());
                }
            }
        }
    }

    /// Reset mode predicts the same precision for every sample.
    #[test]
    fn reset_mode_forgets(seed in 0u64..1000) {
        let mut n = net(&[3, 5, 2], false, true, seed);
        let rule = n.weight_rule;
        let mut rng = Rng::new(seed);
        let mut first = None;
        for _ in 0..10 {
            let x = inputs(&mut rng, 3, 1.0);
            train_step(&mut n, &x, &[1.0, 0.0], &rule).unwrap();
            let ph = n.layers[2].pi_hat.clone();
            match &first {
                None => first = Some(ph),
                Some(f) => prop_assert_eq!(f, &ph),
            }
        }
    }

    /// The single-unit closed-form update is the conjugate Gaussian posterior.
    #[test]
    fn one_unit_update_is_conjugate(
        prior in 0.1f64..10.0, a in 0.2f64..3.0, b in -1.0f64..1.0, w_in in 0.5f64..2.0,
        x in 0.1f64..2.0, y in -3.0f64..3.0, omega in -8.0f64..1.0,
    ) {
        let cfg = HgfConfig::new(&[1, 1, 1])
            .with_output(OutputKind::Gaussian)
            .with_precision_mode(PrecisionMode::ResetEachSample)
            .with_prior_precision(prior)
            .with_omega(omega);
        let mut n = HgfNetwork::build(&cfg, &mut Rng::new(0)).unwrap();
        n.coupling_mut(1).alpha[0] = w_in;
        n.coupling_mut(1).bias[0] = 0.0;
        n.coupling_mut(0).alpha[0] = a;
        n.coupling_mut(0).bias[0] = b;
        n.clamp_input(&[x]).unwrap();
        n.clamp_target(&[y]).unwrap();
        n.predict_sweep().unwrap();
        n.prediction_errors();
        n.posterior_update().unwrap();
        let (m, p) = (n.layers[1].mu_hat[0], n.layers[1].pi_hat[0]);
        let q = n.layers[0].pi_hat[0];
        // information form of the posterior
        let pi = p + a * a * q;
        let mu = (p * m + a * q * (y - b)) / pi;
        prop_assert!((n.layers[1].pi[0] - pi).abs() <= 1e-12 * pi);
        prop_assert!((n.layers[1].mu[0] - mu).abs() <= 1e-10 * (1.0 + mu.abs()));
    }

    /// With unit precisions the ratio rule moves every weight by exactly half
    /// the standard step, and the precision rule by exactly the standard step.
    #[test]
    fn rules_agree_at_unit_precision(seed in 0u64..1000, eta in 1e-5f64..1e-1) {
        let mut n = net(&[3, 4, 2], false, true, seed);
        let mut rng = Rng::new(seed);
        for layer in &mut n.layers {
            for j in 0..layer.width() {
                layer.mu[j] = rng.normal();
                layer.delta[j] = rng.normal();
                layer.pi[j] = 1.0;
                layer.pi_hat[j] = 1.0;
            }
        }
        let step = |kind| {
            let mut m = n.clone();
            for c in &mut m.couplings {
                c.alpha.iter_mut().for_each(|a| *a = 0.0);
                c.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            weight_update(&mut m, &WeightRule::new(kind, eta));
            m.couplings.iter().flat_map(|c| c.alpha.iter().chain(&c.bias).copied()).collect::<Vec<_>>()
        };
        let (s, p, r) = (step(WeightRuleKind::Standard), step(WeightRuleKind::Precision), step(WeightRuleKind::Ratio));
        for k in 0..s.len() {
            prop_assert_eq!(s[k], p[k]);
            prop_assert_eq!(0.5 * s[k], r[k]);
        }
    }

    /// Inference never touches beliefs and matches the prediction sweep.
    #[test]
    fn infer_is_pure(seed in 0u64..1000, vol: bool) {
        let mut n = net(&[4, 6, 6, 3], vol, false, seed);
        let rule = n.weight_rule;
        let mut rng = Rng::new(seed);
        for _ in 0..5 {
            let x = inputs(&mut rng, 4, 1.0);
            train_step(&mut n, &x, &[0.0, 1.0, 0.0], &rule).unwrap();
        }
        let before = n.clone();
        let x = inputs(&mut rng, 4, 1.0);
        let out = n.infer(&x).unwrap();
        prop_assert_eq!(&before, &n);
        n.clamp_input(&x).unwrap();
        n.predict_sweep().unwrap();
        for (i, o) in out.iter().enumerate() {
            let z = n.layers[1].mu_hat[i];
            prop_assert!((o - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
        }
    }

    /// Training is a pure function of the seed and the sample stream.
    #[test]
    fn training_is_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut n = net(&[3, 5, 5, 2], true, false, seed);
            let rule = n.weight_rule;
            let mut rng = Rng::new(seed);
            for _ in 0..20 {
                let x = inputs(&mut rng, 3, 1.0);
                train_step(&mut n, &x, &[1.0, 0.0], &rule).unwrap();
            }
            n
        };
        prop_assert_eq!(run(), run());
    }

    /// MLP class predictions follow the arg-max of its logits.
    #[test]
    fn mlp_prediction_is_argmax(seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let m = MlpModel::new(&[4, 7, 5], ActivationKind::leaky(), Head::Softmax, 1e-3, &mut rng).unwrap();
        let x = inputs(&mut rng, 4, 1.0);
        let z = m.logits(&x).unwrap();
        let best = (0..5).fold(0, |b, i| if z[i] > z[b] { i } else { b });
        prop_assert_eq!(m.predict_class(&x, &mut ForwardCache::default()).unwrap(), best);
    }

    /// Stratified subsets are distinct rows with every class within one of
    /// its proportional quota.
    #[test]
    fn stratified_quotas(seed in 0u64..1000, n in 1usize..200, classes in 2usize..6) {
        let labels: Vec<u8> = (0..300).map(|i| ((i * 7 + i / 5) % classes) as u8).collect();
        let ds = Dataset::new("t", vec![0.0; 300], labels.clone(), 1, classes).unwrap();
        let idx = stratified_indices(&ds, n, seed).unwrap();
        prop_assert_eq!(idx.len(), n);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
        let counts = ds.class_counts();
        for c in 0..classes {
            let got = idx.iter().filter(|&&i| labels[i] as usize == c).count() as f64;
            let quota = n as f64 * counts[c] as f64 / 300.0;
            prop_assert!((got - quota).abs() < 1.0 + 1e-9, "class {} got {} quota {}", c, got, quota);
        }
    }

    /// Drift mappings only move the permuted classes and are bijections.
    #[test]
    fn drift_mapping_fixes_other_classes(seed in 0u64..1000, t in 0usize..5000) {
        let s = DriftSchedule::fashion(seed);
        let map = s.mapping(t);
        let mut seen = [false; 10];
        for (c, &m) in map.iter().enumerate() {
            seen[m as usize] = true;
            if c < 5 {
                prop_assert_eq!(m as usize, c);
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert_eq!(s.mapping(t), s.mapping_for_block(t / 64));
    }
}
