//! In-memory datasets, the synthetic spiral task, subsetting and the
//! concept-drift label schedule.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{sqrt, Rng};

/// Row-major feature matrix with integer labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `n * dim` features.
    pub features: Vec<f32>,
    pub labels: Vec<u8>,
    pub dim: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f32>,
        labels: Vec<u8>,
        dim: usize,
        classes: usize,
    ) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(invalid("feature matrix does not match label count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(invalid(alloc::format!("label {bad} outside 0..{classes}")));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features_of(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies sample `i` into `out` as `f64`.
    pub fn copy_features(&self, i: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.features_of(i).iter().map(|&v| v as f64));
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New dataset made of the listed rows, in order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.features_of(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            features,
            labels,
            dim: self.dim,
            classes: self.classes,
        }
    }
}

/// `C`-dimensional indicator vector of `label`.
pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

/// Target vector for an output layer of `width` units: one-hot when
/// `width == classes`, the label itself for a single binary output.
pub fn target_vector(label: usize, classes: usize, width: usize) -> Result<Vec<f64>> {
    if width == classes {
        Ok(one_hot(label, classes))
    } else if width == 1 && classes == 2 {
        Ok(vec![label as f64])
    } else {
        Err(invalid(alloc::format!(
            "output width {width} cannot encode {classes} classes"
        )))
    }
}

/// Parameters of the multi-arm spiral generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralConfig {
    pub n: usize,
    pub arms: usize,
    /// Angle swept by each arm from its centre to its tip.
    pub theta_max: f64,
    pub noise_sd: f64,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            n: 1000,
            arms: 4,
            theta_max: core::f64::consts::PI,
            noise_sd: 0.05,
        }
    }
}

/// Raw (unstandardised) spiral point for arm `k` at position `t` in `[0, 1]`.
pub fn spiral_point(t: f64, arm: usize, arms: usize, theta_max: f64) -> (f64, f64) {
    let theta = t * theta_max + arm as f64 * 2.0 * core::f64::consts::PI / arms as f64;
    (t * libm::cos(theta), t * libm::sin(theta))
}

/// Interleaved spiral arms labelled by arm parity, features standardised to
/// zero mean and unit variance per coordinate.
pub fn spiral_dataset(cfg: &SpiralConfig, seed: u64) -> Result<Dataset> {
    if cfg.arms < 2 || cfg.n < cfg.arms {
        return Err(invalid("spiral needs at least two arms and n >= arms"));
    }
    let mut rng = Rng::stream(seed, &[0x5b12a1]);
    let mut xy = Vec::with_capacity(cfg.n * 2);
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let arm = i % cfg.arms;
        let t = rng.uniform();
        let (x, y) = spiral_point(t, arm, cfg.arms, cfg.theta_max);
        xy.push(x + cfg.noise_sd * rng.normal());
        xy.push(y + cfg.noise_sd * rng.normal());
        labels.push((arm % 2) as u8);
    }
    for c in 0..2 {
        let n = cfg.n as f64;
        let mean = (0..cfg.n).map(|i| xy[2 * i + c]).sum::<f64>() / n;
        let var = (0..cfg.n)
            .map(|i| {
                let d = xy[2 * i + c] - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let sd = sqrt(var).max(1e-12);
        for i in 0..cfg.n {
            xy[2 * i + c] = (xy[2 * i + c] - mean) / sd;
        }
    }
    Dataset::new("spiral", xy.into_iter().map(|v| v as f32).collect(), labels, 2, 2)
}

/// Class-stratified sample of `n` rows without replacement.
///
/// Per-class quotas follow the class proportions of `ds` (largest remainder
/// rounding), so every class is within one sample of its exact share.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    Ok(ds.select(&stratified_indices(ds, n, seed)?))
}

/// Row indices of the sample drawn by [`subset`], in random order.
pub fn stratified_indices(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > ds.len() {
        return Err(invalid(alloc::format!(
            "subset of {n} requested from {} samples",
            ds.len()
        )));
    }
    let counts = ds.class_counts();
    let total = ds.len() as f64;
    let mut quota: Vec<usize> = counts.iter().map(|&c| (n as f64 * c as f64 / total) as usize).collect();
    let mut rem: Vec<(f64, usize)> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (n as f64 * c as f64 / total - quota[k] as f64, k))
        .collect();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let missing = n - quota.iter().sum::<usize>();
    for &(_, k) in rem.iter().take(missing) {
        quota[k] += 1;
    }

    let mut rng = Rng::stream(seed, &[0x50b5e7]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut idx = Vec::with_capacity(n);
    for (k, rows) in by_class.iter_mut().enumerate() {
        rng.shuffle(rows);
        idx.extend_from_slice(&rows[..quota[k]]);
    }
    rng.shuffle(&mut idx);
    Ok(idx)
}

/// Random split into `(round(fraction * n), rest)`.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid("split fraction must lie in [0, 1]"));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    Rng::stream(seed, &[0x5911]).shuffle(&mut idx);
    let k = libm::round(fraction * ds.len() as f64) as usize;
    Ok((ds.select(&idx[..k]), ds.select(&idx[k..])))
}

/// Piecewise-constant relabelling of a block of classes.
///
/// Iterations are grouped into blocks of `period`; block `p` applies its own
/// random permutation of `permuted` (drawn from `seed` and `p`) and leaves
/// every other class unchanged. Block 0 is already permuted, so `t` iterations
/// contain `ceil(t / period)` drift events.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    pub period: usize,
    pub permuted: Vec<u8>,
    pub classes: usize,
    pub seed: u64,
}

impl DriftSchedule {
    pub fn new(period: usize, permuted: Vec<u8>, classes: usize, seed: u64) -> Result<Self> {
        if period == 0 {
            return Err(invalid("drift period must be positive"));
        }
        if permuted.iter().any(|&c| c as usize >= classes) {
            return Err(invalid("permuted class outside label range"));
        }
        Ok(DriftSchedule {
            period,
            permuted,
            classes,
            seed,
        })
    }

    /// Classes 5-9 of a 10-class problem, redrawn every 64 iterations.
    pub fn fashion(seed: u64) -> Self {
        DriftSchedule {
            period: 64,
            permuted: (5..10).collect(),
            classes: 10,
            seed,
        }
    }

    pub fn block(&self, iteration: usize) -> usize {
        iteration / self.period
    }

    /// Number of drift events in `iterations` iterations.
    pub fn events(&self, iterations: usize) -> usize {
        iterations.div_ceil(self.period)
    }

    /// Full label map of block `block`: `map[original] = shown`.
    pub fn mapping_for_block(&self, block: usize) -> Vec<u8> {
        let mut shuffled = self.permuted.clone();
        Rng::stream(self.seed, &[0xd71f7, block as u64]).shuffle(&mut shuffled);
        let mut map: Vec<u8> = (0..self.classes as u8).collect();
        for (&from, &to) in self.permuted.iter().zip(&shuffled) {
            map[from as usize] = to;
        }
        map
    }

    pub fn mapping(&self, iteration: usize) -> Vec<u8> {
        self.mapping_for_block(self.block(iteration))
    }

    pub fn inverse_mapping(&self, iteration: usize) -> Vec<u8> {
        let map = self.mapping(iteration);
        let mut inv = vec![0u8; map.len()];
        for (from, &to) in map.iter().enumerate() {
            inv[to as usize] = from as u8;
        }
        inv
    }

    pub fn apply(&self, labels: &[u8], iteration: usize) -> Vec<u8> {
        let map = self.mapping(iteration);
        labels.iter().map(|&l| map[l as usize]).collect()
    }
}

/// Relabels `labels` with the permutation in force at `iteration`.
pub fn drift_permute(labels: &[u8], schedule: &DriftSchedule, iteration: usize) -> Vec<u8> {
    schedule.apply(labels, iteration)
}
