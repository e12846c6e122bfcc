//! Benchmark protocols.
//!
//! Every protocol expands its configuration into independent cells
//! (method, depth, width, learning rate, seed), runs them on the rayon pool
//! and returns the rows in cell order, so output is reproducible regardless
//! of scheduling. Wall-clock columns are the only non-deterministic values.

use std::path::Path;
use std::time::Instant;

use dhgf_core::data::{self, Dataset, DriftSchedule};
use dhgf_core::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Protocol};
use crate::error::{AppError, AppResult};
use crate::metrics::{lr_scores, mean_sd, oracle_lr_select, Group, MetricsRow, RunKey};
use crate::model::{HgfOptions, Method, Model, ModelSpec};
use crate::snapshot;

const ACCURACY: &str = "test_accuracy";

/// FashionMNIST train and test sets.
#[derive(Debug, Clone)]
pub struct Fashion {
    pub train: Dataset,
    pub test: Dataset,
}

/// One (method, depth, width, lr, seed) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub depth: usize,
    pub width: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Cell {
    pub fn key(&self, protocol: Protocol) -> RunKey {
        RunKey {
            method: self.method.name().into(),
            protocol: protocol.name().into(),
            depth: self.depth,
            width: self.width,
            lr: self.lr,
            seed: self.seed,
        }
    }

    pub fn spec(&self, input: usize, output: usize, hgf: HgfOptions) -> ModelSpec {
        ModelSpec {
            method: self.method,
            input,
            depth: self.depth,
            width: self.width,
            output,
            lr: self.lr,
            hgf,
        }
    }

    /// Initial parameters depend on the seed and architecture only, so every
    /// learning rate of a sweep starts from the same network.
    pub fn init_rng(&self) -> Rng {
        Rng::stream(
            self.seed,
            &[1, self.method as u64, self.depth as u64, self.width as u64],
        )
    }
}

/// Sample order and data draws depend on the seed and protocol only, so all
/// methods see the same stream.
pub fn data_rng(seed: u64, protocol: Protocol) -> Rng {
    Rng::stream(seed, &[2, protocol as u64])
}

/// Seed of the per-iteration test subset.
pub fn eval_seed(seed: u64, iteration: usize) -> u64 {
    Rng::stream(seed, &[3, iteration as u64]).next_seed()
}

trait NextSeed {
    fn next_seed(&mut self) -> u64;
}

impl NextSeed for Rng {
    fn next_seed(&mut self) -> u64 {
        rand::RngCore::next_u64(self)
    }
}

/// Expands the method/depth/width/lr/seed grid.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        for &depth in &cfg.depths {
            for &width in &cfg.widths {
                for &lr in cfg.lrs(method) {
                    for &seed in &cfg.seeds {
                        out.push(Cell {
                            method,
                            depth,
                            width,
                            lr,
                            seed,
                        });
                    }
                }
            }
        }
    }
    out
}

fn run_cells<F>(cells: &[Cell], f: F) -> AppResult<Vec<MetricsRow>>
where
    F: Fn(&Cell) -> AppResult<Vec<MetricsRow>> + Sync + Send,
{
    let per_cell: AppResult<Vec<Vec<MetricsRow>>> = cells.par_iter().map(f).collect();
    Ok(per_cell?.into_iter().flatten().collect())
}

fn batch_for(method: Method, batch: usize) -> usize {
    if method == Method::Hgf {
        1
    } else {
        batch
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn test_rows(test: &Dataset, size: Option<usize>, seed: u64) -> AppResult<Vec<usize>> {
    Ok(match size {
        Some(n) => data::stratified_indices(test, n, seed)?,
        None => (0..test.len()).collect(),
    })
}

/// Full-data supervised training: per-epoch test accuracy.
pub fn run_direct(cfg: &ExperimentConfig, data: &Fashion) -> AppResult<Vec<MetricsRow>> {
    let dc = &cfg.direct;
    run_cells(&cells(cfg), |cell| {
        let key = cell.key(Protocol::Direct);
        let train = match dc.train_size {
            Some(n) => data::subset(&data.train, n, cell.seed)?,
            None => data.train.clone(),
        };
        let test = test_rows(&data.test, dc.test_size, cell.seed)?;
        let mut model = Model::build(&cell.spec(train.dim, train.classes, cfg.hgf), &mut cell.init_rng())?;
        let mut rng = data_rng(cell.seed, Protocol::Direct);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let batch = batch_for(cell.method, cfg.batch_size);
        let mut rows = Vec::with_capacity(dc.epochs);
        let mut train_ms = 0.0;
        for epoch in 1..=dc.epochs {
            rng.shuffle(&mut order);
            let t = Instant::now();
            model.train_epoch(&train, &order, batch)?;
            train_ms += ms(t);
            let acc = model.accuracy_on(&data.test, &test, None)?;
            rows.push(key.row(epoch as u64, ACCURACY, acc, train_ms));
        }
        Ok(rows)
    })
}

/// Strictly online training (batch size 1 for every method): test accuracy
/// after each iteration of freshly drawn samples.
pub fn run_online(cfg: &ExperimentConfig, data: &Fashion) -> AppResult<Vec<MetricsRow>> {
    let oc = &cfg.online;
    run_cells(&cells(cfg), |cell| {
        let key = cell.key(Protocol::Online);
        let train = &data.train;
        let mut model = Model::build(&cell.spec(train.dim, train.classes, cfg.hgf), &mut cell.init_rng())?;
        let mut rng = data_rng(cell.seed, Protocol::Online);
        let mut pool: Vec<usize> = (0..train.len()).collect();
        let mut rows = Vec::with_capacity(oc.iterations);
        let mut train_ms = 0.0;
        for it in 0..oc.iterations {
            let draw = draw_without_replacement(&mut pool, oc.samples_per_iteration, &mut rng);
            let t = Instant::now();
            for &r in &draw {
                model.train_rows(train, &[r], None)?;
            }
            train_ms += ms(t);
            let test = data::stratified_indices(&data.test, oc.test_size, eval_seed(cell.seed, it))?;
            let acc = model.accuracy_on(&data.test, &test, None)?;
            rows.push(key.row(it as u64 + 1, ACCURACY, acc, train_ms));
        }
        Ok(rows)
    })
}

/// `n` distinct entries of `pool`, uniformly at random (partial Fisher-Yates).
pub fn draw_without_replacement(pool: &mut [usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    let n = n.min(pool.len());
    for i in 0..n {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    pool[..n].to_vec()
}

/// Training on stratified subsets of several sizes; the final test accuracy
/// is logged with `step` = subset size.
pub fn run_data_efficiency(cfg: &ExperimentConfig, data: &Fashion) -> AppResult<Vec<MetricsRow>> {
    let de = &cfg.data_efficiency;
    let base = cells(cfg);
    let mut jobs = Vec::new();
    for cell in &base {
        for &n in &de.sizes {
            jobs.push((cell.clone(), n));
        }
    }
    let per_job: AppResult<Vec<Vec<MetricsRow>>> = jobs
        .par_iter()
        .map(|(cell, n)| {
            let key = cell.key(Protocol::DataEfficiency);
            let train = data::subset(&data.train, *n, cell.seed)?;
            let test = test_rows(&data.test, de.test_size, cell.seed)?;
            let mut model = Model::build(&cell.spec(train.dim, train.classes, cfg.hgf), &mut cell.init_rng())?;
            let mut rng = data_rng(cell.seed, Protocol::DataEfficiency);
            let mut order: Vec<usize> = (0..train.len()).collect();
            let batch = batch_for(cell.method, cfg.batch_size);
            let t = Instant::now();
            for _ in 0..de.epochs {
                rng.shuffle(&mut order);
                model.train_epoch(&train, &order, batch)?;
            }
            let train_ms = ms(t);
            let acc = model.accuracy_on(&data.test, &test, None)?;
            Ok(vec![key.row(*n as u64, ACCURACY, acc, train_ms)])
        })
        .collect();
    Ok(per_job?.into_iter().flatten().collect())
}

/// The drift schedule used for `seed`.
pub fn drift_schedule(cfg: &ExperimentConfig, seed: u64) -> AppResult<DriftSchedule> {
    let d = &cfg.drift;
    Ok(DriftSchedule::new(
        d.period,
        d.permuted_classes.clone(),
        10,
        Rng::stream(seed, &[4]).next_seed(),
    )?)
}

fn pretrain_path(dir: &Path, cell: &Cell) -> std::path::PathBuf {
    dir.join(format!(
        "pretrain-{}-d{}-w{}-lr{:e}-s{}.dhgf",
        cell.method, cell.depth, cell.width, cell.lr, cell.seed
    ))
}

/// Online pretraining on a stratified subset, then a drift phase in which the
/// labels of the permuted classes are reshuffled every `period` iterations.
///
/// Emits per-iteration test accuracy (`step` = drift iteration), the
/// drift-aligned mean recovery curve (`recovery_error`, `step` = offset
/// within the event), the mean error over the last `tail` iterations of each
/// event (`post_drift_error`) and the number of events (`drift_events`). The
/// first block is already permuted, so `ceil(iterations / period)` events
/// occur. With `checkpoints`, pretrained models are saved there and reused by
/// later invocations.
pub fn run_concept_drift(
    cfg: &ExperimentConfig,
    data: &Fashion,
    checkpoints: Option<&Path>,
) -> AppResult<Vec<MetricsRow>> {
    let d = &cfg.drift;
    run_cells(&cells(cfg), |cell| {
        let key = cell.key(Protocol::Drift);
        let mut rows = Vec::new();
        let cached = checkpoints.map(|dir| pretrain_path(dir, cell)).filter(|p| p.exists());
        let mut model = match cached {
            Some(path) => snapshot::load_model(&path)?.1,
            None => {
                let spec = cell.spec(data.train.dim, data.train.classes, cfg.hgf);
                let mut model = Model::build(&spec, &mut cell.init_rng())?;
                let sub = data::subset(&data.train, d.pretrain_samples, cell.seed)?;
                let mut rng = data_rng(cell.seed, Protocol::Drift);
                let mut order: Vec<usize> = (0..sub.len()).collect();
                let t = Instant::now();
                for _ in 0..d.pretrain_epochs {
                    rng.shuffle(&mut order);
                    model.train_epoch(&sub, &order, 1)?;
                }
                let pre_ms = ms(t);
                if let Some(dir) = checkpoints {
                    std::fs::create_dir_all(dir)?;
                    snapshot::save_model(&pretrain_path(dir, cell), &spec, &model)?;
                }
                let test =
                    data::stratified_indices(&data.test, d.test_per_iteration, eval_seed(cell.seed, usize::MAX))?;
                let acc = model.accuracy_on(&data.test, &test, None)?;
                rows.push(key.row(0, "pretrain_accuracy", acc, pre_ms));
                model
            }
        };

        let schedule = drift_schedule(cfg, cell.seed)?;
        let mut rng = Rng::stream(cell.seed, &[5]);
        let mut pool: Vec<usize> = (0..data.train.len()).collect();
        let mut errors = Vec::with_capacity(d.iterations);
        let mut train_ms = 0.0;
        for it in 0..d.iterations {
            let map = schedule.mapping(it);
            let draw = draw_without_replacement(&mut pool, d.train_per_iteration, &mut rng);
            let labels: Vec<u8> = draw.iter().map(|&r| map[data.train.labels[r] as usize]).collect();
            let t = Instant::now();
            for (k, &r) in draw.iter().enumerate() {
                model.train_rows(&data.train, &[r], Some(&labels[k..k + 1]))?;
            }
            train_ms += ms(t);
            let test = data::stratified_indices(&data.test, d.test_per_iteration, eval_seed(cell.seed, it))?;
            let test_labels: Vec<u8> = test.iter().map(|&r| map[data.test.labels[r] as usize]).collect();
            let acc = model.accuracy_on(&data.test, &test, Some(&test_labels))?;
            errors.push(1.0 - acc);
            rows.push(key.row(it as u64, ACCURACY, acc, train_ms));
        }

        let (curve, post) = recovery(&errors, d.period, d.tail);
        for (k, v) in curve.iter().enumerate() {
            rows.push(key.row(k as u64, "recovery_error", *v, train_ms));
        }
        rows.push(key.row(d.iterations as u64, "post_drift_error", post, train_ms));
        rows.push(key.row(
            d.iterations as u64,
            "drift_events",
            schedule.events(d.iterations) as f64,
            train_ms,
        ));
        Ok(rows)
    })
}

/// Drift-aligned mean error curve over complete events, and the mean error
/// of the last `tail` iterations of each complete event.
pub fn recovery(errors: &[f64], period: usize, tail: usize) -> (Vec<f64>, f64) {
    let events: Vec<&[f64]> = errors.chunks_exact(period).collect();
    if events.is_empty() {
        return (Vec::new(), f64::NAN);
    }
    let curve = (0..period)
        .map(|k| events.iter().map(|e| e[k]).sum::<f64>() / events.len() as f64)
        .collect();
    let post = events
        .iter()
        .map(|e| e[period - tail..].iter().sum::<f64>() / tail as f64)
        .sum::<f64>()
        / events.len() as f64;
    (curve, post)
}

/// Architectures compared by the precision experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionArch {
    HgfVolatility,
    HgfFixed,
    Mlp,
}

impl PrecisionArch {
    pub const ALL: [PrecisionArch; 3] = [
        PrecisionArch::HgfVolatility,
        PrecisionArch::HgfFixed,
        PrecisionArch::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecisionArch::HgfVolatility => "hgf-volatility",
            PrecisionArch::HgfFixed => "hgf-fixed",
            PrecisionArch::Mlp => "mlp",
        }
    }

    /// HGF options for this architecture on top of `base`.
    pub fn hgf_options(self, base: HgfOptions) -> HgfOptions {
        HgfOptions {
            volatility: self == PrecisionArch::HgfVolatility,
            reset_precision: self == PrecisionArch::HgfFixed,
            ..base
        }
    }
}

/// Metric name of a per-layer diagnostic; `layer` counts from the output.
pub fn layer_metric(name: &str, layer: usize) -> String {
    format!("{name}[{layer}]")
}

/// Spiral task at several depths: test accuracy per epoch for every
/// architecture and, for the HGF networks, per-layer epoch means of the
/// predicted precision, the precision-weighted prediction error and the
/// absolute weight change.
pub fn run_precision_diag(cfg: &ExperimentConfig) -> AppResult<Vec<MetricsRow>> {
    let pc = &cfg.precision;
    let mut jobs = Vec::new();
    for &depth in &pc.depths {
        for arch in PrecisionArch::ALL {
            for &seed in &pc.seeds {
                jobs.push((depth, arch, seed));
            }
        }
    }
    let per_job: AppResult<Vec<Vec<MetricsRow>>> = jobs
        .par_iter()
        .map(|&(depth, arch, seed)| precision_run(cfg, depth, arch, seed))
        .collect();
    Ok(per_job?.into_iter().flatten().collect())
}

/// One run of the precision experiment.
pub fn precision_run(
    cfg: &ExperimentConfig,
    depth: usize,
    arch: PrecisionArch,
    seed: u64,
) -> AppResult<Vec<MetricsRow>> {
    let pc = &cfg.precision;
    let ds = data::spiral_dataset(&pc.spiral(), seed)?;
    let (train, test) = data::split(&ds, pc.train_fraction, seed)?;
    let (method, lr) = match arch {
        PrecisionArch::Mlp => (Method::Mlp, pc.mlp_lr),
        _ => (Method::Hgf, pc.hgf_lr),
    };
    let cell = Cell {
        method,
        depth,
        width: pc.width,
        lr,
        seed,
    };
    let mut key = cell.key(Protocol::Precision);
    key.method = arch.name().into();
    let spec = cell.spec(2, 1, arch.hgf_options(cfg.hgf));
    let mut model = Model::build(&spec, &mut cell.init_rng())?;
    let mut rng = data_rng(seed, Protocol::Precision);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rows = Vec::new();
    let mut train_ms = 0.0;
    let mut x = Vec::new();
    if let Model::Hgf { net, .. } = &model {
        // predicted precision before any learning, the reference for growth
        let mut probe = net.clone();
        train.copy_features(order[0], &mut x);
        probe.clamp_input(&x)?;
        probe.predict_sweep()?;
        for l in probe.hidden_layers() {
            let p = &probe.layers[l].pi_hat;
            rows.push(key.row(
                0,
                &layer_metric("pi_hat", l),
                p.iter().sum::<f64>() / p.len() as f64,
                0.0,
            ));
        }
    }
    for epoch in 1..=pc.epochs {
        rng.shuffle(&mut order);
        let t = Instant::now();
        if method == Method::Hgf {
            let mut sums: Option<[Vec<f64>; 3]> = None;
            for &r in &order {
                train.copy_features(r, &mut x);
                let y = data::target_vector(train.labels[r] as usize, 2, 1)?;
                let d = model.train_hgf_diag(&x, &y)?.expect("hgf model");
                let s = sums.get_or_insert_with(|| {
                    let n = d.mean_pi_hat.len();
                    [vec![0.0; n], vec![0.0; n], vec![0.0; n]]
                });
                for l in 0..d.mean_pi_hat.len() {
                    s[0][l] += d.mean_pi_hat[l];
                    s[1][l] += d.mean_pwpe[l];
                    s[2][l] += d.mean_abs_dw[l];
                }
            }
            train_ms += ms(t);
            if let (Some(s), Model::Hgf { net, .. }) = (sums, &model) {
                let n = order.len() as f64;
                for l in net.hidden_layers() {
                    rows.push(key.row(epoch as u64, &layer_metric("pi_hat", l), s[0][l] / n, train_ms));
                    rows.push(key.row(epoch as u64, &layer_metric("pwpe", l), s[1][l] / n, train_ms));
                    rows.push(key.row(epoch as u64, &layer_metric("abs_dw", l), s[2][l] / n, train_ms));
                }
            }
        } else {
            model.train_epoch(&train, &order, train.len())?;
            train_ms += ms(t);
        }
        let acc = model.accuracy(&test)?;
        rows.push(key.row(epoch as u64, ACCURACY, acc, train_ms));
    }
    if let Model::Hgf { net, .. } = &model {
        rows.push(key.row(
            pc.epochs as u64,
            "volatility_floor_hits",
            net.volatility_floor_hits as f64,
            train_ms,
        ));
    }
    Ok(rows)
}

/// Wall-clock cost of single-sample updates and of full epochs.
///
/// Runs serially so that cells do not compete for cores. Rows: every timed
/// trial (`sample_ms`, `epoch_ms`) and their mean and standard deviation.
pub fn run_timing(cfg: &ExperimentConfig, data: &Fashion) -> AppResult<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &depth in &cfg.depths {
            for &width in &cfg.widths {
                let cell = Cell {
                    method,
                    depth,
                    width,
                    lr: cfg.lrs(method)[0],
                    seed: cfg.seeds[0],
                };
                rows.extend(time_cell(cfg, &cell, data)?);
            }
        }
    }
    Ok(rows)
}

fn time_cell(cfg: &ExperimentConfig, cell: &Cell, data: &Fashion) -> AppResult<Vec<MetricsRow>> {
    let tc = &cfg.timing;
    let key = cell.key(Protocol::Timing);
    let train = &data.train;
    let mut model = Model::build(&cell.spec(train.dim, train.classes, cfg.hgf), &mut cell.init_rng())?;
    let mut rows = Vec::new();
    let mut sample_ms = Vec::with_capacity(tc.trials);
    for trial in 0..tc.warmup + tc.trials {
        let r = trial % train.len();
        let t = Instant::now();
        model.train_rows(train, &[r], None)?;
        let el = ms(t);
        if trial >= tc.warmup {
            sample_ms.push(el);
            rows.push(key.row((trial - tc.warmup) as u64, "sample_ms", el, el));
        }
    }
    let n = tc.epoch_samples.min(train.len());
    let order: Vec<usize> = (0..n).collect();
    let batch = batch_for(cell.method, cfg.batch_size);
    let mut epoch_ms = Vec::with_capacity(tc.epoch_trials);
    for trial in 0..tc.epoch_warmup + tc.epoch_trials {
        let t = Instant::now();
        model.train_epoch(train, &order, batch)?;
        let el = ms(t);
        if trial >= tc.epoch_warmup {
            epoch_ms.push(el);
            rows.push(key.row((trial - tc.epoch_warmup) as u64, "epoch_ms", el, el));
        }
    }
    for (name, xs) in [("sample_ms", &sample_ms), ("epoch_ms", &epoch_ms)] {
        let (m, s) = mean_sd(xs);
        rows.push(key.row(xs.len() as u64, &format!("{name}_mean"), m, 0.0));
        rows.push(key.row(xs.len() as u64, &format!("{name}_sd"), s, 0.0));
    }
    Ok(rows)
}

/// Dispatches `protocol`.
pub fn run(
    protocol: Protocol,
    cfg: &ExperimentConfig,
    data: Option<&Fashion>,
    checkpoints: Option<&Path>,
) -> AppResult<Vec<MetricsRow>> {
    cfg.validate()?;
    if protocol == Protocol::Precision {
        return run_precision_diag(cfg);
    }
    let data = data.ok_or_else(|| AppError::Config(format!("protocol {} needs FashionMNIST", protocol.name())))?;
    match protocol {
        Protocol::Direct => run_direct(cfg, data),
        Protocol::Online => run_online(cfg, data),
        Protocol::DataEfficiency => run_data_efficiency(cfg, data),
        Protocol::Drift => run_concept_drift(cfg, data, checkpoints),
        Protocol::Timing => run_timing(cfg, data),
        Protocol::Precision => unreachable!(),
    }
}

/// Oracle learning rate of one architecture group and the value of the
/// reported metric at that rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLine {
    pub method: String,
    pub depth: usize,
    pub width: usize,
    /// Subset size for data efficiency.
    pub size: Option<u64>,
    pub lr: f64,
    /// Seed-mean selection score (test accuracy).
    pub score: f64,
    pub metric: &'static str,
    /// Seed mean of `metric` at the oracle learning rate.
    pub value: f64,
}

impl std::fmt::Display for OracleLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<16} depth {:>2} width {:>3}", self.method, self.depth, self.width)?;
        if let Some(n) = self.size {
            write!(f, " n {n:>5}")?;
        }
        write!(f, "  lr {:<8e} {} {:.4}", self.lr, self.metric, self.value)
    }
}

/// Seed mean of the last-step value of `metric` for one run group.
fn seed_mean_last(rows: &[MetricsRow], g: &Group, lr: f64, metric: &str) -> f64 {
    let sel: Vec<MetricsRow> = rows
        .iter()
        .filter(|r| r.method == g.0 && r.depth == g.1 && r.width == g.2 && r.lr == lr)
        .cloned()
        .collect();
    lr_scores(&sel, metric, false)
        .get(g)
        .and_then(|v| v.first())
        .map_or(f64::NAN, |x| x.1)
}

/// Oracle selection over the rows of one protocol. The learning rate
/// maximises seed-mean test accuracy: at the final step for direct and
/// online training, per subset size for data efficiency and averaged over
/// all iterations for drift (which then reports the post-drift error).
/// Precision and timing runs have no sweep; their summary reports the final
/// accuracy and the mean per-sample time.
pub fn summarize(protocol: Protocol, rows: &[MetricsRow]) -> Vec<OracleLine> {
    let line = |g: &Group, size, (lr, score): (f64, f64), metric, value| OracleLine {
        method: g.0.clone(),
        depth: g.1,
        width: g.2,
        size,
        lr,
        score,
        metric,
        value,
    };
    match protocol {
        Protocol::Direct | Protocol::Online | Protocol::Precision => oracle_lr_select(rows, ACCURACY, false)
            .iter()
            .map(|(g, &best)| line(g, None, best, ACCURACY, best.1))
            .collect(),
        Protocol::DataEfficiency => {
            let mut sizes: Vec<u64> = rows.iter().map(|r| r.step).collect();
            sizes.sort_unstable();
            sizes.dedup();
            let mut out = Vec::new();
            for n in sizes {
                let sel: Vec<MetricsRow> = rows.iter().filter(|r| r.step == n).cloned().collect();
                for (g, best) in oracle_lr_select(&sel, ACCURACY, false) {
                    out.push(line(&g, Some(n), best, ACCURACY, best.1));
                }
            }
            out
        }
        Protocol::Drift => oracle_lr_select(rows, ACCURACY, true)
            .iter()
            .map(|(g, &best)| {
                line(
                    g,
                    None,
                    best,
                    "post_drift_error",
                    seed_mean_last(rows, g, best.0, "post_drift_error"),
                )
            })
            .collect(),
        Protocol::Timing => oracle_lr_select(rows, "sample_ms_mean", false)
            .iter()
            .map(|(g, &best)| line(g, None, best, "sample_ms_mean", best.1))
            .collect(),
    }
}
