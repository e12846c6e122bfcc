//! Run configuration documents (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::model::{HgfOptions, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Direct,
    Online,
    DataEfficiency,
    Drift,
    Precision,
    Timing,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::Direct,
        Protocol::Online,
        Protocol::DataEfficiency,
        Protocol::Drift,
        Protocol::Precision,
        Protocol::Timing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Direct => "direct",
            Protocol::Online => "online",
            Protocol::DataEfficiency => "data-efficiency",
            Protocol::Drift => "drift",
            Protocol::Precision => "precision",
            Protocol::Timing => "timing",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        Protocol::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectConfig {
    pub epochs: usize,
    /// Stratified training subset size; the full training set when absent.
    pub train_size: Option<usize>,
    /// Stratified test subset size; the full test set when absent.
    pub test_size: Option<usize>,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig {
            epochs: 50,
            train_size: None,
            test_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineConfig {
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub test_size: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            iterations: 64,
            samples_per_iteration: 200,
            test_size: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataEfficiencyConfig {
    pub sizes: Vec<usize>,
    pub epochs: usize,
    pub test_size: Option<usize>,
}

impl Default for DataEfficiencyConfig {
    fn default() -> Self {
        DataEfficiencyConfig {
            sizes: vec![60, 300, 600, 3000, 6000],
            epochs: 64,
            test_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    pub pretrain_samples: usize,
    pub pretrain_epochs: usize,
    pub iterations: usize,
    pub period: usize,
    pub permuted_classes: Vec<u8>,
    pub train_per_iteration: usize,
    pub test_per_iteration: usize,
    /// Iterations at the end of each drift event averaged into the
    /// post-drift error.
    pub tail: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            pretrain_samples: 6000,
            pretrain_epochs: 64,
            iterations: 3000,
            period: 64,
            permuted_classes: vec![5, 6, 7, 8, 9],
            train_per_iteration: 120,
            test_per_iteration: 1000,
            tail: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionConfig {
    pub depths: Vec<usize>,
    pub width: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub hgf_lr: f64,
    pub mlp_lr: f64,
    pub n: usize,
    /// Angle swept by each arm, in multiples of pi.
    pub theta_max_pi: f64,
    pub noise_sd: f64,
    pub train_fraction: f64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig {
            depths: vec![6, 16],
            width: 12,
            epochs: 50,
            seeds: (0..10).collect(),
            hgf_lr: 2e-2,
            mlp_lr: 5e-3,
            n: 1000,
            theta_max_pi: 1.0,
            noise_sd: 0.05,
            train_fraction: 0.8,
        }
    }
}

impl PrecisionConfig {
    pub fn spiral(&self) -> dhgf_core::data::SpiralConfig {
        dhgf_core::data::SpiralConfig {
            n: self.n,
            arms: 4,
            theta_max: self.theta_max_pi * std::f64::consts::PI,
            noise_sd: self.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub warmup: usize,
    pub trials: usize,
    pub epoch_samples: usize,
    pub epoch_warmup: usize,
    pub epoch_trials: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            warmup: 20,
            trials: 100,
            epoch_samples: 10_000,
            epoch_warmup: 1,
            epoch_trials: 5,
        }
    }
}

/// Grid and protocol parameters of a benchmark invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub hgf_lrs: Vec<f64>,
    pub baseline_lrs: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Mini-batch size of the baselines in the batched protocols.
    pub batch_size: usize,
    pub hgf: HgfOptions,
    pub direct: DirectConfig,
    pub online: OnlineConfig,
    pub data_efficiency: DataEfficiencyConfig,
    pub drift: DriftConfig,
    pub precision: PrecisionConfig,
    pub timing: TimingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::Hgf, Method::Mlp, Method::Pcn],
            depths: vec![2, 8],
            widths: vec![32, 64, 128],
            hgf_lrs: vec![1e-4, 5e-4, 1e-3, 2e-3],
            baseline_lrs: vec![1e-2, 1e-3, 1e-4],
            seeds: vec![0, 1, 2],
            batch_size: 64,
            hgf: HgfOptions::default(),
            direct: DirectConfig::default(),
            online: OnlineConfig::default(),
            data_efficiency: DataEfficiencyConfig::default(),
            drift: DriftConfig::default(),
            precision: PrecisionConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn lrs(&self, method: Method) -> &[f64] {
        match method {
            Method::Hgf => &self.hgf_lrs,
            _ => &self.baseline_lrs,
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: &str| Err(AppError::Config(m.to_string()));
        if self.methods.is_empty() || self.depths.is_empty() || self.widths.is_empty() {
            return bad("methods, depths and widths must be non-empty");
        }
        if self.hgf_lrs.is_empty() || self.baseline_lrs.is_empty() {
            return bad("learning-rate sweeps must be non-empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if !distinct(&self.seeds) || !distinct(&self.precision.seeds) {
            return bad("seeds must be distinct");
        }
        let lrs = self.hgf_lrs.iter().chain(&self.baseline_lrs);
        if lrs
            .chain([&self.precision.hgf_lr, &self.precision.mlp_lr])
            .any(|&lr| !(lr > 0.0 && lr.is_finite()))
        {
            return bad("learning rates must be positive and finite");
        }
        if self.depths.iter().chain(&self.widths).any(|&d| d == 0) {
            return bad("depths and widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let d = &self.drift;
        if d.period == 0 || d.tail == 0 || d.tail > d.period {
            return bad("drift period must be positive and tail within 1..=period");
        }
        if d.permuted_classes.iter().any(|&c| c >= 10) {
            return bad("drift permuted_classes must be FashionMNIST classes 0-9");
        }
        let p = &self.precision;
        if p.depths.is_empty() || p.seeds.is_empty() || p.width == 0 || p.n < 4 {
            return bad("precision protocol needs depths, seeds, width > 0 and n >= 4");
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return bad("precision.train_fraction must lie in (0, 1)");
        }
        if self.timing.trials == 0 || self.timing.epoch_trials == 0 {
            return bad("timing trials must be positive");
        }
        Ok(())
    }
}

fn distinct(seeds: &[u64]) -> bool {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s.windows(2).all(|w| w[0] != w[1])
}

/// Which task `train` fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spiral,
    FashionMnist,
}

/// Single training run of the `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub method: Method,
    pub depth: usize,
    pub width: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_size: Option<usize>,
    pub hgf: HgfOptions,
    pub spiral: PrecisionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Spiral,
            method: Method::Hgf,
            depth: 6,
            width: 12,
            lr: 2e-2,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            train_size: None,
            hgf: HgfOptions::default(),
            spiral: PrecisionConfig::default(),
        }
    }
}

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// FashionMNIST directory; `$DHGF_DATA_DIR` or `data/fashion-mnist` when absent.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Snapshot written by `train`, or the directory of pretraining snapshots
    /// reused by `bench drift`.
    pub checkpoint: Option<PathBuf>,
    pub plot: bool,
    pub experiment: ExperimentConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            output_dir: PathBuf::from("results"),
            checkpoint: None,
            plot: false,
            experiment: ExperimentConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> AppResult<RunConfig> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> AppResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> AppResult<()> {
        self.experiment.validate()?;
        let t = &self.train;
        if t.depth == 0 || t.width == 0 || t.epochs == 0 || t.batch_size == 0 {
            return Err(AppError::Config(
                "train depth, width, epochs and batch_size must be positive".into(),
            ));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(AppError::Config("train.lr must be positive and finite".into()));
        }
        Ok(())
    }
}
