//! One interface over the three learners compared by the benchmarks.

use dhgf_core::baselines::{ForwardCache, Head, MlpModel, PcnModel};
use dhgf_core::data::{target_vector, Dataset};
use dhgf_core::hgf::{BinaryCoupling, VolatilityConfig};
use dhgf_core::plasticity::{train_sample, train_step, TrainDiagnostics};
use dhgf_core::{ActivationKind, HgfConfig, HgfNetwork, PrecisionMode, Result, Rng, WeightRule, WeightRuleKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hgf,
    Mlp,
    Pcn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hgf => "hgf",
            Method::Mlp => "mlp",
            Method::Pcn => "pcn",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "hgf" => Some(Method::Hgf),
            "mlp" => Some(Method::Mlp),
            "pcn" => Some(Method::Pcn),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// HGF-specific knobs; ignored by the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HgfOptions {
    pub omega: f64,
    pub volatility: bool,
    pub omega_vol: f64,
    pub reset_precision: bool,
    pub rule: RuleName,
    pub ratio_predicted: bool,
    pub precision_weighted_output: bool,
    pub prior_precision: f64,
}

impl Default for HgfOptions {
    fn default() -> Self {
        HgfOptions {
            omega: -10.0,
            volatility: false,
            omega_vol: VolatilityConfig::default().omega_vol,
            reset_precision: false,
            rule: RuleName::Precision,
            ratio_predicted: false,
            precision_weighted_output: false,
            prior_precision: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Standard,
    Precision,
    Ratio,
}

impl From<RuleName> for WeightRuleKind {
    fn from(r: RuleName) -> Self {
        match r {
            RuleName::Standard => WeightRuleKind::Standard,
            RuleName::Precision => WeightRuleKind::Precision,
            RuleName::Ratio => WeightRuleKind::Ratio,
        }
    }
}

/// Architecture and optimiser settings of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub method: Method,
    pub input: usize,
    pub depth: usize,
    pub width: usize,
    /// Output units: the class count, or 1 for a two-class task with one
    /// binary output.
    pub output: usize,
    pub lr: f64,
    pub hgf: HgfOptions,
}

impl ModelSpec {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(std::iter::repeat_n(self.width, self.depth));
        w.push(self.output);
        w
    }

    pub fn hgf_config(&self) -> HgfConfig {
        let o = &self.hgf;
        let mut rule = WeightRule::new(o.rule.into(), self.lr);
        if o.ratio_predicted {
            rule = rule.with_ratio_precision(dhgf_core::RatioPrecision::Predicted);
        }
        HgfConfig::new(&self.widths())
            .with_omega(o.omega)
            .with_volatility(o.volatility.then_some(VolatilityConfig { omega_vol: o.omega_vol }))
            .with_precision_mode(if o.reset_precision {
                PrecisionMode::ResetEachSample
            } else {
                PrecisionMode::TemporalCarryover
            })
            .with_weight_rule(rule)
            .with_binary_coupling(if o.precision_weighted_output {
                BinaryCoupling::PrecisionWeighted
            } else {
                BinaryCoupling::SigmoidSlope
            })
            .with_prior_precision(o.prior_precision)
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Hgf { net: HgfNetwork, rule: WeightRule },
    Mlp { model: MlpModel, cache: ForwardCache },
    Pcn { model: PcnModel },
}

impl Model {
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
        let g = ActivationKind::leaky();
        let widths = spec.widths();
        Ok(match spec.method {
            Method::Hgf => {
                let cfg = spec.hgf_config();
                Model::Hgf {
                    net: HgfNetwork::build(&cfg, rng)?,
                    rule: cfg.weight_rule,
                }
            }
            Method::Mlp => {
                let head = if spec.output == 1 { Head::Sigmoid } else { Head::Softmax };
                Model::Mlp {
                    model: MlpModel::new(&widths, g, head, spec.lr, rng)?,
                    cache: ForwardCache::default(),
                }
            }
            Method::Pcn => Model::Pcn {
                model: PcnModel::new(&widths, g, spec.lr, rng)?,
            },
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Model::Hgf { .. } => Method::Hgf,
            Model::Mlp { .. } => Method::Mlp,
            Model::Pcn { .. } => Method::Pcn,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Model::Hgf { net, .. } => net.output_width(),
            Model::Mlp { model, .. } => model.output_width(),
            Model::Pcn { model } => model.output_width(),
        }
    }

    /// One update on the listed rows: sequential single-sample steps for the
    /// HGF, one mini-batch step for the baselines. `labels` overrides the
    /// dataset labels when given (drift relabelling).
    pub fn train_rows(&mut self, ds: &Dataset, rows: &[usize], labels: Option<&[u8]>) -> Result<()> {
        let width = self.output_width();
        let label = |k: usize| labels.map_or(ds.labels[rows[k]], |l| l[k]) as usize;
        match self {
            Model::Hgf { net, rule } => {
                let mut x = Vec::with_capacity(ds.dim);
                for k in 0..rows.len() {
                    ds.copy_features(rows[k], &mut x);
                    let y = target_vector(label(k), ds.classes, width)?;
                    train_sample(net, &x, &y, rule)?;
                }
            }
            Model::Mlp { model, cache } => {
                let (xs, ys) = batch(ds, rows, &label, width)?;
                let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let yr: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
                let loss = model.train_batch(&xr, &yr, cache)?;
                check_finite(loss)?;
            }
            Model::Pcn { model } => {
                let (xs, ys) = batch(ds, rows, &label, width)?;
                let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let yr: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
                let energy = model.train_batch(&xr, &yr)?;
                check_finite(energy)?;
            }
        }
        Ok(())
    }

    /// HGF training step with per-layer diagnostics.
    pub fn train_hgf_diag(&mut self, x: &[f64], y: &[f64]) -> Result<Option<TrainDiagnostics>> {
        match self {
            Model::Hgf { net, rule } => Ok(Some(train_step(net, x, y, rule)?)),
            _ => Ok(None),
        }
    }

    /// One pass over `order` in chunks of `batch` (the HGF always steps per sample).
    pub fn train_epoch(&mut self, ds: &Dataset, order: &[usize], batch: usize) -> Result<()> {
        for chunk in order.chunks(batch.max(1)) {
            self.train_rows(ds, chunk, None)?;
        }
        Ok(())
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<usize> {
        match self {
            Model::Hgf { net, .. } => {
                let out = net.infer(x)?;
                Ok(if out.len() == 1 {
                    (out[0] > 0.5) as usize
                } else {
                    dhgf_core::hgf::argmax(&out)
                })
            }
            Model::Mlp { model, cache } => model.predict_class(x, cache),
            Model::Pcn { model } => model.predict_class(x),
        }
    }

    /// Fraction of `rows` classified correctly; `labels` overrides as in
    /// [`Model::train_rows`].
    pub fn accuracy_on(&mut self, ds: &Dataset, rows: &[usize], labels: Option<&[u8]>) -> Result<f64> {
        if rows.is_empty() {
            return Ok(0.0);
        }
        let mut x = Vec::with_capacity(ds.dim);
        let mut hits = 0usize;
        for (k, &r) in rows.iter().enumerate() {
            ds.copy_features(r, &mut x);
            let truth = labels.map_or(ds.labels[r], |l| l[k]) as usize;
            hits += (self.predict(&x)? == truth) as usize;
        }
        Ok(hits as f64 / rows.len() as f64)
    }

    pub fn accuracy(&mut self, ds: &Dataset) -> Result<f64> {
        let rows: Vec<usize> = (0..ds.len()).collect();
        self.accuracy_on(ds, &rows, None)
    }
}

type Batch = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn batch(ds: &Dataset, rows: &[usize], label: &dyn Fn(usize) -> usize, width: usize) -> Result<Batch> {
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for (k, &r) in rows.iter().enumerate() {
        let mut x = Vec::with_capacity(ds.dim);
        ds.copy_features(r, &mut x);
        xs.push(x);
        ys.push(target_vector(label(k), ds.classes, width)?);
    }
    Ok((xs, ys))
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(dhgf_core::Error::Numerical(format!("non-finite training loss {v}")))
    }
}
