//! Benchmark observations, their CSV form and oracle learning-rate selection.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 10] = [
    "method",
    "protocol",
    "depth",
    "width",
    "lr",
    "seed",
    "step",
    "metric",
    "value",
    "wall_clock_ms",
];

/// One observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub protocol: String,
    pub depth: usize,
    pub width: usize,
    pub lr: f64,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
    pub wall_clock_ms: f64,
}

/// Identity of one training run; rows are stamped with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub method: String,
    pub protocol: String,
    pub depth: usize,
    pub width: usize,
    pub lr: f64,
    pub seed: u64,
}

impl RunKey {
    pub fn row(&self, step: u64, metric: &str, value: f64, wall_clock_ms: f64) -> MetricsRow {
        MetricsRow {
            method: self.method.clone(),
            protocol: self.protocol.clone(),
            depth: self.depth,
            width: self.width,
            lr: self.lr,
            seed: self.seed,
            step,
            metric: metric.to_string(),
            value,
            wall_clock_ms,
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(f), rows).map_err(std::io::Error::other)
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect()
}

/// Rows of `rows` whose metric is `metric`.
pub fn select<'a>(rows: &'a [MetricsRow], metric: &'a str) -> impl Iterator<Item = &'a MetricsRow> + 'a {
    rows.iter().filter(move |r| r.metric == metric)
}

/// Architecture group over which a learning rate is selected.
pub type Group = (String, usize, usize);

/// Score of every `(group, lr)`: the seed mean of each run's `metric` at its
/// last step (or averaged over all steps when `average_steps`).
pub fn lr_scores(rows: &[MetricsRow], metric: &str, average_steps: bool) -> BTreeMap<Group, Vec<(f64, f64)>> {
    // (group, lr bits, seed) -> (last step, value at last step, sum, count)
    let mut runs: BTreeMap<(Group, u64, u64), (u64, f64, f64, usize)> = BTreeMap::new();
    for r in select(rows, metric) {
        let key = ((r.method.clone(), r.depth, r.width), r.lr.to_bits(), r.seed);
        let e = runs.entry(key).or_insert((0, f64::NAN, 0.0, 0));
        if e.3 == 0 || r.step >= e.0 {
            e.0 = r.step;
            e.1 = r.value;
        }
        e.2 += r.value;
        e.3 += 1;
    }
    let mut per_lr: BTreeMap<(Group, u64), (f64, usize)> = BTreeMap::new();
    for ((g, lr, _), (_, last, sum, n)) in runs {
        let v = if average_steps { sum / n as f64 } else { last };
        let e = per_lr.entry((g, lr)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let mut out: BTreeMap<Group, Vec<(f64, f64)>> = BTreeMap::new();
    for ((g, lr), (sum, n)) in per_lr {
        out.entry(g).or_default().push((f64::from_bits(lr), sum / n as f64));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

/// Learning rate maximising the seed-mean score per group; exact ties go
/// to the smaller learning rate.
pub fn oracle_lr_select(rows: &[MetricsRow], metric: &str, average_steps: bool) -> BTreeMap<Group, (f64, f64)> {
    lr_scores(rows, metric, average_steps)
        .into_iter()
        .map(|(g, scores)| {
            let mut best = scores[0];
            for &(lr, s) in &scores[1..] {
                if s > best.1 {
                    best = (lr, s);
                }
            }
            (g, best)
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, lr: f64, seed: u64, step: u64, value: f64) -> MetricsRow {
        RunKey {
            method: method.into(),
            protocol: "direct".into(),
            depth: 2,
            width: 32,
            lr,
            seed,
        }
        .row(step, "test_accuracy", value, 0.0)
    }

    #[test]
    fn single_lr_is_selected() {
        let rows = vec![row("hgf", 1e-3, 0, 1, 0.5)];
        let best = oracle_lr_select(&rows, "test_accuracy", false);
        assert_eq!(best[&("hgf".into(), 2, 32)].0, 1e-3);
    }

    #[test]
    fn higher_mean_wins() {
        let rows = vec![row("mlp", 1e-2, 0, 5, 0.87), row("mlp", 1e-3, 0, 5, 0.88)];
        let best = oracle_lr_select(&rows, "test_accuracy", false);
        assert_eq!(best[&("mlp".into(), 2, 32)].0, 1e-3);
    }

    #[test]
    fn exact_tie_goes_to_smaller_lr() {
        let rows = vec![
            row("mlp", 1e-2, 0, 5, 0.9),
            row("mlp", 1e-4, 0, 5, 0.9),
            row("mlp", 1e-3, 0, 5, 0.9),
        ];
        let best = oracle_lr_select(&rows, "test_accuracy", false);
        assert_eq!(best[&("mlp".into(), 2, 32)].0, 1e-4);
    }

    #[test]
    fn only_the_last_step_counts() {
        let rows = vec![
            row("hgf", 1e-3, 0, 1, 0.99),
            row("hgf", 1e-3, 0, 2, 0.10),
            row("hgf", 2e-3, 0, 1, 0.20),
            row("hgf", 2e-3, 0, 2, 0.50),
        ];
        assert_eq!(
            oracle_lr_select(&rows, "test_accuracy", false)[&("hgf".into(), 2, 32)].0,
            2e-3
        );
        assert_eq!(
            oracle_lr_select(&rows, "test_accuracy", true)[&("hgf".into(), 2, 32)].0,
            1e-3
        );
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("hgf", 5e-4, 3, 7, 0.8125), row("pcn", 1e-2, 1, 0, 0.1)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,protocol,depth,width,lr,seed,step,metric,value,wall_clock_ms\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn mean_and_sd() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
