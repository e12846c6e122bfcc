//! Line plots of seed-mean test error against step, one file per
//! (depth, width) and one line per method at its oracle learning rate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::config::Protocol;
use crate::error::{AppError, AppResult};
use crate::metrics::{oracle_lr_select, MetricsRow};
use crate::snapshot::write_atomic;

const ACCURACY: &str = "test_accuracy";

/// Error curves of one (depth, width) panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub depth: usize,
    pub width: usize,
    /// `(method, [(step, seed-mean error)])`, steps ascending.
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn seed_mean_errors(rows: &[&MetricsRow]) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.step).or_insert((0.0, 0));
        e.0 += 1.0 - r.value;
        e.1 += 1;
    }
    acc.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect()
}

/// Seed-mean test error per step at the oracle learning rate of every
/// method. Data efficiency selects the rate per subset size, drift by mean
/// accuracy over the run. Timing runs have no error curve.
pub fn error_panels(protocol: Protocol, rows: &[MetricsRow]) -> Vec<Panel> {
    if protocol == Protocol::Timing {
        return Vec::new();
    }
    let acc: Vec<MetricsRow> = rows.iter().filter(|r| r.metric == ACCURACY).cloned().collect();
    let mut panels: BTreeMap<(usize, usize), Vec<(String, Vec<(f64, f64)>)>> = BTreeMap::new();
    if protocol == Protocol::DataEfficiency {
        let mut curves: BTreeMap<(usize, usize, String), Vec<(f64, f64)>> = BTreeMap::new();
        let mut sizes: Vec<u64> = acc.iter().map(|r| r.step).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for n in sizes {
            let at: Vec<MetricsRow> = acc.iter().filter(|r| r.step == n).cloned().collect();
            for ((method, depth, width), (_, score)) in oracle_lr_select(&at, ACCURACY, false) {
                curves
                    .entry((depth, width, method))
                    .or_default()
                    .push((n as f64, 1.0 - score));
            }
        }
        for ((depth, width, method), pts) in curves {
            panels.entry((depth, width)).or_default().push((method, pts));
        }
    } else {
        for ((method, depth, width), (lr, _)) in oracle_lr_select(&acc, ACCURACY, protocol == Protocol::Drift) {
            let sel: Vec<&MetricsRow> = acc
                .iter()
                .filter(|r| r.method == method && r.depth == depth && r.width == width && r.lr == lr)
                .collect();
            let pts = seed_mean_errors(&sel).into_iter().map(|(s, e)| (s as f64, e)).collect();
            panels.entry((depth, width)).or_default().push((method, pts));
        }
    }
    panels
        .into_iter()
        .map(|((depth, width), series)| Panel { depth, width, series })
        .collect()
}

/// Renders one panel as a standalone SVG document.
pub fn render_svg(title: &str, x_label: &str, panel: &Panel) -> AppResult<String> {
    let err = |e: &dyn std::fmt::Display| AppError::Numerical(format!("plot: {e}"));
    let points = panel.series.iter().flat_map(|(_, p)| p.iter());
    let (x0, x1) = points
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let y1 = points.fold(0.0f64, |m, p| m.max(p.1));
    let (x0, x1) = if x0.is_finite() && x1 > x0 {
        (x0, x1)
    } else {
        (0.0, 1.0)
    };
    let y1 = if y1 > 0.0 { (y1 * 1.05).min(1.0) } else { 1.0 };

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d(x0..x1, 0.0..y1)
            .map_err(|e| err(&e))?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc("test error")
            .draw()
            .map_err(|e| err(&e))?;
        for (k, (method, pts)) in panel.series.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| err(&e))?
                .label(method.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| err(&e))?;
        root.present().map_err(|e| err(&e))?;
    }
    Ok(svg)
}

/// Writes `<protocol>_d<depth>_w<width>.svg` into `dir` for every panel and
/// returns the paths.
pub fn write_plots(dir: &Path, protocol: Protocol, rows: &[MetricsRow]) -> AppResult<Vec<PathBuf>> {
    let x_label = match protocol {
        Protocol::Direct | Protocol::Precision => "epoch",
        Protocol::DataEfficiency => "training samples",
        Protocol::Online | Protocol::Drift | Protocol::Timing => "iteration",
    };
    let mut paths = Vec::new();
    for panel in error_panels(protocol, rows) {
        let title = format!("{} depth {} width {}", protocol.name(), panel.depth, panel.width);
        let svg = render_svg(&title, x_label, &panel)?;
        let path = dir.join(format!("{}_d{}_w{}.svg", protocol.name(), panel.depth, panel.width));
        write_atomic(&path, svg.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
