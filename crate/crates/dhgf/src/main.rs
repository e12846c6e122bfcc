use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dhgf::bench::{self, Fashion};
use dhgf::config::{Protocol, RunConfig, Task};
use dhgf::error::{AppError, AppResult};
use dhgf::metrics::{self, MetricsRow, RunKey};
use dhgf::model::{Method, Model, ModelSpec};
use dhgf::{idx, plot, snapshot, verify};
use dhgf_core::data;

#[derive(Parser)]
#[command(name = "dhgf", version, about = "Deep hierarchical Gaussian filter networks")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// FashionMNIST directory (overrides the config and $DHGF_DATA_DIR).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Directory receiving CSV results.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and report test accuracy per epoch.
    Train(TrainArgs),
    /// Run a benchmark protocol over the configured grid.
    Bench(BenchArgs),
    /// Run the numerical self-checks.
    Verify,
    /// Summarise the FashionMNIST files.
    DatasetInfo,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Spiral,
    FashionMnist,
}

#[derive(Args)]
struct TrainArgs {
    /// Spiral or FashionMNIST.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// hgf, mlp or pcn.
    #[arg(long)]
    method: Option<String>,
    /// Hidden-layer count.
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden-layer width.
    #[arg(long)]
    width: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed of initialisation and data order.
    #[arg(long)]
    seed: Option<u64>,
    /// Stratified FashionMNIST training subset.
    #[arg(long)]
    train_size: Option<usize>,
    /// Write the trained model to this snapshot file.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// direct, online, data-efficiency, drift, precision or timing.
    protocol: String,
    /// Comma-separated methods: hgf, mlp, pcn.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Hidden-layer counts.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Hidden-layer widths.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Seeds; every cell runs once per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Learning-rate sweep of the HGF networks.
    #[arg(long, value_delimiter = ',')]
    hgf_lrs: Option<Vec<f64>>,
    /// Learning-rate sweep of the MLP and PCN.
    #[arg(long, value_delimiter = ',')]
    baseline_lrs: Option<Vec<f64>>,
    /// Epochs of direct training.
    #[arg(long)]
    epochs: Option<usize>,
    /// Stratified training subset for direct training.
    #[arg(long)]
    train_size: Option<usize>,
    /// Stratified test subset for direct training.
    #[arg(long)]
    test_size: Option<usize>,
    /// Iterations of the online and drift protocols.
    #[arg(long)]
    iterations: Option<usize>,
    /// Directory of reusable drift pretraining snapshots.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write SVG plots of test error per method.
    #[arg(long)]
    plot: bool,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> AppResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            cfg.validate()?;
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(d) = cli.data_dir {
        cfg.data_dir = Some(d);
    }
    if let Some(d) = cli.output_dir {
        cfg.output_dir = d;
    }
    match cli.command {
        Command::Train(a) => train(cfg, a),
        Command::Bench(a) => bench_cmd(cfg, a),
        Command::Verify => {
            let checks = verify::run_all();
            print!("{}", verify::table(&checks));
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(AppError::Numerical("verification failed".into()))
            }
        }
        Command::DatasetInfo => dataset_info(&cfg),
    }
}

fn parse_method(s: &str) -> AppResult<Method> {
    Method::parse(s).ok_or_else(|| AppError::Config(format!("unknown method `{s}` (hgf, mlp or pcn)")))
}

fn load_fashion(cfg: &RunConfig) -> AppResult<Fashion> {
    let dir = idx::data_dir(cfg.data_dir.as_deref());
    let (train, test) = idx::load_fashion_mnist(&dir)?;
    Ok(Fashion { train, test })
}

/// Writes `rows` to `path`, removing any partial file on failure.
fn write_results(path: &Path, rows: &[MetricsRow]) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.partial");
    let res = metrics::write_csv_file(&tmp, rows).and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = res {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> AppResult<()> {
    let t = &mut cfg.train;
    if let Some(task) = a.task {
        t.task = match task {
            TaskArg::Spiral => Task::Spiral,
            TaskArg::FashionMnist => Task::FashionMnist,
        };
    }
    if let Some(m) = &a.method {
        t.method = parse_method(m)?;
    }
    t.depth = a.depth.unwrap_or(t.depth);
    t.width = a.width.unwrap_or(t.width);
    t.lr = a.lr.unwrap_or(t.lr);
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.seed = a.seed.unwrap_or(t.seed);
    if a.train_size.is_some() {
        t.train_size = a.train_size;
    }
    cfg.validate()?;
    let t = &cfg.train;

    let (train, test, output) = match t.task {
        Task::Spiral => {
            let ds = data::spiral_dataset(&t.spiral.spiral(), t.seed)?;
            let (tr, te) = data::split(&ds, t.spiral.train_fraction, t.seed)?;
            (tr, te, 1)
        }
        Task::FashionMnist => {
            let f = load_fashion(&cfg)?;
            let tr = match t.train_size {
                Some(n) => data::subset(&f.train, n, t.seed)?,
                None => f.train,
            };
            let classes = tr.classes;
            (tr, f.test, classes)
        }
    };
    let spec = ModelSpec {
        method: t.method,
        input: train.dim,
        depth: t.depth,
        width: t.width,
        output,
        lr: t.lr,
        hgf: t.hgf,
    };
    let cell = bench::Cell {
        method: t.method,
        depth: t.depth,
        width: t.width,
        lr: t.lr,
        seed: t.seed,
    };
    let mut model = Model::build(&spec, &mut cell.init_rng())?;
    let mut rng = bench::data_rng(t.seed, Protocol::Direct);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = if t.method == Method::Hgf { 1 } else { t.batch_size };
    let key = RunKey {
        method: t.method.name().into(),
        protocol: "train".into(),
        depth: t.depth,
        width: t.width,
        lr: t.lr,
        seed: t.seed,
    };
    let mut rows = Vec::new();
    let start = Instant::now();
    for epoch in 1..=t.epochs {
        rng.shuffle(&mut order);
        model.train_epoch(&train, &order, batch)?;
        let acc = model.accuracy(&test)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        println!("epoch {epoch:>3}  test accuracy {acc:.4}  {:.1} s", ms / 1e3);
        rows.push(key.row(epoch as u64, "test_accuracy", acc, ms));
    }
    write_results(&cfg.output_dir.join("train.csv"), &rows)?;
    if let Some(path) = a.save.or(cfg.checkpoint.clone()) {
        snapshot::save_model(&path, &spec, &model)?;
    }
    Ok(())
}

fn bench_cmd(mut cfg: RunConfig, a: BenchArgs) -> AppResult<()> {
    let protocol =
        Protocol::parse(&a.protocol).ok_or_else(|| AppError::Config(format!("unknown protocol `{}`", a.protocol)))?;
    let e = &mut cfg.experiment;
    if let Some(ms) = &a.methods {
        e.methods = ms.iter().map(|m| parse_method(m)).collect::<AppResult<_>>()?;
    }
    if let Some(v) = a.depths {
        e.depths = v;
    }
    if let Some(v) = a.widths {
        e.widths = v;
    }
    if let Some(v) = a.seeds {
        e.seeds = v;
    }
    if let Some(v) = a.hgf_lrs {
        e.hgf_lrs = v;
    }
    if let Some(v) = a.baseline_lrs {
        e.baseline_lrs = v;
    }
    if let Some(v) = a.epochs {
        e.direct.epochs = v;
    }
    if a.train_size.is_some() {
        e.direct.train_size = a.train_size;
    }
    if a.test_size.is_some() {
        e.direct.test_size = a.test_size;
    }
    if let Some(v) = a.iterations {
        e.online.iterations = v;
        e.drift.iterations = v;
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint;
    }
    cfg.plot |= a.plot;
    cfg.validate()?;
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(e.to_string()))?;
    }
    let data = match protocol {
        Protocol::Precision => None,
        _ => Some(load_fashion(&cfg)?),
    };
    let rows = bench::run(protocol, &cfg.experiment, data.as_ref(), cfg.checkpoint.as_deref())?;
    let path = cfg.output_dir.join(format!("{}.csv", protocol.name()));
    write_results(&path, &rows)?;
    if cfg.plot {
        for p in plot::write_plots(&cfg.output_dir, protocol, &rows)? {
            println!("plot written to {}", p.display());
        }
    }
    for line in bench::summarize(protocol, &rows) {
        println!("{line}");
    }
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn dataset_info(cfg: &RunConfig) -> AppResult<()> {
    let f = load_fashion(cfg)?;
    for ds in [&f.train, &f.test] {
        println!(
            "{}: {} samples, dimension {}, {} classes",
            ds.name,
            ds.len(),
            ds.dim,
            ds.classes
        );
        let counts: Vec<String> = ds.class_counts().iter().map(|c| c.to_string()).collect();
        println!("  class counts: {}", counts.join(" "));
    }
    Ok(())
}
