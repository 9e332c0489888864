//! `cobra`: generate data, tune, benchmark, fit and predict from the shell.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 runtime
//! failure (a `failed_runs.json` manifest accompanies failed benchmark runs).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use cobra::aggregation::{AggregatorConfig, ConsensusFallback, EstimatorKind, SavedEstimator, Threshold};
use cobra::bench::{
    export_decision_boundary, run_rmse_benchmark, run_timing_benchmark, write_boundary_csv, write_timing_csv, BenchConfig, Bounds, Sweep,
    SEED_ENV,
};
use cobra::data::{default_split_size, split_dataset};
use cobra::datagen::{generate, load_csv, read_points_csv, save_csv, GeneratorKind, GeneratorSpec, TargetColumn};
use cobra::kernels::KernelKind;
use cobra::machines::{default_roster, fit_machines, MachineSpec};
use cobra::tuning::{apply_params, default_grids, task_of, CrossValidation, FittedEstimator, GridSpec};
use cobra::{Aggregator, Dataset};

#[derive(Parser)]
#[command(name = "cobra", version, about = "Consensus-based aggregation of regression and classification machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Cross-validated grid search for one estimator.
    Tune(TuneArgs),
    /// Benchmarks: error tables, timing sweeps, decision boundaries.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Fit machines and save an estimator to a directory.
    Fit(FitArgs),
    /// Predict points with a saved estimator.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenArgs {
    /// linear-gaussian, friedman1, sparse-uncorrelated, moons, circles or linearly-separable
    kind: GeneratorKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Defaults to $COBRA_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column name or 0-based index.
    #[arg(long, default_value = "y")]
    target: TargetColumn,
    /// JSON list of machine specs; defaults to the roster for the task.
    #[arg(long)]
    machines: Option<PathBuf>,
    /// Defaults to $COBRA_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

/// Aggregation settings; each flag overrides the base configuration.
#[derive(Args)]
struct AggArgs {
    /// Temperature of the exponential weights.
    #[arg(long)]
    lambda: Option<f64>,
    /// Absolute COBRA radius.
    #[arg(long, conflicts_with = "epsilon_rel")]
    epsilon: Option<f64>,
    /// COBRA radius as a fraction of the prediction range.
    #[arg(long)]
    epsilon_rel: Option<f64>,
    /// Machines that must agree for COBRA selection.
    #[arg(long)]
    alpha: Option<usize>,
    /// exponential, gaussian, threshold or triangular
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Comma-separated machine weights for the unsupervised estimator.
    #[arg(long, value_delimiter = ',')]
    machine_weights: Option<Vec<f64>>,
    /// Scale of the input distance in the MixCobra baseline.
    #[arg(long)]
    input_weight: Option<f64>,
    /// What to do when no retained point reaches consensus: error or uniform.
    #[arg(long, value_parser = parse_fallback)]
    fallback: Option<ConsensusFallback>,
}

fn parse_fallback(s: &str) -> Result<ConsensusFallback, String> {
    match s {
        "error" => Ok(ConsensusFallback::Error),
        "uniform" => Ok(ConsensusFallback::Uniform),
        _ => Err(format!("expected `error` or `uniform`, got `{s}`")),
    }
}

impl AggArgs {
    fn apply(&self, mut c: AggregatorConfig) -> AggregatorConfig {
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = Threshold::Absolute(v);
        }
        if let Some(v) = self.epsilon_rel {
            c.epsilon = Threshold::Relative(v);
        }
        if let Some(v) = self.alpha {
            c.alpha = Some(v);
        }
        if let Some(v) = self.kernel {
            c.kernel.kind = v;
        }
        if let Some(v) = self.bandwidth {
            c.kernel.bandwidth = v;
        }
        if let Some(v) = &self.machine_weights {
            c.machine_weights = Some(v.clone());
        }
        if let Some(v) = self.input_weight {
            c.input_weight = v;
        }
        if let Some(v) = self.fallback {
            c.fallback = v;
        }
        c
    }
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    agg: AggArgs,
    #[arg(long, default_value = "kernelcobra")]
    estimator: EstimatorKind,
    /// Grid such as `lambda=log:1e-3:1e3:50`; repeat for several parameters.
    #[arg(long = "grid")]
    grids: Vec<GridSpec>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// JSON result; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-candidate CSV table.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Repeated train/test error table.
    Rmse {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregation time across `d=…`, `ell=…` or `m=…`.
    Timing {
        #[arg(long)]
        sweep: Sweep,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classifier labels over a grid covering 2-d data.
    Boundary {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        agg: AggArgs,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        /// Padding added around the data's bounding box.
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "kernelcobra")]
    estimator: EstimatorKind,
    /// JSON aggregator settings; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    agg: AggArgs,
    /// Tune over these grids before saving (default grids with `--tune`).
    #[arg(long = "grid")]
    grids: Vec<GridSpec>,
    #[arg(long)]
    tune: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    model_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model_dir: PathBuf,
    /// CSV of feature rows with a header.
    #[arg(long)]
    input: PathBuf,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn config_err(self) -> Outcome<T>;
    fn runtime_err(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn resolve_seed(flag: Option<u64>) -> Outcome<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v} is not an unsigned integer"))
            .config_err(),
        Err(_) => Ok(0),
    }
}

fn output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).config_err()?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

struct Loaded {
    data: Dataset,
    roster: Vec<MachineSpec>,
    seed: u64,
}

fn load(args: &DataArgs, kind: EstimatorKind) -> Outcome<Loaded> {
    let seed = resolve_seed(args.seed)?;
    let data = load_csv(&args.data, &args.target, true).config_err()?;
    let task = task_of(kind);
    let roster = match &args.machines {
        Some(path) => read_json::<Vec<MachineSpec>>(path).config_err()?,
        None => default_roster(task, seed),
    };
    if let Some(m) = roster.iter().find(|m| m.kind.task() != task) {
        return Err(Failure::Config(anyhow!("machine `{}` does not fit a {kind} estimator", m.display_name())));
    }
    Ok(Loaded { data, roster, seed })
}

fn gen(args: GenArgs) -> Outcome {
    let spec = GeneratorSpec::new(args.kind, args.n, args.d, args.noise, resolve_seed(args.seed)?);
    spec.validate().config_err()?;
    let data = generate(&spec).runtime_err()?;
    save_csv(&data, &args.out).runtime_err()?;
    log::info!("wrote {} rows to {}", data.n(), args.out.display());
    Ok(())
}

fn tune(args: TuneArgs) -> Outcome {
    let loaded = load(&args.data, args.estimator)?;
    let grids = if args.grids.is_empty() {
        default_grids(args.estimator, loaded.roster.len())
    } else {
        args.grids
    };
    let cv = CrossValidation::prepare(&loaded.data, &loaded.roster, args.folds, loaded.seed).runtime_err()?;
    let result = cv
        .grid_search(args.estimator, &args.agg.apply(AggregatorConfig::default()), &grids)
        .runtime_err()?;
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &result).runtime_err()?;
    writeln!(out).runtime_err()?;
    if let Some(path) = args.table {
        result.write_csv(output(Some(&path))?).runtime_err()?;
    }
    Ok(())
}

fn bench_rmse(config: &Path, out: Option<PathBuf>) -> Outcome {
    let config = BenchConfig::load(config)
        .and_then(BenchConfig::with_env_overrides)
        .config_err()?;
    let dir = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("bench-out"));
    let report = run_rmse_benchmark(&config).runtime_err()?;
    report.write(&dir).runtime_err()?;
    for ds in &report.datasets {
        for s in &ds.summary {
            println!(
                "{}\t{}\t{:.4} ± {:.4}{}",
                ds.name,
                s.model,
                s.mean,
                s.std,
                if s.best { "\t*" } else { "" }
            );
        }
    }
    let failed = report.failed_runs();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!(
            "{} runs failed; see {}",
            failed.len(),
            dir.join("failed_runs.json").display()
        )))
    }
}

fn bench_timing(sweep: Sweep, config: Option<PathBuf>, out: Option<PathBuf>) -> Outcome {
    let config = match config {
        Some(path) => BenchConfig::load(path),
        None => Ok(BenchConfig::new(Vec::new())),
    }
    .and_then(BenchConfig::with_env_overrides)
    .config_err()?;
    // Timings run on this thread only.
    let rows = run_timing_benchmark(&config, &sweep).runtime_err()?;
    write_timing_csv(&rows, output(out.as_deref())?).runtime_err()
}

fn fit_estimator(
    loaded: &Loaded,
    kind: EstimatorKind,
    base: AggregatorConfig,
    grids: Option<Vec<GridSpec>>,
    folds: usize,
) -> Outcome<(Aggregator, AggregatorConfig)> {
    base.validate(loaded.roster.len()).config_err()?;
    let config = match grids {
        Some(grids) => {
            let cv = CrossValidation::prepare(&loaded.data, &loaded.roster, folds, loaded.seed).runtime_err()?;
            let result = cv.grid_search(kind, &base, &grids).runtime_err()?;
            log::info!("selected {:?} (loss {:.4})", result.best, result.best_loss);
            apply_params(&base, &result.best)
        }
        None => base,
    };
    let split = split_dataset(&loaded.data, default_split_size(loaded.data.n()), loaded.seed).runtime_err()?;
    let machines = fit_machines(&loaded.roster, &split.train_half).runtime_err()?;
    Ok((Aggregator::from_split(machines, &split).runtime_err()?, config))
}

/// Without `--lambda` the temperature is tuned by cross-validation.
fn bench_boundary(data: DataArgs, agg: AggArgs, resolution: usize, margin: f64, out: PathBuf) -> Outcome {
    let kind = EstimatorKind::Classifier;
    let loaded = load(&data, kind)?;
    let bounds = Bounds::around(&loaded.data, margin).config_err()?;
    let base = agg.apply(AggregatorConfig::default());
    let grids = agg.lambda.is_none().then(|| default_grids(kind, loaded.roster.len()));
    let (agg, config) = fit_estimator(&loaded, kind, base, grids, 5)?;
    let classifier = FittedEstimator {
        aggregator: &agg,
        kind,
        config: &config,
    };
    let cells = export_decision_boundary(&classifier, bounds, resolution).runtime_err()?;
    write_boundary_csv(&cells, output(Some(&out))?).runtime_err()
}

fn fit(args: FitArgs) -> Outcome {
    let loaded = load(&args.data, args.estimator)?;
    let base = args.agg.apply(match &args.config {
        Some(path) => read_json::<AggregatorConfig>(path).config_err()?,
        None => AggregatorConfig::default(),
    });
    let grids = match (args.grids.is_empty(), args.tune) {
        (false, _) => Some(args.grids),
        (true, true) => Some(default_grids(args.estimator, loaded.roster.len())),
        (true, false) => None,
    };
    let (agg, config) = fit_estimator(&loaded, args.estimator, base, grids, args.folds)?;
    SavedEstimator {
        kind: args.estimator,
        config,
        machines: agg.machines().to_vec(),
        retained: agg.retained().clone(),
    }
    .save(&args.model_dir)
    .runtime_err()
}

fn predict(args: PredictArgs) -> Outcome {
    let saved = SavedEstimator::load(&args.model_dir).config_err()?;
    let file = File::open(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))
        .config_err()?;
    let points = read_points_csv(file, true).config_err()?;
    let agg = saved.aggregator().runtime_err()?;
    let outcomes = agg.predict_batch(saved.kind, &saved.config, &points).runtime_err()?;
    let mut out = csv::Writer::from_writer(output(args.out.as_deref())?);
    out.write_record(["prediction"]).runtime_err()?;
    for o in outcomes {
        out.write_record([o.prediction.as_f64().to_string()]).runtime_err()?;
    }
    out.flush().runtime_err()
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Tune(args) => tune(args),
        Command::Bench(BenchCommand::Rmse { config, out }) => bench_rmse(&config, out),
        Command::Bench(BenchCommand::Timing { sweep, config, out }) => bench_timing(sweep, config, out),
        Command::Bench(BenchCommand::Boundary {
            data,
            agg,
            resolution,
            margin,
            out,
        }) => bench_boundary(data, agg, resolution, margin, out),
        Command::Fit(args) => fit(args),
        Command::Predict(args) => predict(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
