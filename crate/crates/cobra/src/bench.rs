//! Experiment runner: repeated train/test error tables, aggregation timing
//! sweeps and decision-boundary grids.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, AggregatorConfig, ConsensusFallback, EstimatorKind};
use crate::data::{default_split_size, derive_seed, mean, median, split_dataset, std_dev, train_test_split, Dataset};
use crate::datagen::{generate, load_csv, GeneratorKind, GeneratorSpec, TargetColumn};
use crate::error::{CobraError, Result};
use crate::machines::{default_roster, fit_machines, MachineKind, MachineSpec, Task, TrainedMachine};
use crate::tuning::{apply_params, default_grids, task_of, CrossValidation, GridSpec, LossKind, ParamSet, PointPredictor};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "COBRA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Generator {
        generator: GeneratorKind,
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
        noise: f64,
    },
    Csv {
        path: PathBuf,
        target: TargetColumn,
        #[serde(default = "yes")]
        has_header: bool,
        #[serde(default)]
        task: Option<Task>,
    },
}

fn default_d() -> usize {
    10
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: DataSource,
    /// Overrides the benchmark-wide machine roster for this dataset.
    #[serde(default)]
    pub machines: Option<Vec<MachineSpec>>,
}

impl DatasetSpec {
    pub fn task(&self) -> Task {
        match &self.source {
            DataSource::Generator { generator, .. } => generator.task(),
            DataSource::Csv { task, .. } => task.unwrap_or(Task::Regression),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneDirective {
    /// Grid strings such as `lambda=log:1e-3:1e3:50`; empty means the
    /// default grids for the estimator.
    #[serde(default)]
    pub grids: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    5
}

impl TuneDirective {
    pub fn parsed_grids(&self, kind: EstimatorKind, n_machines: usize) -> Result<Vec<GridSpec>> {
        if self.grids.is_empty() {
            Ok(default_grids(kind, n_machines))
        } else {
            self.grids.iter().map(|g| g.parse()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: EstimatorKind,
    #[serde(default)]
    pub config: AggregatorConfig,
    #[serde(default)]
    pub tune: Option<TuneDirective>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            name: None,
            kind,
            config: AggregatorConfig::default(),
            tune: None,
        }
    }

    pub fn with_fallback(mut self, fallback: ConsensusFallback) -> Self {
        self.config.fallback = fallback;
        self
    }

    pub fn tuned(mut self, directive: TuneDirective) -> Self {
        self.tune = Some(directive);
        self
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.to_string())
    }
}

/// Defaults for timing sweeps; the swept quantity replaces its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// Rows used to fit the machines.
    pub n_fit: usize,
    /// Retained points `ℓ`.
    pub n_retained: usize,
    pub d: usize,
    /// Machines drawn cyclically from `roster`.
    pub n_machines: usize,
    pub roster: Vec<MachineSpec>,
    pub queries: usize,
    pub repetitions: usize,
    pub lambda: f64,
    pub input_weight: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            n_fit: 200,
            n_retained: 500,
            d: 10,
            n_machines: 4,
            roster: vec![
                MachineSpec::new(MachineKind::ridge()),
                MachineSpec::new(MachineKind::lasso()),
                MachineSpec::new(MachineKind::decision_tree()),
                MachineSpec::new(MachineKind::knn()),
            ],
            queries: 100,
            repetitions: 15,
            lambda: 1.0,
            input_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    /// Benchmark-wide roster; `None` picks the default roster per task.
    #[serde(default)]
    pub machines: Option<Vec<MachineSpec>>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub timing: TimingConfig,
}

fn default_estimators() -> Vec<EstimatorSpec> {
    let tune = TuneDirective {
        grids: Vec::new(),
        folds: default_folds(),
    };
    vec![
        EstimatorSpec::new(EstimatorKind::KernelCobra).tuned(tune.clone()),
        EstimatorSpec::new(EstimatorKind::Cobra)
            .with_fallback(ConsensusFallback::Uniform)
            .tuned(tune.clone()),
        EstimatorSpec::new(EstimatorKind::Classifier).tuned(tune),
    ]
}

fn default_runs() -> usize {
    20
}

fn default_test_fraction() -> f64 {
    0.25
}

impl BenchConfig {
    pub fn new(datasets: Vec<DatasetSpec>) -> Self {
        Self {
            datasets,
            estimators: default_estimators(),
            machines: None,
            runs: default_runs(),
            test_fraction: default_test_fraction(),
            seed: 0,
            output_dir: None,
            timing: TimingConfig::default(),
        }
    }

    /// Read and validate a JSON config. Relative CSV paths resolve against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CobraError::io(path, e))?;
        let mut config: BenchConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for ds in &mut config.datasets {
            if let DataSource::Csv { path, .. } = &mut ds.source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Apply `COBRA_SEED` if it is set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(value) = std::env::var(SEED_ENV) {
            self.seed = value
                .trim()
                .parse()
                .map_err(|_| CobraError::InvalidParameter(format!("{SEED_ENV}={value} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(CobraError::InvalidParameter(msg));
        if self.runs == 0 {
            return invalid("runs must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return invalid(format!("test fraction {} must lie in (0, 1)", self.test_fraction));
        }
        let mut names = HashSet::new();
        for ds in &self.datasets {
            if !names.insert(ds.name.as_str()) {
                return invalid(format!("dataset `{}` appears twice", ds.name));
            }
            match &ds.source {
                DataSource::Generator { generator, n, d, noise } => {
                    GeneratorSpec::new(*generator, *n, *d, *noise, 0).validate()?;
                }
                DataSource::Csv { path, .. } => {
                    if !path.is_file() {
                        return invalid(format!("dataset file {} does not exist", path.display()));
                    }
                }
            }
            for m in ds.machines.iter().flatten() {
                m.kind.validate()?;
            }
        }
        let mut names = HashSet::new();
        for est in &self.estimators {
            if !names.insert(est.display_name()) {
                return invalid(format!("estimator `{}` appears twice", est.display_name()));
            }
            if let Some(t) = &est.tune {
                if t.folds < 2 {
                    return invalid(format!("estimator `{}` needs at least 2 folds", est.display_name()));
                }
                for g in &t.grids {
                    g.parse::<GridSpec>()?;
                }
            }
        }
        for m in self.machines.iter().flatten() {
            m.kind.validate()?;
        }
        if self.timing.repetitions == 0 || self.timing.queries == 0 || self.timing.n_machines == 0 {
            return invalid("timing repetitions, queries and machine count must be positive".into());
        }
        if self.timing.roster.is_empty() {
            return invalid("timing roster is empty".into());
        }
        Ok(())
    }

    fn roster_for(&self, ds: &DatasetSpec, seed: u64) -> Vec<MachineSpec> {
        let task = ds.task();
        match ds.machines.as_ref().or(self.machines.as_ref()) {
            Some(list) => list.iter().filter(|m| m.kind.task() == task).cloned().collect(),
            None => default_roster(task, seed),
        }
    }

    fn estimators_for(&self, task: Task) -> Vec<&EstimatorSpec> {
        self.estimators.iter().filter(|e| task_of(e.kind) == task).collect()
    }
}

/// Test-set result of one model in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: String,
    pub estimator: bool,
    /// RMSE for regression, misclassification rate for classification.
    pub loss: f64,
    /// Per-point absolute errors (0/1 for classification).
    pub abs_errors: Vec<f64>,
    /// Test points answered by the uniform no-consensus fallback.
    pub fallbacks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned: Option<ParamSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Ok { models: Vec<ModelRun> },
    Failed { cause: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
}

impl RunRecord {
    pub fn models(&self) -> &[ModelRun] {
        match &self.status {
            RunStatus::Ok { models } => models,
            RunStatus::Failed { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub estimator: bool,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    /// Lowest mean loss on this dataset.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub task: Task,
    pub loss: LossKind,
    pub succeeded: usize,
    pub failed: usize,
    pub summary: Vec<ModelSummary>,
    pub runs: Vec<RunRecord>,
}

impl DatasetReport {
    pub fn summary_of(&self, model: &str) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }

    /// Per-run losses of `model` over successful runs, in run order.
    pub fn losses(&self, model: &str) -> Vec<f64> {
        self.runs
            .iter()
            .flat_map(|r| r.models().iter().filter(|m| m.model == model).map(|m| m.loss))
            .collect()
    }
}

/// Wall-clock seconds spent per phase in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub dataset: String,
    pub run: usize,
    pub fit_machines: f64,
    pub build_matrix: f64,
    pub tune: f64,
    pub predict: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub runs: usize,
    pub datasets: Vec<DatasetReport>,
    /// Kept out of `report.json` so that file is reproducible.
    #[serde(skip)]
    pub timings: Vec<PhaseTimings>,
}

impl BenchReport {
    pub fn dataset(&self, name: &str) -> Option<&DatasetReport> {
        self.datasets.iter().find(|d| d.name == name)
    }

    /// `(dataset, run, cause)` for every failed run.
    pub fn failed_runs(&self) -> Vec<(String, usize, String)> {
        self.datasets
            .iter()
            .flat_map(|d| {
                d.runs.iter().filter_map(move |r| match &r.status {
                    RunStatus::Failed { cause } => Some((d.name.clone(), r.run, cause.clone())),
                    RunStatus::Ok { .. } => None,
                })
            })
            .collect()
    }

    /// Write `report.json`, `summary.csv`, `errors.csv`, `timings.json` and,
    /// when runs failed, `failed_runs.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| CobraError::io(dir, e))?;
        write_json(&dir.join("report.json"), self)?;
        write_json(&dir.join("timings.json"), &self.timings)?;

        let mut summary = csv_writer(&dir.join("summary.csv"))?;
        summary.write_record(["dataset", "model", "estimator", "mean", "std", "runs", "best"])?;
        for ds in &self.datasets {
            for s in &ds.summary {
                summary.write_record([
                    ds.name.clone(),
                    s.model.clone(),
                    s.estimator.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    s.runs.to_string(),
                    s.best.to_string(),
                ])?;
            }
        }
        summary.flush().map_err(|e| CobraError::io(dir.join("summary.csv"), e))?;

        let mut errors = csv_writer(&dir.join("errors.csv"))?;
        errors.write_record(["dataset", "run", "model", "point", "abs_error", "sq_error"])?;
        for ds in &self.datasets {
            for run in &ds.runs {
                for m in run.models() {
                    for (i, e) in m.abs_errors.iter().enumerate() {
                        errors.write_record([
                            ds.name.clone(),
                            run.run.to_string(),
                            m.model.clone(),
                            i.to_string(),
                            e.to_string(),
                            (e * e).to_string(),
                        ])?;
                    }
                }
            }
        }
        errors.flush().map_err(|e| CobraError::io(dir.join("errors.csv"), e))?;

        let failed = self.failed_runs();
        let manifest = dir.join("failed_runs.json");
        if failed.is_empty() {
            if manifest.exists() {
                std::fs::remove_file(&manifest).map_err(|e| CobraError::io(&manifest, e))?;
            }
        } else {
            let rows: Vec<_> = failed
                .into_iter()
                .map(|(dataset, run, cause)| serde_json::json!({"dataset": dataset, "run": run, "cause": cause}))
                .collect();
            write_json(&manifest, &rows)?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CobraError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| CobraError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn seconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn per_point_errors(loss: LossKind, predictions: &[f64], targets: &[f64]) -> Vec<f64> {
    predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| match loss {
            LossKind::Rmse => (p - y).abs(),
            LossKind::Misclassification => f64::from(u8::from(p != y)),
        })
        .collect()
}

fn model_run(model: String, estimator: bool, loss: LossKind, predictions: &[f64], targets: &[f64]) -> ModelRun {
    ModelRun {
        model,
        estimator,
        loss: loss.compute(predictions, targets),
        abs_errors: per_point_errors(loss, predictions, targets),
        fallbacks: 0,
        tuned: None,
    }
}

/// One run on already loaded data: split, fit, tune, score every estimator
/// and machine on the test part.
pub fn run_single(
    config: &BenchConfig,
    dataset: &DatasetSpec,
    data: &Dataset,
    seed: u64,
) -> Result<(Vec<ModelRun>, PhaseTimings)> {
    let task = dataset.task();
    let loss = if task == Task::Classification {
        LossKind::Misclassification
    } else {
        LossKind::Rmse
    };
    let roster = config.roster_for(dataset, seed);
    if roster.is_empty() {
        return Err(CobraError::EmptyEnsemble);
    }
    let (train, test) = train_test_split(data, config.test_fraction, derive_seed(seed, 1))?;
    let split = split_dataset(&train, default_split_size(train.n()), derive_seed(seed, 2))?;
    let targets = test.require_targets()?;

    let start = Instant::now();
    let machines = fit_machines(&roster, &split.train_half)?;
    let fit_machines_s = seconds(start);

    let start = Instant::now();
    let aggregator = Aggregator::from_split(machines, &split)?;
    let build_matrix_s = seconds(start);

    let estimators = config.estimators_for(task);
    let start = Instant::now();
    let needs_cv = estimators.iter().find_map(|e| e.tune.as_ref().map(|t| t.folds));
    let cv = match needs_cv {
        Some(folds) => Some(CrossValidation::prepare(&train, &roster, folds, derive_seed(seed, 3))?),
        None => None,
    };
    let mut chosen = Vec::with_capacity(estimators.len());
    for est in &estimators {
        let (cfg, params) = match &est.tune {
            Some(t) => {
                let grids = t.parsed_grids(est.kind, roster.len())?;
                let result = if Some(t.folds) == needs_cv {
                    cv.as_ref().expect("prepared above").grid_search(est.kind, &est.config, &grids)?
                } else {
                    CrossValidation::prepare(&train, &roster, t.folds, derive_seed(seed, 3))?
                        .grid_search(est.kind, &est.config, &grids)?
                };
                (apply_params(&est.config, &result.best), Some(result.best))
            }
            None => (est.config.clone(), None),
        };
        chosen.push((est, cfg, params));
    }
    let tune_s = seconds(start);

    let start = Instant::now();
    let mut models = Vec::new();
    for (est, cfg, params) in chosen {
        let outcomes = aggregator.predict_batch(est.kind, &cfg, &test)?;
        let predictions: Vec<f64> = outcomes.iter().map(|o| o.prediction.as_f64()).collect();
        let mut run = model_run(est.display_name(), true, loss, &predictions, targets);
        run.fallbacks = outcomes.iter().filter(|o| o.fell_back).count();
        run.tuned = params;
        models.push(run);
    }
    for m in aggregator.machines() {
        let predictions = test.rows().map(|x| m.predict(x)).collect::<Result<Vec<_>>>()?;
        models.push(model_run(m.name().to_string(), false, loss, &predictions, targets));
    }
    let predict_s = seconds(start);

    Ok((
        models,
        PhaseTimings {
            dataset: dataset.name.clone(),
            run: 0,
            fit_machines: fit_machines_s,
            build_matrix: build_matrix_s,
            tune: tune_s,
            predict: predict_s,
        },
    ))
}

/// Seed of run `run` on dataset number `dataset`.
pub fn run_seed(base: u64, dataset: usize, run: usize) -> u64 {
    derive_seed(derive_seed(base, dataset as u64), run as u64)
}

fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    match &spec.source {
        DataSource::Generator { generator, n, d, noise } => generate(&GeneratorSpec::new(*generator, *n, *d, *noise, seed)),
        DataSource::Csv {
            path,
            target,
            has_header,
            ..
        } => load_csv(path, target, *has_header),
    }
}

fn summarize(runs: &[RunRecord]) -> Vec<ModelSummary> {
    let mut order: Vec<(String, bool)> = Vec::new();
    let mut losses: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in runs.iter().flat_map(|r| r.models()) {
        if !losses.contains_key(&m.model) {
            order.push((m.model.clone(), m.estimator));
        }
        losses.entry(m.model.clone()).or_default().push(m.loss);
    }
    let mut summary: Vec<ModelSummary> = order
        .into_iter()
        .map(|(model, estimator)| {
            let l = &losses[&model];
            ModelSummary {
                mean: mean(l),
                std: std_dev(l),
                runs: l.len(),
                best: false,
                model,
                estimator,
            }
        })
        .collect();
    let best = summary
        .iter()
        .enumerate()
        .filter(|(_, s)| s.mean.is_finite())
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .map(|(i, _)| i);
    if let Some(i) = best {
        summary[i].best = true;
    }
    summary
}

/// Repeat the train/test protocol `config.runs` times per dataset. Runs
/// execute in parallel; a run that errors is recorded with its cause.
pub fn run_rmse_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut datasets = Vec::new();
    let mut timings = Vec::new();
    for (di, spec) in config.datasets.iter().enumerate() {
        let fixed = match spec.source {
            DataSource::Csv { .. } => Some(load_dataset(spec, 0)?),
            DataSource::Generator { .. } => None,
        };
        let results: Vec<(RunRecord, Option<PhaseTimings>)> = (0..config.runs)
            .into_par_iter()
            .map(|run| {
                let seed = run_seed(config.seed, di, run);
                let outcome = match &fixed {
                    Some(data) => run_single(config, spec, data, seed),
                    None => load_dataset(spec, seed).and_then(|data| run_single(config, spec, &data, seed)),
                };
                match outcome {
                    Ok((models, mut t)) => {
                        t.run = run;
                        (
                            RunRecord {
                                run,
                                seed,
                                status: RunStatus::Ok { models },
                            },
                            Some(t),
                        )
                    }
                    Err(e) => {
                        log::warn!("dataset {} run {run} failed: {e}", spec.name);
                        (
                            RunRecord {
                                run,
                                seed,
                                status: RunStatus::Failed { cause: e.to_string() },
                            },
                            None,
                        )
                    }
                }
            })
            .collect();
        let (runs, phase): (Vec<RunRecord>, Vec<Option<PhaseTimings>>) = results.into_iter().unzip();
        timings.extend(phase.into_iter().flatten());
        let failed = runs.iter().filter(|r| matches!(r.status, RunStatus::Failed { .. })).count();
        let task = spec.task();
        datasets.push(DatasetReport {
            name: spec.name.clone(),
            task,
            loss: if task == Task::Classification {
                LossKind::Misclassification
            } else {
                LossKind::Rmse
            },
            succeeded: runs.len() - failed,
            failed,
            summary: summarize(&runs),
            runs,
        });
    }
    Ok(BenchReport {
        seed: config.seed,
        runs: config.runs,
        datasets,
        timings,
    })
}

/// The quantity varied by a timing sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Dimension(Vec<usize>),
    Retained(Vec<usize>),
    Machines(Vec<usize>),
}

impl Sweep {
    pub fn label(&self) -> &'static str {
        match self {
            Sweep::Dimension(_) => "d",
            Sweep::Retained(_) => "ell",
            Sweep::Machines(_) => "m",
        }
    }

    pub fn values(&self) -> &[usize] {
        match self {
            Sweep::Dimension(v) | Sweep::Retained(v) | Sweep::Machines(v) => v,
        }
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values: Vec<String> = self.values().iter().map(usize::to_string).collect();
        write!(f, "{}={}", self.label(), values.join(","))
    }
}

impl FromStr for Sweep {
    type Err = CobraError;

    /// `d=10,100,1000`, `ell=250,500` or `m=2,4,8`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CobraError::InvalidParameter(format!("cannot parse sweep `{s}`"));
        let (name, list) = s.split_once('=').ok_or_else(bad)?;
        let values: Vec<usize> = list
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if values.is_empty() || values.contains(&0) {
            return Err(bad());
        }
        match name.trim() {
            "d" => Ok(Sweep::Dimension(values)),
            "ell" | "l" => Ok(Sweep::Retained(values)),
            "m" | "M" => Ok(Sweep::Machines(values)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep: String,
    pub value: usize,
    pub estimator: EstimatorKind,
    /// Seconds per query with machine predictions already computed.
    pub aggregation_median: f64,
    pub aggregation_std: f64,
    /// Seconds per query including the machines' own predictions.
    pub end_to_end_median: f64,
    pub end_to_end_std: f64,
}

pub const TIMED_ESTIMATORS: [EstimatorKind; 3] = [EstimatorKind::Cobra, EstimatorKind::KernelCobra, EstimatorKind::MixCobra];

/// Fitted state for one sweep value.
pub struct TimingFixture {
    pub aggregator: Aggregator,
    pub queries: Dataset,
    pub query_preds: Vec<Vec<f64>>,
}

impl TimingFixture {
    pub fn build(timing: &TimingConfig, n_retained: usize, d: usize, n_machines: usize, seed: u64) -> Result<Self> {
        let n = timing.n_fit + n_retained + timing.queries;
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, n, d.max(5), 1.0, seed))?;
        let idx = |lo: usize, hi: usize| (lo..hi).collect::<Vec<_>>();
        let fit = data.select(&idx(0, timing.n_fit));
        let retained = data.select(&idx(timing.n_fit, timing.n_fit + n_retained));
        let queries = data.select(&idx(timing.n_fit + n_retained, n)).without_targets();
        let roster: Vec<MachineSpec> = (0..n_machines)
            .map(|i| {
                let spec = timing.roster[i % timing.roster.len()].clone();
                let name = format!("{}-{i}", spec.display_name());
                spec.with_seed(derive_seed(seed, i as u64)).named(name)
            })
            .collect();
        let machines: Vec<TrainedMachine> = fit_machines(&roster, &fit)?;
        let aggregator = Aggregator::new(machines, retained)?;
        let query_preds = queries
            .rows()
            .map(|x| aggregator.query_predictions(x))
            .collect::<Result<_>>()?;
        Ok(Self {
            aggregator,
            queries,
            query_preds,
        })
    }

    /// Seconds per query over one pass of the aggregation step.
    pub fn time_aggregation(&self, kind: EstimatorKind, config: &AggregatorConfig) -> Result<f64> {
        let start = Instant::now();
        for (x, qp) in self.queries.rows().zip(&self.query_preds) {
            std::hint::black_box(self.aggregator.predict_from_query(kind, config, x, qp)?);
        }
        Ok(seconds(start) / self.queries.n() as f64)
    }

    /// Seconds per query including the machines' predictions.
    pub fn time_end_to_end(&self, kind: EstimatorKind, config: &AggregatorConfig) -> Result<f64> {
        let start = Instant::now();
        for x in self.queries.rows() {
            std::hint::black_box(self.aggregator.predict_outcome(kind, config, x)?);
        }
        Ok(seconds(start) / self.queries.n() as f64)
    }
}

/// Time each of cobra, kernelcobra and mixcobra across the sweep. Runs on the
/// calling thread only; every other setting stays at its `config.timing`
/// default.
pub fn run_timing_benchmark(config: &BenchConfig, sweep: &Sweep) -> Result<Vec<TimingRow>> {
    let timing = &config.timing;
    if sweep.values().is_empty() {
        return Err(CobraError::InvalidParameter("sweep is empty".into()));
    }
    let agg_config = AggregatorConfig {
        lambda: timing.lambda,
        input_weight: timing.input_weight,
        fallback: ConsensusFallback::Uniform,
        ..AggregatorConfig::default()
    };
    let fixtures = sweep
        .values()
        .iter()
        .enumerate()
        .map(|(vi, &value)| {
            let (ell, d, m) = match sweep {
                Sweep::Dimension(_) => (timing.n_retained, value, timing.n_machines),
                Sweep::Retained(_) => (value, timing.d, timing.n_machines),
                Sweep::Machines(_) => (timing.n_retained, timing.d, value),
            };
            TimingFixture::build(timing, ell, d, m, derive_seed(config.seed, vi as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for kind in TIMED_ESTIMATORS {
        // Repetitions cycle through the sweep values so slow drift in machine
        // speed affects every value alike. One untimed pass warms caches.
        for f in &fixtures {
            f.time_aggregation(kind, &agg_config)?;
        }
        let mut agg = vec![Vec::with_capacity(timing.repetitions); fixtures.len()];
        let mut e2e = agg.clone();
        for _ in 0..timing.repetitions {
            for (i, f) in fixtures.iter().enumerate() {
                agg[i].push(f.time_aggregation(kind, &agg_config)?);
                e2e[i].push(f.time_end_to_end(kind, &agg_config)?);
            }
        }
        for (i, &value) in sweep.values().iter().enumerate() {
            rows.push(TimingRow {
                sweep: sweep.label().to_string(),
                value,
                estimator: kind,
                aggregation_median: median(&agg[i]),
                aggregation_std: std_dev(&agg[i]),
                end_to_end_median: median(&e2e[i]),
                end_to_end_std: std_dev(&e2e[i]),
            });
        }
    }
    rows.sort_by_key(|r| sweep.values().iter().position(|&v| v == r.value));
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "sweep",
        "value",
        "estimator",
        "aggregation_median_s",
        "aggregation_std_s",
        "end_to_end_median_s",
        "end_to_end_std_s",
    ])?;
    for r in rows {
        wtr.write_record([
            r.sweep.clone(),
            r.value.to_string(),
            r.estimator.to_string(),
            r.aggregation_median.to_string(),
            r.aggregation_std.to_string(),
            r.end_to_end_median.to_string(),
            r.end_to_end_std.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| CobraError::io("<csv writer>", e))?;
    Ok(())
}

/// An axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

impl Bounds {
    pub fn new(x1: (f64, f64), x2: (f64, f64)) -> Self {
        Self { x1, x2 }
    }

    /// Bounding box of a 2-d dataset widened by `margin` on every side.
    pub fn around(data: &Dataset, margin: f64) -> Result<Self> {
        if data.d() != 2 {
            return Err(CobraError::shape("planar data dimension", 2, data.d()));
        }
        let b = data.bounds();
        Ok(Self {
            x1: (b[0].0 - margin, b[0].1 + margin),
            x2: (b[1].0 - margin, b[1].1 + margin),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x1: f64,
    pub x2: f64,
    pub label: f64,
}

/// Predicted label at every node of a `resolution × resolution` grid
/// spanning `bounds`, `x1` varying slowest.
pub fn export_decision_boundary(classifier: &dyn PointPredictor, bounds: Bounds, resolution: usize) -> Result<Vec<GridCell>> {
    if classifier.n_features() != 2 {
        return Err(CobraError::shape("classifier input dimension", 2, classifier.n_features()));
    }
    if resolution < 2 {
        return Err(CobraError::InvalidParameter(format!("grid resolution {resolution} must be at least 2")));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|j| lo + (hi - lo) * j as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (a1, a2) = (axis(bounds.x1), axis(bounds.x2));
    let coords: Vec<(f64, f64)> = a1.iter().flat_map(|&u| a2.iter().map(move |&v| (u, v))).collect();
    coords
        .into_par_iter()
        .enumerate()
        .map(|(i, (x1, x2))| {
            let label = classifier.predict_point(&[x1, x2]).map_err(|e| e.at_query(i))?;
            Ok(GridCell { x1, x2, label })
        })
        .collect()
}

pub fn write_boundary_csv<W: Write>(cells: &[GridCell], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["x1", "x2", "label"])?;
    for c in cells {
        wtr.write_record([c.x1.to_string(), c.x2.to_string(), c.label.to_string()])?;
    }
    wtr.flush().map_err(|e| CobraError::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{fit_machine, MachineKind};

    fn linear_spec(runs: usize) -> BenchConfig {
        let mut cfg = BenchConfig::new(vec![DatasetSpec {
            name: "linear".into(),
            source: DataSource::Generator {
                generator: GeneratorKind::LinearGaussian,
                n: 120,
                d: 4,
                noise: 0.0,
            },
            machines: None,
        }]);
        cfg.machines = Some(vec![
            MachineSpec::new(MachineKind::Ridge { alpha: 1e-10 }),
            MachineSpec::new(MachineKind::decision_tree()),
        ]);
        cfg.estimators = vec![
            EstimatorSpec::new(EstimatorKind::KernelCobra),
            EstimatorSpec::new(EstimatorKind::Cobra)
                .with_fallback(ConsensusFallback::Uniform)
                .tuned(TuneDirective {
                grids: vec!["epsilon_rel=0.05,0.2".into()],
                folds: 3,
            }),
        ];
        cfg.runs = runs;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn exact_linear_problem() {
        let report = run_rmse_benchmark(&linear_spec(1)).unwrap();
        let ds = report.dataset("linear").unwrap();
        assert_eq!((ds.succeeded, ds.failed), (1, 0));
        assert!(ds.summary_of("ridge").unwrap().mean <= 1e-6);
        for s in &ds.summary {
            assert!(s.mean.is_finite(), "{}", s.model);
        }
        assert!(ds.summary_of("ridge").unwrap().best);
        let cobra = &ds.runs[0].models()[1];
        assert!(cobra.tuned.as_ref().unwrap().contains_key(&crate::tuning::Param::EpsilonRel));
    }

    #[test]
    fn same_seed_same_errors() {
        let cfg = linear_spec(1);
        let data = load_dataset(&cfg.datasets[0], 5).unwrap();
        let (a, _) = run_single(&cfg, &cfg.datasets[0], &data, 5).unwrap();
        let (b, _) = run_single(&cfg, &cfg.datasets[0], &data, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_recomputes_from_raw_runs() {
        let report = run_rmse_benchmark(&linear_spec(3)).unwrap();
        let ds = &report.datasets[0];
        assert_eq!(ds.succeeded + ds.failed, 3);
        for s in &ds.summary {
            let losses = ds.losses(&s.model);
            assert_eq!(losses.len(), s.runs);
            assert!((mean(&losses) - s.mean).abs() <= 1e-9);
            assert!((std_dev(&losses) - s.std).abs() <= 1e-9);
            for run in &ds.runs {
                for m in run.models().iter().filter(|m| m.model == s.model) {
                    let sq: Vec<f64> = m.abs_errors.iter().map(|e| e * e).collect();
                    assert!((mean(&sq).sqrt() - m.loss).abs() <= 1e-9);
                }
            }
        }
        assert_eq!(ds.summary.iter().filter(|s| s.best).count(), 1);
    }

    #[test]
    fn failing_runs_are_recorded() {
        let mut cfg = linear_spec(2);
        // A radius this small leaves every test point without consensus.
        cfg.estimators = vec![EstimatorSpec {
            config: AggregatorConfig {
                epsilon: crate::aggregation::Threshold::Absolute(1e-12),
                alpha: Some(2),
                ..AggregatorConfig::default()
            },
            ..EstimatorSpec::new(EstimatorKind::Cobra)
        }];
        let report = run_rmse_benchmark(&cfg).unwrap();
        let ds = &report.datasets[0];
        assert_eq!((ds.succeeded, ds.failed), (0, 2));
        assert_eq!(report.failed_runs().len(), 2);
        assert!(report.failed_runs()[0].2.contains("consensus"));
    }

    #[test]
    fn uniform_fallback_is_counted() {
        let mut cfg = linear_spec(1);
        cfg.estimators = vec![EstimatorSpec {
            config: AggregatorConfig {
                epsilon: crate::aggregation::Threshold::Absolute(1e-12),
                alpha: Some(2),
                fallback: ConsensusFallback::Uniform,
                ..AggregatorConfig::default()
            },
            ..EstimatorSpec::new(EstimatorKind::Cobra)
        }];
        let report = run_rmse_benchmark(&cfg).unwrap();
        let run = &report.datasets[0].runs[0];
        assert_eq!(run.models()[0].fallbacks, 30);
    }

    #[test]
    fn config_validation() {
        let mut cfg = linear_spec(1);
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = linear_spec(1);
        cfg.test_fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = linear_spec(1);
        cfg.datasets.push(DatasetSpec {
            name: "missing".into(),
            source: DataSource::Csv {
                path: "/definitely/not/here.csv".into(),
                target: TargetColumn::Name("y".into()),
                has_header: true,
                task: None,
            },
            machines: None,
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: BenchConfig = serde_json::from_str(
            r#"{"datasets": [{"name": "f", "source": "generator", "generator": "friedman1", "n": 800, "noise": 1.0}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.runs, 20);
        assert_eq!(cfg.test_fraction, 0.25);
        assert_eq!(cfg.estimators.len(), 3);
        assert_eq!(cfg.datasets[0].task(), Task::Regression);
        assert_eq!(cfg.estimators_for(Task::Regression).len(), 2);
        cfg.validate().unwrap();
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!("d=10,100,1000".parse::<Sweep>().unwrap(), Sweep::Dimension(vec![10, 100, 1000]));
        assert_eq!("ell=5".parse::<Sweep>().unwrap(), Sweep::Retained(vec![5]));
        assert_eq!("m=2,4".parse::<Sweep>().unwrap().to_string(), "m=2,4");
        for bad in ["d", "q=1", "d=", "d=0", "d=x"] {
            assert!(bad.parse::<Sweep>().is_err(), "{bad}");
        }
    }

    #[test]
    fn timing_rows_cover_sweep() {
        let mut cfg = BenchConfig::new(Vec::new());
        cfg.timing.repetitions = 2;
        cfg.timing.queries = 5;
        cfg.timing.n_retained = 20;
        cfg.timing.n_fit = 30;
        let rows = run_timing_benchmark(&cfg, &Sweep::Machines(vec![1, 3])).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.aggregation_median >= 0.0 && r.end_to_end_median >= 0.0);
        }
        let mut buf = Vec::new();
        write_timing_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[derive(Debug)]
    struct Constant(usize);

    impl PointPredictor for Constant {
        fn n_features(&self) -> usize {
            self.0
        }

        fn predict_point(&self, _x: &[f64]) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn boundary_grid_examples() {
        let cells = export_decision_boundary(&Constant(2), Bounds::new((0.0, 1.0), (0.0, 1.0)), 3).unwrap();
        assert_eq!(cells.len(), 9);
        assert!(cells.iter().all(|c| c.label == 1.0));
        let coords: Vec<(f64, f64)> = cells.iter().map(|c| (c.x1, c.x2)).collect();
        let axis = [0.0, 0.5, 1.0];
        let expected: Vec<(f64, f64)> = axis.iter().flat_map(|&u| axis.iter().map(move |&v| (u, v))).collect();
        assert_eq!(coords, expected);
        let mut buf = Vec::new();
        write_boundary_csv(&cells, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next(), Some("x1,x2,label"));
    }

    #[test]
    fn boundary_rejects_bad_input() {
        let err = export_decision_boundary(&Constant(3), Bounds::new((0.0, 1.0), (0.0, 1.0)), 3).unwrap_err();
        assert!(matches!(err, CobraError::Shape { expected: 2, got: 3, .. }));
        assert!(export_decision_boundary(&Constant(2), Bounds::new((0.0, 1.0), (0.0, 1.0)), 1).is_err());
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 10, 5, 0.0, 1)).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::ridge()), &data).unwrap();
        assert!(export_decision_boundary(&m, Bounds::new((0.0, 1.0), (0.0, 1.0)), 3).is_err());
    }

    #[test]
    fn report_files_are_reproducible() {
        let cfg = linear_spec(2);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_rmse_benchmark(&cfg).unwrap().write(a.path()).unwrap();
        run_rmse_benchmark(&cfg).unwrap().write(b.path()).unwrap();
        for file in ["report.json", "summary.csv", "errors.csv"] {
            let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(file)).unwrap();
            assert_eq!(read(&a), read(&b), "{file}");
        }
        assert!(a.path().join("timings.json").exists());
        assert!(!a.path().join("failed_runs.json").exists());
        let parsed: BenchReport = serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(parsed.datasets, run_rmse_benchmark(&cfg).unwrap().datasets);
    }
}
