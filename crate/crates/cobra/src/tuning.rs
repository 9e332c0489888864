//! Grid search with k-fold cross-validation, and per-point error reports.
//!
//! Inside every fold the training portion is split again into `D_k` and
//! `D_ℓ`; machines are fitted on `D_k` once per fold and shared by all
//! candidates, so a candidate costs only aggregation work.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, AggregatorConfig, ConsensusFallback, EstimatorKind, Threshold};
use crate::data::{default_split_size, derive_seed, mean, rng_from_seed, rmse, split_dataset, std_dev, Dataset};
use crate::error::{CobraError, Result};
use crate::machines::{fit_machines, MachineSpec, Task, TrainedMachine};

/// A tunable aggregation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Lambda,
    /// Absolute COBRA radius.
    Epsilon,
    /// COBRA radius as a fraction of the prediction-matrix range.
    EpsilonRel,
    Alpha,
    Bandwidth,
    InputWeight,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Lambda,
        Param::Epsilon,
        Param::EpsilonRel,
        Param::Alpha,
        Param::Bandwidth,
        Param::InputWeight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Param::Lambda => "lambda",
            Param::Epsilon => "epsilon",
            Param::EpsilonRel => "epsilon_rel",
            Param::Alpha => "alpha",
            Param::Bandwidth => "bandwidth",
            Param::InputWeight => "input_weight",
        }
    }

    fn check(&self, value: f64) -> Result<()> {
        let ok = match self {
            Param::Lambda | Param::InputWeight => value >= 0.0 && value.is_finite(),
            Param::Epsilon | Param::EpsilonRel | Param::Bandwidth => value > 0.0 && value.is_finite(),
            Param::Alpha => value >= 1.0 && value.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CobraError::InvalidParameter(format!("{value} is outside the domain of {self}")))
        }
    }

    pub fn apply(&self, config: &mut AggregatorConfig, value: f64) {
        match self {
            Param::Lambda => config.lambda = value,
            Param::Epsilon => config.epsilon = Threshold::Absolute(value),
            Param::EpsilonRel => config.epsilon = Threshold::Relative(value),
            Param::Alpha => config.alpha = Some(value as usize),
            Param::Bandwidth => config.kernel.bandwidth = value,
            Param::InputWeight => config.input_weight = value,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Param {
    type Err = CobraError;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| CobraError::InvalidParameter(format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridValues {
    List(Vec<f64>),
    Linear { lo: f64, hi: f64, count: usize },
    Log { lo: f64, hi: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub param: Param,
    pub values: GridValues,
}

impl GridSpec {
    pub fn list(param: Param, values: Vec<f64>) -> Self {
        Self {
            param,
            values: GridValues::List(values),
        }
    }

    pub fn linear(param: Param, lo: f64, hi: f64, count: usize) -> Self {
        Self {
            param,
            values: GridValues::Linear { lo, hi, count },
        }
    }

    pub fn log(param: Param, lo: f64, hi: f64, count: usize) -> Self {
        Self {
            param,
            values: GridValues::Log { lo, hi, count },
        }
    }

    /// Candidate values in ascending order, duplicates removed.
    pub fn candidates(&self) -> Result<Vec<f64>> {
        let spaced = |lo: f64, hi: f64, count: usize| -> Vec<f64> {
            if count == 1 {
                return vec![lo];
            }
            (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
        };
        let mut values = match &self.values {
            GridValues::List(v) => v.clone(),
            GridValues::Linear { lo, hi, count } => spaced(*lo, *hi, *count),
            GridValues::Log { lo, hi, count } => {
                if !(*lo > 0.0 && *hi > 0.0) {
                    return Err(CobraError::InvalidParameter("log grid bounds must be positive".into()));
                }
                spaced(lo.log10(), hi.log10(), *count)
                    .into_iter()
                    .map(|e| 10f64.powf(e))
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(CobraError::InvalidParameter(format!("grid for {} is empty", self.param)));
        }
        for &v in &values {
            self.param.check(v)?;
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(values)
    }
}

impl FromStr for GridSpec {
    type Err = CobraError;

    /// `lambda=log:1e-3:1e3:50`, `epsilon_rel=lin:0.001:1:100` or `alpha=1,2,3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CobraError::InvalidParameter(format!("cannot parse grid `{s}`"));
        let (name, spec) = s.split_once('=').ok_or_else(bad)?;
        let param: Param = name.trim().parse()?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let values = match spec.split_once(':') {
            Some((scale @ ("log" | "lin"), rest)) => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [lo, hi, count] = parts.as_slice() else {
                    return Err(bad());
                };
                let (lo, hi) = (num(lo)?, num(hi)?);
                let count: usize = count.trim().parse().map_err(|_| bad())?;
                if count == 0 {
                    return Err(bad());
                }
                if scale == "log" {
                    GridValues::Log { lo, hi, count }
                } else {
                    GridValues::Linear { lo, hi, count }
                }
            }
            Some(_) => return Err(bad()),
            None => GridValues::List(spec.split(',').map(num).collect::<Result<_>>()?),
        };
        Ok(GridSpec { param, values })
    }
}

/// Grids used when none are given: `λ` on 50 log-spaced points in
/// `[1e-3, 1e3]`; `ε` on 100 linear points in `[1e-3·R, R]` with `R` the
/// prediction range; `alpha` over `1..=M`; bandwidth on the `λ` grid.
pub fn default_grids(kind: EstimatorKind, n_machines: usize) -> Vec<GridSpec> {
    let lambda = GridSpec::log(Param::Lambda, 1e-3, 1e3, 50);
    match kind {
        EstimatorKind::KernelCobra | EstimatorKind::Unsupervised | EstimatorKind::Classifier => vec![lambda],
        EstimatorKind::Cobra => vec![
            GridSpec::linear(Param::EpsilonRel, 1e-3, 1.0, 100),
            GridSpec::list(Param::Alpha, (1..=n_machines).map(|a| a as f64).collect()),
        ],
        EstimatorKind::GeneralKernel => vec![GridSpec::log(Param::Bandwidth, 1e-3, 1e3, 50)],
        EstimatorKind::MixCobra => vec![lambda, GridSpec::log(Param::InputWeight, 1e-3, 1e1, 9)],
    }
}

pub type ParamSet = BTreeMap<Param, f64>;

pub fn apply_params(base: &AggregatorConfig, params: &ParamSet) -> AggregatorConfig {
    let mut config = base.clone();
    for (p, &v) in params {
        p.apply(&mut config, v);
    }
    config
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub params: ParamSet,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
    pub std_loss: f64,
    /// Share of validation points where no retained point reached consensus.
    pub no_consensus_fraction: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub estimator: EstimatorKind,
    pub best: ParamSet,
    pub best_loss: f64,
    pub loss: LossKind,
    pub candidates: Vec<CandidateResult>,
    pub folds: usize,
    pub seed: u64,
}

impl TuneResult {
    /// Per-candidate table: one column per parameter, then the statistics.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let params: Vec<Param> = self.candidates.first().map(|c| c.params.keys().copied().collect()).unwrap_or_default();
        let mut header: Vec<String> = params.iter().map(|p| p.to_string()).collect();
        header.extend(["mean_loss", "std_loss", "no_consensus_fraction", "feasible", "best"].map(String::from));
        wtr.write_record(&header)?;
        for c in &self.candidates {
            let mut row: Vec<String> = c.params.values().map(f64::to_string).collect();
            row.push(c.mean_loss.to_string());
            row.push(c.std_loss.to_string());
            row.push(c.no_consensus_fraction.to_string());
            row.push(c.feasible.to_string());
            row.push((c.params == self.best).to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| CobraError::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Rmse,
    Misclassification,
}

impl LossKind {
    pub fn for_estimator(kind: EstimatorKind) -> Self {
        if kind.is_classifier() {
            LossKind::Misclassification
        } else {
            LossKind::Rmse
        }
    }

    pub fn compute(&self, predictions: &[f64], targets: &[f64]) -> f64 {
        match self {
            LossKind::Rmse => rmse(predictions, targets),
            LossKind::Misclassification => {
                let wrong = predictions.iter().zip(targets).filter(|(p, y)| p != y).count();
                wrong as f64 / targets.len() as f64
            }
        }
    }
}

struct PreparedFold {
    aggregator: Aggregator,
    validation: Dataset,
    query_preds: Vec<Vec<f64>>,
}

/// Folds with machines already fitted, reusable across candidates and
/// estimators.
pub struct CrossValidation {
    folds: Vec<PreparedFold>,
    seed: u64,
}

struct FoldEvaluation {
    loss: f64,
    no_consensus: usize,
    points: usize,
}

impl CrossValidation {
    pub fn prepare(data: &Dataset, machines: &[MachineSpec], folds: usize, seed: u64) -> Result<Self> {
        let n = data.n();
        data.require_targets()?;
        if folds < 2 {
            return Err(CobraError::InvalidParameter(format!("need at least 2 folds, got {folds}")));
        }
        if n < 2 * folds {
            return Err(CobraError::InvalidParameter(format!("{n} rows cannot fill {folds} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(seed));
        let prepared = (0..folds)
            .into_par_iter()
            .map(|f| {
                let (mut train, mut valid) = (Vec::new(), Vec::new());
                for (pos, &i) in order.iter().enumerate() {
                    if pos % folds == f {
                        valid.push(i);
                    } else {
                        train.push(i);
                    }
                }
                let train = data.select(&train);
                let validation = data.select(&valid);
                let split = split_dataset(&train, default_split_size(train.n()), derive_seed(seed, f as u64))?;
                let fitted: Vec<TrainedMachine> = fit_machines(machines, &split.train_half)?;
                let aggregator = Aggregator::from_split(fitted, &split)?;
                let query_preds = validation
                    .rows()
                    .map(|x| aggregator.query_predictions(x))
                    .collect::<Result<_>>()?;
                Ok(PreparedFold {
                    aggregator,
                    validation,
                    query_preds,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { folds: prepared, seed })
    }

    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn n_machines(&self) -> usize {
        self.folds[0].aggregator.n_machines()
    }

    fn evaluate_fold(fold: &PreparedFold, kind: EstimatorKind, config: &AggregatorConfig, loss: LossKind) -> Result<FoldEvaluation> {
        let strict = AggregatorConfig {
            fallback: ConsensusFallback::Uniform,
            ..config.clone()
        };
        let mut no_consensus = 0;
        let mut predictions = Vec::with_capacity(fold.validation.n());
        for (x, qp) in fold.validation.rows().zip(&fold.query_preds) {
            let outcome = fold.aggregator.predict_from_query(kind, &strict, x, qp)?;
            no_consensus += usize::from(outcome.fell_back);
            predictions.push(outcome.prediction.as_f64());
        }
        Ok(FoldEvaluation {
            loss: loss.compute(&predictions, fold.validation.require_targets()?),
            no_consensus,
            points: predictions.len(),
        })
    }

    /// Cross-validated loss of one parameter setting. Validation points
    /// without consensus are scored with uniform weights and counted.
    pub fn evaluate(&self, kind: EstimatorKind, config: &AggregatorConfig) -> Result<CandidateResult> {
        config.validate(self.n_machines())?;
        let loss = LossKind::for_estimator(kind);
        let evals = self
            .folds
            .iter()
            .map(|f| Self::evaluate_fold(f, kind, config, loss))
            .collect::<Result<Vec<_>>>()?;
        let fold_losses: Vec<f64> = evals.iter().map(|e| e.loss).collect();
        let missing: usize = evals.iter().map(|e| e.no_consensus).sum();
        let total: usize = evals.iter().map(|e| e.points).sum();
        let no_consensus_fraction = missing as f64 / total as f64;
        Ok(CandidateResult {
            params: ParamSet::new(),
            mean_loss: mean(&fold_losses),
            std_loss: std_dev(&fold_losses),
            fold_losses,
            no_consensus_fraction,
            feasible: no_consensus_fraction <= 0.5,
        })
    }

    /// Exhaustive search over the cartesian product of `grids`. The best
    /// candidate has the lowest mean loss among feasible ones; ties keep the
    /// candidate with the smallest values in grid order.
    pub fn grid_search(&self, kind: EstimatorKind, base: &AggregatorConfig, grids: &[GridSpec]) -> Result<TuneResult> {
        if grids.is_empty() {
            return Err(CobraError::InvalidParameter("no grids to search".into()));
        }
        let axes: Vec<(Param, Vec<f64>)> = grids
            .iter()
            .map(|g| Ok((g.param, g.candidates()?)))
            .collect::<Result<_>>()?;
        let mut combos: Vec<ParamSet> = vec![ParamSet::new()];
        for (param, values) in &axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |&v| {
                        let mut next = c.clone();
                        next.insert(*param, v);
                        next
                    })
                })
                .collect();
        }
        let alpha_cap = self.n_machines() as f64;
        if combos.iter().any(|c| c.get(&Param::Alpha).is_some_and(|&a| a > alpha_cap)) {
            return Err(CobraError::InvalidParameter(format!("alpha grid exceeds the {alpha_cap} machines")));
        }

        let candidates: Vec<CandidateResult> = combos
            .into_par_iter()
            .map(|params| {
                let config = apply_params(base, &params);
                let mut result = self.evaluate(kind, &config)?;
                result.params = params;
                Ok(result)
            })
            .collect::<Result<_>>()?;

        let mut best: Option<&CandidateResult> = None;
        for c in candidates.iter().filter(|c| c.feasible) {
            if best.is_none_or(|b| c.mean_loss < b.mean_loss) {
                best = Some(c);
            }
        }
        let best = best.ok_or_else(|| {
            CobraError::InvalidParameter("every candidate lacked consensus on more than half the validation points".into())
        })?;
        Ok(TuneResult {
            estimator: kind,
            best: best.params.clone(),
            best_loss: best.mean_loss,
            loss: LossKind::for_estimator(kind),
            folds: self.folds.len(),
            seed: self.seed,
            candidates: candidates.clone(),
        })
    }
}

/// Prepare folds, fit machines per fold and search `grids`.
pub fn grid_search(
    kind: EstimatorKind,
    base: &AggregatorConfig,
    grids: &[GridSpec],
    machines: &[MachineSpec],
    data: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<TuneResult> {
    CrossValidation::prepare(data, machines, folds, seed)?.grid_search(kind, base, grids)
}

/// Anything that predicts a single point: machines and fitted estimators.
pub trait PointPredictor: Sync {
    fn n_features(&self) -> usize;
    fn predict_point(&self, x: &[f64]) -> Result<f64>;
}

impl PointPredictor for TrainedMachine {
    fn n_features(&self) -> usize {
        TrainedMachine::n_features(self)
    }

    fn predict_point(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

/// An aggregator bound to one estimator kind and configuration.
#[derive(Debug, Clone, Copy)]
pub struct FittedEstimator<'a> {
    pub aggregator: &'a Aggregator,
    pub kind: EstimatorKind,
    pub config: &'a AggregatorConfig,
}

impl PointPredictor for FittedEstimator<'_> {
    fn n_features(&self) -> usize {
        self.aggregator.retained().d()
    }

    fn predict_point(&self, x: &[f64]) -> Result<f64> {
        Ok(self.aggregator.predict(self.kind, self.config, x)?.as_f64())
    }
}

/// Per-point errors of one model on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub name: String,
    pub abs_errors: Vec<f64>,
    pub sq_errors: Vec<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub std_abs_error: f64,
}

impl ErrorRow {
    pub fn from_predictions(name: impl Into<String>, predictions: &[f64], targets: &[f64]) -> Self {
        let abs_errors: Vec<f64> = predictions.iter().zip(targets).map(|(p, y)| (p - y).abs()).collect();
        let sq_errors: Vec<f64> = abs_errors.iter().map(|e| e * e).collect();
        Self {
            name: name.into(),
            rmse: mean(&sq_errors).sqrt(),
            mae: mean(&abs_errors),
            std_abs_error: std_dev(&abs_errors),
            abs_errors,
            sq_errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn row(&self, name: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Long format `model,point,abs_error,sq_error` for boxplots.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["model", "point", "abs_error", "sq_error"])?;
        for row in &self.rows {
            for (i, (a, s)) in row.abs_errors.iter().zip(&row.sq_errors).enumerate() {
                wtr.write_record([row.name.clone(), i.to_string(), a.to_string(), s.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| CobraError::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Score named estimators, then the individual machines, on `test`.
pub fn compare_estimators(
    estimators: &[(&str, &dyn PointPredictor)],
    machines: &[TrainedMachine],
    test: &Dataset,
) -> Result<ErrorReport> {
    let targets = test.require_targets()?;
    let mut models: Vec<(String, &dyn PointPredictor)> =
        estimators.iter().map(|(n, p)| (n.to_string(), *p)).collect();
    models.extend(machines.iter().map(|m| (m.name().to_string(), m as &dyn PointPredictor)));
    let rows = models
        .into_iter()
        .map(|(name, model)| {
            let predictions = (0..test.n())
                .into_par_iter()
                .map(|i| model.predict_point(test.row(i)).map_err(|e| e.at_query(i)))
                .collect::<Result<Vec<f64>>>()?;
            Ok(ErrorRow::from_predictions(name, &predictions, targets))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorReport { rows })
}

/// Which task an estimator kind serves.
pub fn task_of(kind: EstimatorKind) -> Task {
    if kind.is_classifier() {
        Task::Classification
    } else {
        Task::Regression
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorKind, GeneratorSpec};
    use crate::machines::{default_regression_roster, fit_machine, MachineKind};

    fn friedman(n: usize, seed: u64) -> Dataset {
        generate(&GeneratorSpec::new(GeneratorKind::Friedman1, n, 10, 1.0, seed)).unwrap()
    }

    fn light_roster() -> Vec<MachineSpec> {
        vec![
            MachineSpec::new(MachineKind::ridge()),
            MachineSpec::new(MachineKind::lasso()),
            MachineSpec::new(MachineKind::decision_tree()),
            MachineSpec::new(MachineKind::Knn { k: 5 }),
        ]
    }

    #[test]
    fn grid_strings_parse() {
        let g: GridSpec = "lambda=log:1e-3:1e3:50".parse().unwrap();
        let c = g.candidates().unwrap();
        assert_eq!(c.len(), 50);
        assert!((c[0] - 1e-3).abs() < 1e-15 && (c[49] - 1e3).abs() < 1e-9);
        let g: GridSpec = "alpha=3,1,2,2".parse().unwrap();
        assert_eq!(g.candidates().unwrap(), vec![1.0, 2.0, 3.0]);
        let g: GridSpec = "epsilon_rel=lin:0.1:0.5:5".parse().unwrap();
        assert_eq!(g.candidates().unwrap().len(), 5);
        for bad in ["lambda", "bogus=1", "lambda=log:1:2", "lambda=cubic:1:2:3", "lambda=lin:1:2:0"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
        assert!(GridSpec::list(Param::Lambda, vec![-1.0]).candidates().is_err());
        assert!(GridSpec::list(Param::Alpha, vec![1.5]).candidates().is_err());
    }

    #[test]
    fn default_grids_cover_every_estimator() {
        for kind in EstimatorKind::ALL {
            let grids = default_grids(kind, 4);
            assert!(!grids.is_empty());
            for g in grids {
                g.candidates().unwrap();
            }
        }
        let cobra = default_grids(EstimatorKind::Cobra, 4);
        assert_eq!(cobra[0].candidates().unwrap().len(), 100);
        assert_eq!(cobra[1].candidates().unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_candidate_is_selected() {
        let data = friedman(120, 1);
        let r = grid_search(
            EstimatorKind::KernelCobra,
            &AggregatorConfig::default(),
            &[GridSpec::list(Param::Lambda, vec![0.7])],
            &light_roster(),
            &data,
            3,
            5,
        )
        .unwrap();
        assert_eq!(r.best[&Param::Lambda], 0.7);
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].fold_losses.len(), 3);
    }

    #[test]
    fn search_is_deterministic_and_consistent() {
        let data = friedman(150, 2);
        let grids = [GridSpec::list(Param::Lambda, vec![0.0, 0.1, 1.0, 10.0])];
        let run = || grid_search(EstimatorKind::KernelCobra, &AggregatorConfig::default(), &grids, &light_roster(), &data, 4, 9).unwrap();
        let a = run();
        assert_eq!(a, run());
        // Best beats (or ties) every candidate, including the uniform one.
        for c in &a.candidates {
            assert!(a.best_loss <= c.mean_loss);
        }
        // Recomputing the winner on the same folds gives the same loss.
        let cv = CrossValidation::prepare(&data, &light_roster(), 4, 9).unwrap();
        let again = cv
            .evaluate(EstimatorKind::KernelCobra, &apply_params(&AggregatorConfig::default(), &a.best))
            .unwrap();
        assert_eq!(again.mean_loss, a.best_loss);
    }

    #[test]
    fn dominated_candidate_does_not_change_selection() {
        let data = friedman(150, 3);
        let cv = CrossValidation::prepare(&data, &light_roster(), 3, 4).unwrap();
        let base = AggregatorConfig::default();
        let before = cv
            .grid_search(EstimatorKind::KernelCobra, &base, &[GridSpec::list(Param::Lambda, vec![0.05, 0.5, 5.0])])
            .unwrap();
        let after = cv
            .grid_search(EstimatorKind::KernelCobra, &base, &[GridSpec::list(Param::Lambda, vec![0.0, 0.05, 0.5, 5.0])])
            .unwrap();
        let uniform = after.candidates.iter().find(|c| c.params[&Param::Lambda] == 0.0).unwrap();
        assert!(uniform.mean_loss > before.best_loss);
        assert_eq!(before.best, after.best);
    }

    #[test]
    fn starved_cobra_candidates_are_infeasible() {
        let data = friedman(120, 4);
        let cv = CrossValidation::prepare(&data, &light_roster(), 3, 1).unwrap();
        let r = cv
            .grid_search(
                EstimatorKind::Cobra,
                &AggregatorConfig::default(),
                &[GridSpec::list(Param::EpsilonRel, vec![1e-9, 0.5])],
            )
            .unwrap();
        let tiny = &r.candidates[0];
        assert!(!tiny.feasible && tiny.no_consensus_fraction > 0.5);
        assert_eq!(r.best[&Param::EpsilonRel], 0.5);
    }

    #[test]
    fn alpha_grid_beyond_machine_count_is_rejected() {
        let data = friedman(90, 4);
        let cv = CrossValidation::prepare(&data, &light_roster(), 3, 1).unwrap();
        let err = cv
            .grid_search(EstimatorKind::Cobra, &AggregatorConfig::default(), &[GridSpec::list(Param::Alpha, vec![5.0])])
            .unwrap_err();
        assert!(matches!(err, CobraError::InvalidParameter(_)));
    }

    #[test]
    fn folds_are_validated() {
        let data = friedman(20, 1);
        assert!(CrossValidation::prepare(&data, &light_roster(), 1, 0).is_err());
        assert!(CrossValidation::prepare(&data, &light_roster(), 11, 0).is_err());
    }

    #[test]
    fn compare_reports_are_self_consistent() {
        let data = friedman(80, 6);
        let ridge = fit_machine(&MachineSpec::new(MachineKind::ridge()), &data).unwrap();
        let nn = fit_machine(&MachineSpec::new(MachineKind::Knn { k: 1 }).named("one-nn"), &data).unwrap();
        let report = compare_estimators(&[("ridge-again", &ridge as &dyn PointPredictor)], &[ridge.clone(), nn], &data).unwrap();
        assert_eq!(report.rows.len(), 3);
        // Identical model under two names gives identical rows.
        let (a, b) = (report.row("ridge-again").unwrap(), report.row("ridge").unwrap());
        assert_eq!(a.abs_errors, b.abs_errors);
        assert_eq!(a.rmse, b.rmse);
        // 1-NN on its own training points is perfect.
        assert!(report.row("one-nn").unwrap().abs_errors.iter().all(|&e| e == 0.0));
        for row in &report.rows {
            let recomputed = (row.sq_errors.iter().sum::<f64>() / row.sq_errors.len() as f64).sqrt();
            assert!((recomputed - row.rmse).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 80);
    }

    #[test]
    fn default_roster_search_runs() {
        let data = friedman(100, 8);
        let r = grid_search(
            EstimatorKind::Cobra,
            &AggregatorConfig::default(),
            &[GridSpec::list(Param::EpsilonRel, vec![0.1, 0.3]), GridSpec::list(Param::Alpha, vec![2.0, 4.0])],
            &default_regression_roster(1),
            &data,
            2,
            3,
        )
        .unwrap();
        assert_eq!(r.candidates.len(), 4);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon_rel,alpha,mean_loss"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
    }
}
