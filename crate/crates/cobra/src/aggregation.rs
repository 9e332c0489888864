//! Consensus aggregation: weights over the retained points computed from how
//! closely each machine's prediction at a retained point matches its
//! prediction at the query, followed by a weighted combination of the
//! retained *observed outputs*.
//!
//! Weight schemes:
//!
//! * KernelCobra: `w_i ∝ exp(-λ Σ_m |r_m(X_i) - r_m(x)|)`
//! * general kernel: `w_i ∝ Σ_m K(r_m(X_i), r_m(x))`
//! * COBRA: uniform over the points where at least `alpha` machines agree
//!   within `ε` (all `M` machines by default)
//! * MixCobra baseline: KernelCobra times `exp(-γ ‖x - X_i‖²)`. This baseline
//!   also looks at the inputs, so its cost grows with the dimension `d`. The
//!   formula is this crate's own choice and is not canonical.
//!
//! Per query the work is `O(Mℓ)` once the `M x ℓ` prediction matrix is
//! cached; only the MixCobra baseline touches `d`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_prediction_matrix, Dataset, PredictionMatrix, SplitPair};
use crate::error::{CobraError, Result};
use crate::kernels::{KernelSpec, ScalarKernel};
use crate::machines::TrainedMachine;

/// Nonnegative weights over the retained points, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Normalize nonnegative scores. An all-zero score vector is a
    /// no-consensus error.
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(CobraError::NoConsensus { query: None });
        }
        scores.iter_mut().for_each(|s| *s /= total);
        Ok(Self(scores))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest weight (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = i;
            }
        }
        best
    }
}

fn check_query(train_preds: &PredictionMatrix, query_preds: &[f64]) -> Result<()> {
    if query_preds.len() != train_preds.n_machines() {
        return Err(CobraError::shape("query predictions", train_preds.n_machines(), query_preds.len()));
    }
    Ok(())
}

/// `Σ_m |train_preds[m][i] - query_preds[m]|` for every retained point.
fn summed_distances(train_preds: &PredictionMatrix, query_preds: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; train_preds.n_points()];
    for (row, &q) in train_preds.machine_rows().zip(query_preds) {
        for (d, &p) in dist.iter_mut().zip(row) {
            *d += (p - q).abs();
        }
    }
    dist
}

/// Normalized `exp(log_w)`, shifted by the maximum so the largest term is 1.
fn normalize_log_weights(mut log_w: Vec<f64>) -> WeightVector {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in log_w.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    log_w.iter_mut().for_each(|v| *v /= total);
    WeightVector(log_w)
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CobraError::InvalidParameter(format!("{name} = {value} must be finite and >= 0")))
    }
}

/// Exponential weights with temperature `lambda`. `lambda = 0` gives
/// uniform weights.
pub fn kernelcobra_weights(train_preds: &PredictionMatrix, query_preds: &[f64], lambda: f64) -> Result<WeightVector> {
    check_query(train_preds, query_preds)?;
    check_rate("lambda", lambda)?;
    let dist = summed_distances(train_preds, query_preds);
    let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut w: Vec<f64> = dist
        .into_iter()
        .map(|d| {
            let v = (-lambda * (d - nearest)).exp();
            total += v;
            v
        })
        .collect();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(WeightVector(w))
}

/// Weights proportional to the kernel summed over machines.
pub fn general_kernel_weights<K: ScalarKernel + ?Sized>(
    train_preds: &PredictionMatrix,
    query_preds: &[f64],
    kernel: &K,
) -> Result<WeightVector> {
    check_query(train_preds, query_preds)?;
    let mut scores = vec![0.0; train_preds.n_points()];
    for (row, &q) in train_preds.machine_rows().zip(query_preds) {
        for (s, &p) in scores.iter_mut().zip(row) {
            *s += kernel.eval(p, q);
        }
    }
    WeightVector::from_scores(scores)
}

/// Indicator weights: point `i` is kept when at least `alpha` machines
/// predict within `epsilon` of their query prediction. `alpha = M` is the
/// full intersection.
pub fn cobra_weights(train_preds: &PredictionMatrix, query_preds: &[f64], epsilon: f64, alpha: usize) -> Result<WeightVector> {
    check_query(train_preds, query_preds)?;
    check_rate("epsilon", epsilon)?;
    let m = train_preds.n_machines();
    if alpha == 0 || alpha > m {
        return Err(CobraError::InvalidParameter(format!("alpha = {alpha} must lie in [1, {m}]")));
    }
    let mut agree = vec![0usize; train_preds.n_points()];
    for (row, &q) in train_preds.machine_rows().zip(query_preds) {
        for (a, &p) in agree.iter_mut().zip(row) {
            if (p - q).abs() <= epsilon {
                *a += 1;
            }
        }
    }
    let selected = agree.iter().filter(|&&a| a >= alpha).count();
    if selected == 0 {
        return Err(CobraError::NoConsensus { query: None });
    }
    let w = 1.0 / selected as f64;
    Ok(WeightVector(
        agree.into_iter().map(|a| if a >= alpha { w } else { 0.0 }).collect(),
    ))
}

/// Baseline mixing input proximity with prediction proximity:
/// `w_i ∝ exp(-input_weight ‖x - X_i‖² - λ Σ_m |r_m(X_i) - r_m(x)|)`.
pub fn mixcobra_weights(
    train_inputs: &Dataset,
    query_input: &[f64],
    train_preds: &PredictionMatrix,
    query_preds: &[f64],
    input_weight: f64,
    lambda: f64,
) -> Result<WeightVector> {
    check_query(train_preds, query_preds)?;
    check_rate("input weight", input_weight)?;
    check_rate("lambda", lambda)?;
    if train_inputs.n() != train_preds.n_points() {
        return Err(CobraError::shape("retained inputs", train_preds.n_points(), train_inputs.n()));
    }
    if query_input.len() != train_inputs.d() {
        return Err(CobraError::shape("query dimension", train_inputs.d(), query_input.len()));
    }
    let dist = summed_distances(train_preds, query_preds);
    let log_w = train_inputs
        .rows()
        .zip(dist)
        .map(|(row, d)| {
            let sq: f64 = row.iter().zip(query_input).map(|(a, b)| (a - b) * (a - b)).sum();
            -input_weight * sq - lambda * d
        })
        .collect();
    Ok(normalize_log_weights(log_w))
}

/// `Σ_i w_i Y_i`.
pub fn aggregate_regression(weights: &WeightVector, retained_targets: &[f64]) -> Result<f64> {
    if weights.len() != retained_targets.len() {
        return Err(CobraError::shape("retained targets", weights.len(), retained_targets.len()));
    }
    Ok(weights.0.iter().zip(retained_targets).map(|(w, y)| w * y).sum())
}

/// `Σ_i w_i Σ_m v_m r_m(X_i)`: needs no retained outputs.
pub fn aggregate_unsupervised(point_weights: &WeightVector, machine_weights: &[f64], train_preds: &PredictionMatrix) -> Result<f64> {
    check_machine_weights(machine_weights, train_preds.n_machines())?;
    if point_weights.len() != train_preds.n_points() {
        return Err(CobraError::shape("point weights", train_preds.n_points(), point_weights.len()));
    }
    let mut blended = vec![0.0; train_preds.n_points()];
    for (row, &v) in train_preds.machine_rows().zip(machine_weights) {
        for (b, &p) in blended.iter_mut().zip(row) {
            *b += v * p;
        }
    }
    Ok(point_weights.0.iter().zip(&blended).map(|(w, b)| w * b).sum())
}

fn check_machine_weights(machine_weights: &[f64], m: usize) -> Result<()> {
    if machine_weights.len() != m {
        return Err(CobraError::shape("machine weights", m, machine_weights.len()));
    }
    let sum: f64 = machine_weights.iter().sum();
    if machine_weights.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(CobraError::InvalidWeights { sum });
    }
    Ok(())
}

/// Class 1 when the weight on label 1 is at least one half.
pub fn classify_binary(weights: &WeightVector, retained_labels: &[i64]) -> Result<i64> {
    if weights.len() != retained_labels.len() {
        return Err(CobraError::shape("retained labels", weights.len(), retained_labels.len()));
    }
    let mut mass = 0.0;
    for (&w, &label) in weights.0.iter().zip(retained_labels) {
        match label {
            0 => {}
            1 => mass += w,
            other => return Err(CobraError::Label(format!("binary labels must be 0 or 1, got {other}"))),
        }
    }
    Ok(i64::from(mass >= 0.5))
}

/// Label carrying the most weight; ties go to the smallest label.
pub fn classify_multiclass(weights: &WeightVector, retained_labels: &[i64]) -> Result<i64> {
    if weights.len() != retained_labels.len() {
        return Err(CobraError::shape("retained labels", weights.len(), retained_labels.len()));
    }
    if retained_labels.is_empty() {
        return Err(CobraError::Label("empty label set".into()));
    }
    let mut mass: BTreeMap<i64, f64> = BTreeMap::new();
    for (&w, &label) in weights.0.iter().zip(retained_labels) {
        *mass.entry(label).or_insert(0.0) += w;
    }
    let mut best = (i64::MIN, f64::NEG_INFINITY);
    for (label, m) in mass {
        if m > best.1 {
            best = (label, m);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "cobra")]
    Cobra,
    #[serde(rename = "kernelcobra")]
    KernelCobra,
    #[serde(rename = "general-kernel")]
    GeneralKernel,
    #[serde(rename = "mixcobra")]
    MixCobra,
    #[serde(rename = "unsupervised")]
    Unsupervised,
    #[serde(rename = "classifier")]
    Classifier,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Cobra,
        EstimatorKind::KernelCobra,
        EstimatorKind::GeneralKernel,
        EstimatorKind::MixCobra,
        EstimatorKind::Unsupervised,
        EstimatorKind::Classifier,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Cobra => "cobra",
            EstimatorKind::KernelCobra => "kernelcobra",
            EstimatorKind::GeneralKernel => "general-kernel",
            EstimatorKind::MixCobra => "mixcobra",
            EstimatorKind::Unsupervised => "unsupervised",
            EstimatorKind::Classifier => "classifier",
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, EstimatorKind::Classifier)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = CobraError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CobraError::InvalidParameter(format!("unknown estimator `{s}`")))
    }
}

/// Point-weight scheme used by the unsupervised and classifier estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    #[serde(rename = "cobra")]
    Cobra,
    #[serde(rename = "kernelcobra")]
    KernelCobra,
    #[serde(rename = "general-kernel")]
    GeneralKernel,
    #[serde(rename = "mixcobra")]
    MixCobra,
}

/// The COBRA radius, either absolute or as a fraction of the prediction
/// matrix range `max - min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Absolute(f64),
    Relative(f64),
}

impl Threshold {
    pub fn resolve(&self, prediction_range: f64) -> f64 {
        match *self {
            Threshold::Absolute(e) => e,
            Threshold::Relative(f) => f * prediction_range,
        }
    }
}

/// What to do when no retained point reaches consensus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusFallback {
    #[default]
    Error,
    /// Use uniform weights for that query.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregatorConfig {
    /// Temperature of the exponential weights.
    pub lambda: f64,
    pub epsilon: Threshold,
    /// Machines that must agree for COBRA selection; `None` means all.
    pub alpha: Option<usize>,
    pub kernel: KernelSpec,
    /// Machine weights for the unsupervised estimator; `None` means uniform.
    pub machine_weights: Option<Vec<f64>>,
    /// Scale of the squared input distance in the MixCobra baseline.
    pub input_weight: f64,
    pub point_weights: WeightScheme,
    pub fallback: ConsensusFallback,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: Threshold::Relative(0.1),
            alpha: None,
            kernel: KernelSpec::default(),
            machine_weights: None,
            input_weight: 1.0,
            point_weights: WeightScheme::KernelCobra,
            fallback: ConsensusFallback::Error,
        }
    }
}

impl AggregatorConfig {
    pub fn validate(&self, n_machines: usize) -> Result<()> {
        check_rate("lambda", self.lambda)?;
        check_rate("input weight", self.input_weight)?;
        self.kernel.validate()?;
        let (Threshold::Absolute(e) | Threshold::Relative(e)) = self.epsilon;
        if !(e > 0.0 && e.is_finite()) {
            return Err(CobraError::InvalidParameter(format!("epsilon {e} must be positive and finite")));
        }
        if let Some(alpha) = self.alpha {
            if alpha == 0 || alpha > n_machines {
                return Err(CobraError::InvalidParameter(format!("alpha = {alpha} must lie in [1, {n_machines}]")));
            }
        }
        if let Some(w) = &self.machine_weights {
            check_machine_weights(w, n_machines)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Value(f64),
    Label(i64),
}

impl Prediction {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Prediction::Value(v) => v,
            Prediction::Label(l) => l as f64,
        }
    }
}

/// A prediction and whether the uniform no-consensus fallback produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prediction: Prediction,
    pub fell_back: bool,
}

/// Machines fitted on `D_k` together with the retained half `D_ℓ` and its
/// cached prediction matrix.
#[derive(Debug, Clone)]
pub struct Aggregator {
    machines: Vec<TrainedMachine>,
    retained: Dataset,
    matrix: PredictionMatrix,
    prediction_range: f64,
    labels: Option<Vec<i64>>,
}

impl Aggregator {
    /// `retained` may lack targets; only the unsupervised estimator then works.
    pub fn new(machines: Vec<TrainedMachine>, retained: Dataset) -> Result<Self> {
        if let Some(m) = machines.iter().find(|m| m.n_features() != retained.d()) {
            return Err(CobraError::shape("machine input dimension", retained.d(), m.n_features()));
        }
        let matrix = build_prediction_matrix(&machines, &retained)?;
        let prediction_range = matrix.range();
        let labels = retained.labels().ok();
        Ok(Self {
            machines,
            retained,
            matrix,
            prediction_range,
            labels,
        })
    }

    pub fn from_split(machines: Vec<TrainedMachine>, split: &SplitPair) -> Result<Self> {
        Self::new(machines, split.retained_half.clone())
    }

    pub fn machines(&self) -> &[TrainedMachine] {
        &self.machines
    }

    pub fn retained(&self) -> &Dataset {
        &self.retained
    }

    pub fn matrix(&self) -> &PredictionMatrix {
        &self.matrix
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    /// `max - min` over the cached prediction matrix.
    pub fn prediction_range(&self) -> f64 {
        self.prediction_range
    }

    /// Every machine's prediction at `x`.
    pub fn query_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.retained.d() {
            return Err(CobraError::shape("query dimension", self.retained.d(), x.len()));
        }
        self.machines
            .iter()
            .enumerate()
            .map(|(row, m)| {
                let y = m.predict_unchecked(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(CobraError::MachineOutput {
                        machine: m.name().to_string(),
                        row,
                    })
                }
            })
            .collect()
    }

    /// Point weights for `scheme` given the machines' query predictions.
    pub fn weights(&self, scheme: WeightScheme, config: &AggregatorConfig, x: &[f64], query_preds: &[f64]) -> Result<WeightVector> {
        match scheme {
            WeightScheme::KernelCobra => kernelcobra_weights(&self.matrix, query_preds, config.lambda),
            WeightScheme::GeneralKernel => general_kernel_weights(&self.matrix, query_preds, &config.kernel),
            WeightScheme::Cobra => cobra_weights(
                &self.matrix,
                query_preds,
                config.epsilon.resolve(self.prediction_range),
                config.alpha.unwrap_or(self.n_machines()),
            ),
            WeightScheme::MixCobra => mixcobra_weights(
                &self.retained,
                x,
                &self.matrix,
                query_preds,
                config.input_weight,
                config.lambda,
            ),
        }
    }

    fn scheme_for(kind: EstimatorKind, config: &AggregatorConfig) -> WeightScheme {
        match kind {
            EstimatorKind::Cobra => WeightScheme::Cobra,
            EstimatorKind::KernelCobra => WeightScheme::KernelCobra,
            EstimatorKind::GeneralKernel => WeightScheme::GeneralKernel,
            EstimatorKind::MixCobra => WeightScheme::MixCobra,
            EstimatorKind::Unsupervised | EstimatorKind::Classifier => config.point_weights,
        }
    }

    fn combine(&self, kind: EstimatorKind, config: &AggregatorConfig, weights: &WeightVector) -> Result<Prediction> {
        match kind {
            EstimatorKind::Unsupervised => {
                let uniform;
                let machine_weights = match &config.machine_weights {
                    Some(w) => w.as_slice(),
                    None => {
                        uniform = vec![1.0 / self.n_machines() as f64; self.n_machines()];
                        &uniform
                    }
                };
                aggregate_unsupervised(weights, machine_weights, &self.matrix).map(Prediction::Value)
            }
            EstimatorKind::Classifier => {
                let labels = self
                    .labels
                    .as_deref()
                    .ok_or_else(|| CobraError::Label("retained targets are not integer labels".into()))?;
                if labels.iter().all(|&l| l == 0 || l == 1) {
                    classify_binary(weights, labels).map(Prediction::Label)
                } else {
                    classify_multiclass(weights, labels).map(Prediction::Label)
                }
            }
            _ => aggregate_regression(weights, self.retained.require_targets()?).map(Prediction::Value),
        }
    }

    /// Aggregate for a query whose machine predictions are already known.
    /// This is the aggregation-only step: `O(Mℓ)`, plus `O(ℓd)` for MixCobra.
    pub fn predict_from_query(&self, kind: EstimatorKind, config: &AggregatorConfig, x: &[f64], query_preds: &[f64]) -> Result<Outcome> {
        let scheme = Self::scheme_for(kind, config);
        let (weights, fell_back) = match self.weights(scheme, config, x, query_preds) {
            Ok(w) => (w, false),
            Err(e) if e.is_no_consensus() && config.fallback == ConsensusFallback::Uniform => {
                (WeightVector::uniform(self.matrix.n_points()), true)
            }
            Err(e) => return Err(e),
        };
        Ok(Outcome {
            prediction: self.combine(kind, config, &weights)?,
            fell_back,
        })
    }

    pub fn predict_outcome(&self, kind: EstimatorKind, config: &AggregatorConfig, x: &[f64]) -> Result<Outcome> {
        let query_preds = self.query_predictions(x)?;
        self.predict_from_query(kind, config, x, &query_preds)
    }

    pub fn predict(&self, kind: EstimatorKind, config: &AggregatorConfig, x: &[f64]) -> Result<Prediction> {
        Ok(self.predict_outcome(kind, config, x)?.prediction)
    }

    /// Predict every row of `points` in parallel. Errors carry the row index.
    pub fn predict_batch(&self, kind: EstimatorKind, config: &AggregatorConfig, points: &Dataset) -> Result<Vec<Outcome>> {
        config.validate(self.n_machines())?;
        (0..points.n())
            .into_par_iter()
            .map(|i| self.predict_outcome(kind, config, points.row(i)).map_err(|e| e.at_query(i)))
            .collect()
    }
}

/// An estimator on disk: fitted machines, the retained half and the
/// aggregation setting. Machines plugged in from outside cannot be saved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedEstimator {
    pub kind: EstimatorKind,
    pub config: AggregatorConfig,
    pub machines: Vec<TrainedMachine>,
    pub retained: Dataset,
}

impl SavedEstimator {
    pub const FILE: &'static str = "estimator.json";

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| CobraError::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let text = serde_json::to_string(self)?;
        std::fs::write(&path, text).map_err(|e| CobraError::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(Self::FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CobraError::io(&path, e))?;
        let mut saved: SavedEstimator = serde_json::from_str(&text)?;
        let r = &saved.retained;
        saved.retained = Dataset::new(r.features().to_vec(), r.d(), r.targets().map(<[f64]>::to_vec))?;
        saved.config.validate(saved.machines.len())?;
        Ok(saved)
    }

    pub fn aggregator(&self) -> Result<Aggregator> {
        Aggregator::new(self.machines.clone(), self.retained.clone())
    }
}

/// One-shot prediction. Builds the prediction matrix on every call; use an
/// [`Aggregator`] to reuse it across queries.
pub fn predict(
    kind: EstimatorKind,
    config: &AggregatorConfig,
    machines: &[TrainedMachine],
    split: &SplitPair,
    x: &[f64],
) -> Result<Prediction> {
    config.validate(machines.len())?;
    Aggregator::from_split(machines.to_vec(), split)?.predict(kind, config, x)
}
