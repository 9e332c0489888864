//! Base learners ("machines") fitted on the first half of the sample.
//!
//! Every machine exposes a pointwise prediction. Classifiers return their
//! label as an integer-valued `f64` so that regression and classification
//! machines share one prediction matrix type.
//!
//! Machines fitted elsewhere can join an ensemble through
//! [`TrainedMachine::external`] as long as they implement [`Predictor`].

mod knn;
mod linear;
mod naive_bayes;
mod tree;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CobraError, Result};

pub use knn::Knn;
pub use linear::{Linear, Logistic};
pub use naive_bayes::GaussianNaiveBayes;
pub use tree::{DecisionTree, Forest, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

/// Learner kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MachineKind {
    Ridge {
        #[serde(default = "defaults::ridge_alpha")]
        alpha: f64,
    },
    Lasso {
        #[serde(default = "defaults::lasso_alpha")]
        alpha: f64,
        #[serde(default = "defaults::lasso_max_iter")]
        max_iter: usize,
        #[serde(default = "defaults::lasso_tol")]
        tol: f64,
    },
    Knn {
        #[serde(default = "defaults::neighbors")]
        k: usize,
    },
    DecisionTree {
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_samples_leaf")]
        min_samples_leaf: usize,
    },
    RandomForest {
        #[serde(default = "defaults::n_trees")]
        n_trees: usize,
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_samples_leaf")]
        min_samples_leaf: usize,
        /// Features tried per split; `None` means `⌈d/3⌉`.
        #[serde(default)]
        max_features: Option<usize>,
        #[serde(default = "defaults::bootstrap")]
        bootstrap: bool,
    },
    KnnClassifier {
        #[serde(default = "defaults::neighbors")]
        k: usize,
    },
    DecisionTreeClassifier {
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_samples_leaf")]
        min_samples_leaf: usize,
    },
    LogisticRegression {
        #[serde(default = "defaults::logistic_step")]
        step: f64,
        #[serde(default = "defaults::logistic_iterations")]
        iterations: usize,
        #[serde(default = "defaults::logistic_l2")]
        l2: f64,
    },
    NaiveBayes {
        #[serde(default = "defaults::var_smoothing")]
        var_smoothing: f64,
    },
}

mod defaults {
    pub fn ridge_alpha() -> f64 {
        1.0
    }
    pub fn lasso_alpha() -> f64 {
        0.1
    }
    pub fn lasso_max_iter() -> usize {
        1000
    }
    pub fn lasso_tol() -> f64 {
        1e-6
    }
    pub fn neighbors() -> usize {
        5
    }
    pub fn max_depth() -> usize {
        10
    }
    pub fn min_samples_leaf() -> usize {
        1
    }
    pub fn n_trees() -> usize {
        100
    }
    pub fn bootstrap() -> bool {
        true
    }
    pub fn logistic_step() -> f64 {
        0.1
    }
    pub fn logistic_iterations() -> usize {
        500
    }
    pub fn logistic_l2() -> f64 {
        1e-3
    }
    pub fn var_smoothing() -> f64 {
        1e-9
    }
}

impl MachineKind {
    pub fn ridge() -> Self {
        MachineKind::Ridge {
            alpha: defaults::ridge_alpha(),
        }
    }

    pub fn lasso() -> Self {
        MachineKind::Lasso {
            alpha: defaults::lasso_alpha(),
            max_iter: defaults::lasso_max_iter(),
            tol: defaults::lasso_tol(),
        }
    }

    pub fn knn() -> Self {
        MachineKind::Knn {
            k: defaults::neighbors(),
        }
    }

    pub fn decision_tree() -> Self {
        MachineKind::DecisionTree {
            max_depth: defaults::max_depth(),
            min_samples_leaf: defaults::min_samples_leaf(),
        }
    }

    pub fn random_forest() -> Self {
        MachineKind::RandomForest {
            n_trees: defaults::n_trees(),
            max_depth: defaults::max_depth(),
            min_samples_leaf: defaults::min_samples_leaf(),
            max_features: None,
            bootstrap: defaults::bootstrap(),
        }
    }

    pub fn knn_classifier() -> Self {
        MachineKind::KnnClassifier {
            k: defaults::neighbors(),
        }
    }

    pub fn decision_tree_classifier() -> Self {
        MachineKind::DecisionTreeClassifier {
            max_depth: defaults::max_depth(),
            min_samples_leaf: defaults::min_samples_leaf(),
        }
    }

    pub fn logistic_regression() -> Self {
        MachineKind::LogisticRegression {
            step: defaults::logistic_step(),
            iterations: defaults::logistic_iterations(),
            l2: defaults::logistic_l2(),
        }
    }

    pub fn naive_bayes() -> Self {
        MachineKind::NaiveBayes {
            var_smoothing: defaults::var_smoothing(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MachineKind::Ridge { .. } => "ridge",
            MachineKind::Lasso { .. } => "lasso",
            MachineKind::Knn { .. } => "knn",
            MachineKind::DecisionTree { .. } => "decision-tree",
            MachineKind::RandomForest { .. } => "random-forest",
            MachineKind::KnnClassifier { .. } => "knn-classifier",
            MachineKind::DecisionTreeClassifier { .. } => "decision-tree-classifier",
            MachineKind::LogisticRegression { .. } => "logistic-regression",
            MachineKind::NaiveBayes { .. } => "naive-bayes",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            MachineKind::Ridge { .. }
            | MachineKind::Lasso { .. }
            | MachineKind::Knn { .. }
            | MachineKind::DecisionTree { .. }
            | MachineKind::RandomForest { .. } => Task::Regression,
            _ => Task::Classification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CobraError::InvalidParameter(msg));
        match *self {
            MachineKind::Ridge { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                bad(format!("ridge regularization {alpha} must be finite and >= 0"))
            }
            MachineKind::Lasso { alpha, max_iter, tol }
                if !(alpha >= 0.0 && alpha.is_finite()) || max_iter == 0 || !(tol > 0.0) =>
            {
                bad(format!("lasso needs alpha >= 0, max_iter >= 1, tol > 0 (got {alpha}, {max_iter}, {tol})"))
            }
            MachineKind::Knn { k } | MachineKind::KnnClassifier { k } if k == 0 => {
                bad("neighbor count must be at least 1".into())
            }
            MachineKind::DecisionTree { min_samples_leaf, .. }
            | MachineKind::DecisionTreeClassifier { min_samples_leaf, .. }
                if min_samples_leaf == 0 =>
            {
                bad("min_samples_leaf must be at least 1".into())
            }
            MachineKind::RandomForest {
                n_trees,
                min_samples_leaf,
                max_features,
                ..
            } if n_trees == 0 || min_samples_leaf == 0 || max_features == Some(0) => {
                bad("random forest needs n_trees, min_samples_leaf and max_features >= 1".into())
            }
            MachineKind::LogisticRegression { step, iterations, l2 }
                if !(step > 0.0 && step.is_finite()) || iterations == 0 || !(l2 >= 0.0) =>
            {
                bad(format!("logistic regression needs step > 0, iterations >= 1, l2 >= 0 (got {step}, {iterations}, {l2})"))
            }
            MachineKind::NaiveBayes { var_smoothing } if !(var_smoothing >= 0.0) => {
                bad(format!("var_smoothing {var_smoothing} must be >= 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    #[serde(flatten)]
    pub kind: MachineKind,
    /// Seed for stochastic learners; ignored by deterministic ones.
    #[serde(default)]
    pub seed: u64,
    /// Display name; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl MachineSpec {
    pub fn new(kind: MachineKind) -> Self {
        Self {
            kind,
            seed: 0,
            name: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

/// Ridge, lasso, decision tree and random forest.
pub fn default_regression_roster(seed: u64) -> Vec<MachineSpec> {
    vec![
        MachineSpec::new(MachineKind::ridge()),
        MachineSpec::new(MachineKind::lasso()),
        MachineSpec::new(MachineKind::decision_tree()),
        MachineSpec::new(MachineKind::random_forest()).with_seed(seed),
    ]
}

/// k-NN, decision tree, logistic regression and naive Bayes.
pub fn default_classification_roster() -> Vec<MachineSpec> {
    vec![
        MachineSpec::new(MachineKind::knn_classifier()),
        MachineSpec::new(MachineKind::decision_tree_classifier()),
        MachineSpec::new(MachineKind::logistic_regression()),
        MachineSpec::new(MachineKind::naive_bayes()),
    ]
}

pub fn default_roster(task: Task, seed: u64) -> Vec<MachineSpec> {
    match task {
        Task::Regression => default_regression_roster(seed),
        Task::Classification => default_classification_roster(),
    }
}

/// Pointwise prediction seam for machines fitted outside this crate.
pub trait Predictor: Send + Sync + fmt::Debug {
    fn n_features(&self) -> usize;
    fn predict_row(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
enum Model {
    Linear(Linear),
    Knn(Knn),
    Tree(DecisionTree),
    Forest(Forest),
    Logistic(Logistic),
    NaiveBayes(GaussianNaiveBayes),
    #[serde(skip)]
    External(Arc<dyn Predictor>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedMachine {
    name: String,
    task: Task,
    n_features: usize,
    spec: Option<MachineSpec>,
    model: Model,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl TrainedMachine {
    /// Wrap an externally fitted model. The caller guarantees it was fitted
    /// on the first half of the sample only.
    pub fn external(name: impl Into<String>, task: Task, predictor: Arc<dyn Predictor>) -> Self {
        Self {
            name: name.into(),
            task,
            n_features: predictor.n_features(),
            spec: None,
            model: Model::External(predictor),
            warnings: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn spec(&self) -> Option<&MachineSpec> {
        self.spec.as_ref()
    }

    /// Non-fatal fitting diagnostics such as lasso non-convergence.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(CobraError::shape("query dimension", self.n_features, x.len()));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Linear(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Logistic(m) => m.predict(x),
            Model::NaiveBayes(m) => m.predict(x),
            Model::External(m) => m.predict_row(x),
        }
    }

    /// Classification output as an integer label.
    pub fn predict_label(&self, x: &[f64]) -> Result<i64> {
        if self.task != Task::Classification {
            return Err(CobraError::Label(format!("machine `{}` is a regressor", self.name)));
        }
        Ok(self.predict(x)?.round() as i64)
    }
}

/// Fit one machine on `train` (the `D_k` half).
pub fn fit_machine(spec: &MachineSpec, train: &Dataset) -> Result<TrainedMachine> {
    spec.kind.validate()?;
    let y = train.require_targets()?;
    let task = spec.kind.task();
    let labels = match task {
        Task::Classification => Some(train.labels()?),
        Task::Regression => None,
    };
    let mut warnings = Vec::new();
    let model = match spec.kind {
        MachineKind::Ridge { alpha } => Model::Linear(Linear::fit_ridge(train, y, alpha)),
        MachineKind::Lasso { alpha, max_iter, tol } => {
            let (model, converged) = Linear::fit_lasso(train, y, alpha, max_iter, tol);
            if !converged {
                let msg = format!("lasso did not converge within {max_iter} sweeps (tol {tol})");
                log::warn!("{}: {msg}", spec.display_name());
                warnings.push(msg);
            }
            Model::Linear(model)
        }
        MachineKind::Knn { k } => Model::Knn(Knn::fit(train, y.to_vec(), k, task)),
        MachineKind::KnnClassifier { k } => {
            let labels = labels.as_deref().expect("classification labels");
            Model::Knn(Knn::fit(train, labels.iter().map(|&l| l as f64).collect(), k, task))
        }
        MachineKind::DecisionTree {
            max_depth,
            min_samples_leaf,
        } => Model::Tree(DecisionTree::fit_regression(
            train,
            y,
            &TreeParams::new(max_depth, min_samples_leaf),
        )),
        MachineKind::DecisionTreeClassifier {
            max_depth,
            min_samples_leaf,
        } => Model::Tree(DecisionTree::fit_classification(
            train,
            labels.as_deref().expect("classification labels"),
            &TreeParams::new(max_depth, min_samples_leaf),
        )),
        MachineKind::RandomForest {
            n_trees,
            max_depth,
            min_samples_leaf,
            max_features,
            bootstrap,
        } => {
            let max_features = max_features
                .unwrap_or_else(|| train.d().div_ceil(3))
                .min(train.d());
            let params = TreeParams::new(max_depth, min_samples_leaf).with_max_features(max_features);
            Model::Forest(Forest::fit_regression(train, y, n_trees, bootstrap, &params, spec.seed))
        }
        MachineKind::LogisticRegression { step, iterations, l2 } => Model::Logistic(Logistic::fit(
            train,
            labels.as_deref().expect("classification labels"),
            step,
            iterations,
            l2,
        )),
        MachineKind::NaiveBayes { var_smoothing } => Model::NaiveBayes(GaussianNaiveBayes::fit(
            train,
            labels.as_deref().expect("classification labels"),
            var_smoothing,
        )),
    };
    Ok(TrainedMachine {
        name: spec.display_name(),
        task,
        n_features: train.d(),
        spec: Some(spec.clone()),
        model,
        warnings,
    })
}

/// Fit a roster; machines are independent so they are fitted in parallel.
pub fn fit_machines(specs: &[MachineSpec], train: &Dataset) -> Result<Vec<TrainedMachine>> {
    use rayon::prelude::*;
    if specs.is_empty() {
        return Err(CobraError::EmptyEnsemble);
    }
    specs.par_iter().map(|s| fit_machine(s, train)).collect()
}

/// Most frequent label; ties go to the smallest label.
pub(crate) fn majority_label(labels: impl IntoIterator<Item = i64>) -> i64 {
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let mut best = (i64::MIN, 0usize);
    for (label, count) in counts {
        if count > best.1 {
            best = (label, count);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorKind, GeneratorSpec};

    fn line_data() -> Dataset {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = x.iter().map(|v| 2.0 * v).collect();
        Dataset::new(x, 1, Some(y)).unwrap()
    }

    fn all_regressors() -> Vec<MachineKind> {
        vec![
            MachineKind::ridge(),
            MachineKind::lasso(),
            MachineKind::knn(),
            MachineKind::decision_tree(),
            MachineKind::random_forest(),
        ]
    }

    fn all_classifiers() -> Vec<MachineKind> {
        vec![
            MachineKind::knn_classifier(),
            MachineKind::decision_tree_classifier(),
            MachineKind::logistic_regression(),
            MachineKind::naive_bayes(),
        ]
    }

    #[test]
    fn unregularized_ridge_recovers_exact_line() {
        let m = fit_machine(&MachineSpec::new(MachineKind::Ridge { alpha: 0.0 }), &line_data()).unwrap();
        let intercept = m.predict(&[0.0]).unwrap();
        let slope = m.predict(&[1.0]).unwrap() - intercept;
        assert!((slope - 2.0).abs() < 1e-9, "slope {slope}");
        assert!(intercept.abs() < 1e-9, "intercept {intercept}");
    }

    #[test]
    fn singular_ridge_falls_back_to_pseudo_inverse() {
        // Duplicate columns make the Gram matrix singular.
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let y = (0..6).map(|i| 3.0 * i as f64 + 1.0).collect();
        let data = Dataset::from_rows(&rows, Some(y)).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::Ridge { alpha: 0.0 }), &data).unwrap();
        for i in 0..6 {
            let p = m.predict(&[i as f64, i as f64]).unwrap();
            assert!((p - (3.0 * i as f64 + 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn one_nn_reproduces_training_targets() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 40, 5, 1.0, 3)).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::Knn { k: 1 }), &data).unwrap();
        for (i, x) in data.rows().enumerate() {
            assert_eq!(m.predict(x).unwrap(), data.targets().unwrap()[i]);
        }
    }

    #[test]
    fn knn_with_all_neighbors_predicts_global_mean() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 30, 5, 1.0, 5)).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::Knn { k: 30 }), &data).unwrap();
        let mean = crate::data::mean(data.targets().unwrap());
        for x in [[0.1, 0.2, 0.3, 0.4, 0.5], [9.0, -3.0, 0.0, 1.0, 2.0]] {
            assert!((m.predict(&x).unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_zero_tree_predicts_mean() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 25, 5, 1.0, 8)).unwrap();
        let spec = MachineSpec::new(MachineKind::DecisionTree {
            max_depth: 0,
            min_samples_leaf: 1,
        });
        let m = fit_machine(&spec, &data).unwrap();
        let mean = crate::data::mean(data.targets().unwrap());
        assert!((m.predict(data.row(3)).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 30, 5, 1.0, 2)).unwrap();
        let data = data.with_targets(vec![7.0; 30]).unwrap();
        let queries = [[0.3, 0.9, 0.1, 0.5, 0.2], [2.0, -1.0, 0.5, 0.5, 0.5]];
        for kind in all_regressors().into_iter().chain(all_classifiers()) {
            let m = fit_machine(&MachineSpec::new(kind.clone()), &data).unwrap();
            for q in &queries {
                let p = m.predict(q).unwrap();
                assert!((p - 7.0).abs() < 1e-9, "{} predicted {p}", kind.name());
            }
        }
    }

    #[test]
    fn lone_tree_forest_matches_tree() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 80, 6, 1.0, 11)).unwrap();
        let tree = fit_machine(&MachineSpec::new(MachineKind::decision_tree()), &data).unwrap();
        let forest = fit_machine(
            &MachineSpec::new(MachineKind::RandomForest {
                n_trees: 1,
                max_depth: 10,
                min_samples_leaf: 1,
                max_features: Some(6),
                bootstrap: false,
            })
            .with_seed(77),
            &data,
        )
        .unwrap();
        let queries = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 20, 6, 1.0, 12)).unwrap();
        for q in queries.rows() {
            assert_eq!(tree.predict(q).unwrap(), forest.predict(q).unwrap());
        }
    }

    #[test]
    fn logistic_separates_blobs() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::LinearlySeparable, 200, 2, 0.5, 4)).unwrap();
        let spec = MachineSpec::new(MachineKind::LogisticRegression {
            step: 0.1,
            iterations: 500,
            l2: 1.0,
        });
        let m = fit_machine(&spec, &data).unwrap();
        let labels = data.labels().unwrap();
        let correct = data
            .rows()
            .zip(&labels)
            .filter(|(x, &l)| m.predict_label(x).unwrap() == l)
            .count();
        assert!(correct as f64 / 200.0 >= 0.95, "accuracy {}", correct as f64 / 200.0);
    }

    #[test]
    fn classifiers_reach_reasonable_accuracy_on_moons() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Moons, 300, 2, 0.1, 6)).unwrap();
        let labels = data.labels().unwrap();
        for kind in all_classifiers() {
            let m = fit_machine(&MachineSpec::new(kind.clone()), &data).unwrap();
            let acc = data
                .rows()
                .zip(&labels)
                .filter(|(x, &l)| m.predict_label(x).unwrap() == l)
                .count() as f64
                / 300.0;
            assert!(acc > 0.8, "{} accuracy {acc}", kind.name());
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 60, 5, 1.0, 1)).unwrap();
        let q = [0.2, 0.4, 0.6, 0.8, 0.1];
        for kind in all_regressors() {
            let spec = MachineSpec::new(kind).with_seed(5);
            let a = fit_machine(&spec, &data).unwrap().predict(&q).unwrap();
            let b = fit_machine(&spec, &data).unwrap().predict(&q).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn regressors_ignore_training_row_order() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 50, 5, 1.0, 21)).unwrap();
        let reversed: Vec<usize> = (0..50).rev().collect();
        let shuffled = data.select(&reversed);
        let q = [0.25, 0.5, 0.75, 0.1, 0.9];
        for kind in [MachineKind::ridge(), MachineKind::lasso(), MachineKind::knn(), MachineKind::decision_tree()] {
            let a = fit_machine(&MachineSpec::new(kind.clone()), &data).unwrap().predict(&q).unwrap();
            let b = fit_machine(&MachineSpec::new(kind.clone()), &shuffled).unwrap().predict(&q).unwrap();
            assert!((a - b).abs() < 1e-9, "{}: {a} vs {b}", kind.name());
        }
    }

    #[test]
    fn lasso_non_convergence_is_a_warning() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 50, 8, 1.0, 2)).unwrap();
        let spec = MachineSpec::new(MachineKind::Lasso {
            alpha: 1e-6,
            max_iter: 1,
            tol: 1e-12,
        });
        let m = fit_machine(&spec, &data).unwrap();
        assert_eq!(m.warnings().len(), 1);
        assert!(m.predict(data.row(0)).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let m = fit_machine(&MachineSpec::new(MachineKind::ridge()), &line_data()).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(CobraError::Shape { .. })));
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        for kind in [
            MachineKind::Knn { k: 0 },
            MachineKind::Ridge { alpha: -1.0 },
            MachineKind::RandomForest {
                n_trees: 0,
                max_depth: 3,
                min_samples_leaf: 1,
                max_features: None,
                bootstrap: true,
            },
        ] {
            assert!(matches!(
                fit_machine(&MachineSpec::new(kind), &line_data()),
                Err(CobraError::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn classifiers_require_integer_labels() {
        let data = Dataset::new(vec![0.0, 1.0], 1, Some(vec![0.5, 1.0])).unwrap();
        assert!(matches!(
            fit_machine(&MachineSpec::new(MachineKind::naive_bayes()), &data),
            Err(CobraError::Label(_))
        ));
    }

    #[test]
    fn spec_json_uses_defaults() {
        let spec: MachineSpec = serde_json::from_str(r#"{"kind": "random-forest", "n_trees": 7}"#).unwrap();
        assert_eq!(
            spec.kind,
            MachineKind::RandomForest {
                n_trees: 7,
                max_depth: 10,
                min_samples_leaf: 1,
                max_features: None,
                bootstrap: true
            }
        );
        assert_eq!(spec.display_name(), "random-forest");
    }

    #[test]
    fn fitted_machine_survives_json() {
        let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 40, 5, 1.0, 9)).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::decision_tree()), &data).unwrap();
        let back: TrainedMachine = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        for x in data.rows() {
            assert_eq!(m.predict(x).unwrap(), back.predict(x).unwrap());
        }
    }

    #[test]
    fn majority_ties_go_to_smallest_label() {
        assert_eq!(majority_label([3, 1, 3, 1, 2]), 1);
        assert_eq!(majority_label([5]), 5);
    }
}
