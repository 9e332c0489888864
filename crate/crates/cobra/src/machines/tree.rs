//! CART trees (variance reduction for regression, Gini for classification)
//! and bagged forests built from them.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::majority_label;
use crate::data::{derive_seed, rng_from_seed, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered at each split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn new(max_depth: usize, min_samples_leaf: usize) -> Self {
        Self {
            max_depth,
            min_samples_leaf,
            max_features: None,
        }
    }

    pub fn with_max_features(mut self, max_features: usize) -> Self {
        self.max_features = Some(max_features);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

/// Targets as seen by the split search.
enum Targets<'a> {
    Real(&'a [f64]),
    /// Class index per row, plus the label of each class index.
    Class(Vec<usize>, Vec<i64>),
}

struct Builder<'a> {
    data: &'a Dataset,
    targets: Targets<'a>,
    params: &'a TreeParams,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
    // Scratch buffers reused across nodes.
    order: Vec<(f64, usize)>,
    class_left: Vec<f64>,
    class_total: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> Builder<'a> {
    fn new(data: &'a Dataset, targets: Targets<'a>, params: &'a TreeParams, rng: Option<ChaCha8Rng>) -> Self {
        let n_classes = match &targets {
            Targets::Class(_, labels) => labels.len(),
            Targets::Real(_) => 0,
        };
        Self {
            data,
            targets,
            params,
            rng,
            nodes: Vec::new(),
            order: Vec::new(),
            class_left: vec![0.0; n_classes],
            class_total: vec![0.0; n_classes],
        }
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match &self.targets {
            Targets::Real(y) => idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64,
            Targets::Class(cls, labels) => majority_label(idx.iter().map(|&i| labels[cls[i]])) as f64,
        }
    }

    /// Sum of squared deviations (regression) or `n · gini` (classification).
    fn impurity(&mut self, idx: &[usize]) -> f64 {
        let n = idx.len() as f64;
        match &self.targets {
            Targets::Real(y) => {
                let (s, ss) = idx.iter().fold((0.0, 0.0), |(s, ss), &i| (s + y[i], ss + y[i] * y[i]));
                (ss - s * s / n).max(0.0)
            }
            Targets::Class(cls, _) => {
                self.class_total.iter_mut().for_each(|c| *c = 0.0);
                for &i in idx {
                    self.class_total[cls[i]] += 1.0;
                }
                n - self.class_total.iter().map(|c| c * c).sum::<f64>() / n
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.d();
        match (self.params.max_features, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Best split of `idx`, scored so that larger is better:
    /// `Σ s²/n` per side for regression, `Σ c²/n` per side for Gini.
    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let min_leaf = self.params.min_samples_leaf;
        let n = idx.len();
        if n < 2 * min_leaf {
            return None;
        }
        let mut best: Option<BestSplit> = None;
        for feature in self.candidate_features() {
            self.order.clear();
            self.order.extend(idx.iter().map(|&i| (self.data.row(i)[feature], i)));
            self.order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let found = match &self.targets {
                Targets::Real(y) => {
                    let total: f64 = self.order.iter().map(|&(_, i)| y[i]).sum();
                    let mut left = 0.0;
                    let mut local: Option<(usize, f64)> = None;
                    for p in 1..n {
                        left += y[self.order[p - 1].1];
                        if p < min_leaf || n - p < min_leaf || self.order[p - 1].0 == self.order[p].0 {
                            continue;
                        }
                        let right = total - left;
                        let score = left * left / p as f64 + right * right / (n - p) as f64;
                        if local.is_none_or(|(_, s)| score > s) {
                            local = Some((p, score));
                        }
                    }
                    local
                }
                Targets::Class(cls, _) => {
                    self.class_left.iter_mut().for_each(|c| *c = 0.0);
                    self.class_total.iter_mut().for_each(|c| *c = 0.0);
                    for &(_, i) in &self.order {
                        self.class_total[cls[i]] += 1.0;
                    }
                    let mut local: Option<(usize, f64)> = None;
                    for p in 1..n {
                        self.class_left[cls[self.order[p - 1].1]] += 1.0;
                        if p < min_leaf || n - p < min_leaf || self.order[p - 1].0 == self.order[p].0 {
                            continue;
                        }
                        let (mut sl, mut sr) = (0.0, 0.0);
                        for (l, t) in self.class_left.iter().zip(&self.class_total) {
                            sl += l * l;
                            sr += (t - l) * (t - l);
                        }
                        let score = sl / p as f64 + sr / (n - p) as f64;
                        if local.is_none_or(|(_, s)| score > s) {
                            local = Some((p, score));
                        }
                    }
                    local
                }
            };
            if let Some((p, score)) = found {
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (lo, hi) = (self.order[p - 1].0, self.order[p].0);
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(idx),
        });
        if depth >= self.params.max_depth {
            return id;
        }
        let impurity = self.impurity(idx);
        if impurity <= 1e-12 {
            return id;
        }
        let Some(split) = self.best_split(idx) else {
            return id;
        };
        // Parent "score" is the same statistic with no split; the gain must be
        // meaningfully positive.
        let parent_score = match &self.targets {
            Targets::Real(y) => {
                let s: f64 = idx.iter().map(|&i| y[i]).sum();
                s * s / idx.len() as f64
            }
            Targets::Class(..) => idx.len() as f64 - impurity,
        };
        if split.score - parent_score <= 1e-12 * impurity.max(1.0) {
            return id;
        }
        let data = self.data;
        let mut cut = 0;
        for j in 0..idx.len() {
            if data.row(idx[j])[split.feature] <= split.threshold {
                idx.swap(cut, j);
                cut += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(cut);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    fn fit_with(data: &Dataset, targets: Targets<'_>, rows: &mut [usize], params: &TreeParams, rng: Option<ChaCha8Rng>) -> Self {
        let mut builder = Builder::new(data, targets, params, rng);
        builder.build(rows, 0);
        Self { nodes: builder.nodes }
    }

    pub fn fit_regression(data: &Dataset, y: &[f64], params: &TreeParams) -> Self {
        let mut rows: Vec<usize> = (0..data.n()).collect();
        Self::fit_with(data, Targets::Real(y), &mut rows, params, None)
    }

    pub fn fit_classification(data: &Dataset, labels: &[i64], params: &TreeParams) -> Self {
        let mut rows: Vec<usize> = (0..data.n()).collect();
        Self::fit_with(data, class_targets(labels), &mut rows, params, None)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

fn class_targets(labels: &[i64]) -> Targets<'static> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let idx = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    Targets::Class(idx, classes)
}

/// Bagged regression trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn fit_regression(data: &Dataset, y: &[f64], n_trees: usize, bootstrap: bool, params: &TreeParams, seed: u64) -> Self {
        let n = data.n();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(seed, t as u64));
                let mut rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_with(data, Targets::Real(y), &mut rows, params, Some(rng))
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
