//! Datasets, the two-sample split, and the cached machine-prediction matrix.
//!
//! Everything here is immutable once built. Rows are stored densely in
//! row-major order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CobraError, Result};
use crate::machines::TrainedMachine;

/// A dense `n x d` feature matrix with optional per-row targets.
///
/// Targets hold real outputs for regression and integer-valued labels for
/// classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Option<Vec<f64>>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, d: usize, targets: Option<Vec<f64>>) -> Result<Self> {
        if d == 0 {
            return Err(CobraError::InvalidData("feature dimension must be at least 1".into()));
        }
        if features.is_empty() || !features.len().is_multiple_of(d) {
            return Err(CobraError::InvalidData(format!(
                "{} feature values do not form whole rows of width {d}",
                features.len()
            )));
        }
        let n = features.len() / d;
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(CobraError::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(t) = &targets {
            if t.len() != n {
                return Err(CobraError::shape("targets", n, t.len()));
            }
            if let Some(pos) = t.iter().position(|v| !v.is_finite()) {
                return Err(CobraError::InvalidData(format!("non-finite target at row {pos}")));
            }
        }
        Ok(Self {
            features,
            targets,
            n,
            d,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Option<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(CobraError::shape("row width", d, bad.len()));
        }
        Self::new(rows.concat(), d, targets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }

    pub fn require_targets(&self) -> Result<&[f64]> {
        self.targets()
            .ok_or_else(|| CobraError::InvalidData("dataset has no targets".into()))
    }

    /// Targets read as integer class labels.
    pub fn labels(&self) -> Result<Vec<i64>> {
        self.require_targets()?
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y.fract() == 0.0 && y.abs() < 9.0e15 {
                    Ok(y as i64)
                } else {
                    Err(CobraError::Label(format!("target {y} at row {i} is not an integer label")))
                }
            })
            .collect()
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let targets = self
            .targets
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        Dataset {
            features,
            targets,
            n: indices.len(),
            d: self.d,
        }
    }

    pub fn without_targets(&self) -> Dataset {
        Dataset {
            targets: None,
            ..self.clone()
        }
    }

    /// Replace the targets; lengths must agree.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), self.d, Some(targets))
    }

    /// Per-column `(min, max)` bounds.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.d];
        for row in self.rows() {
            for (b, &v) in out.iter_mut().zip(row) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        out
    }
}

/// The two disjoint halves of a training sample: `D_k` fits the machines,
/// `D_ℓ` is the retained half whose points get weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train_half: Dataset,
    pub retained_half: Dataset,
    /// Source row of each `train_half` row.
    pub train_indices: Vec<usize>,
    /// Source row of each `retained_half` row.
    pub retained_indices: Vec<usize>,
}

impl SplitPair {
    pub fn k(&self) -> usize {
        self.train_half.n()
    }

    pub fn ell(&self) -> usize {
        self.retained_half.n()
    }
}

/// `⌈n/2⌉`, the split size used when none is given.
pub fn default_split_size(n: usize) -> usize {
    n.div_ceil(2)
}

/// Shuffle rows with a seeded RNG, then send the first `k` to `D_k` and the
/// remaining `n - k` to `D_ℓ`.
pub fn split_dataset(data: &Dataset, k: usize, seed: u64) -> Result<SplitPair> {
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    split_by_order(data, k, order)
}

/// Split keeping the source row order.
pub fn split_ordered(data: &Dataset, k: usize) -> Result<SplitPair> {
    split_by_order(data, k, (0..data.n()).collect())
}

fn split_by_order(data: &Dataset, k: usize, order: Vec<usize>) -> Result<SplitPair> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(CobraError::InvalidSplit { k, n });
    }
    data.require_targets()?;
    let (first, second) = order.split_at(k);
    Ok(SplitPair {
        train_half: data.select(first),
        retained_half: data.select(second),
        train_indices: first.to_vec(),
        retained_indices: second.to_vec(),
    })
}

/// Seeded shuffle followed by a cut into `(train, test)` with
/// `round(n * test_fraction)` test rows (at least one of each).
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CobraError::InvalidParameter(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let n = data.n();
    if n < 2 {
        return Err(CobraError::InvalidSplit { k: n, n });
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (test, train) = order.split_at(n_test);
    Ok((data.select(train), data.select(test)))
}

/// `M x ℓ` table whose entry `(m, i)` is machine `m`'s prediction at retained
/// point `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    values: Vec<f64>,
    machines: usize,
    points: usize,
}

impl PredictionMatrix {
    /// Build from per-machine rows, each of length `ℓ`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let machines = rows.len();
        if machines == 0 {
            return Err(CobraError::EmptyEnsemble);
        }
        let points = rows[0].len();
        if points == 0 {
            return Err(CobraError::InvalidData("prediction matrix has no columns".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != points) {
            return Err(CobraError::shape("prediction matrix row", points, bad.len()));
        }
        let values = rows.concat();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CobraError::InvalidData("prediction matrix has non-finite entries".into()));
        }
        Ok(Self {
            values,
            machines,
            points,
        })
    }

    pub fn n_machines(&self) -> usize {
        self.machines
    }

    pub fn n_points(&self) -> usize {
        self.points
    }

    pub fn get(&self, machine: usize, point: usize) -> f64 {
        self.values[machine * self.points + point]
    }

    /// Predictions of one machine over all retained points.
    pub fn machine_row(&self, machine: usize) -> &[f64] {
        &self.values[machine * self.points..(machine + 1) * self.points]
    }

    pub fn machine_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.points)
    }

    /// All machines' predictions at retained point `i`.
    pub fn column(&self, point: usize) -> Vec<f64> {
        (0..self.machines).map(|m| self.get(m, point)).collect()
    }

    /// `max - min` over every entry.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Reorder columns: new column `j` is old column `perm[j]`.
    pub fn permute_points(&self, perm: &[usize]) -> Self {
        let rows = self
            .machine_rows()
            .map(|row| perm.iter().map(|&j| row[j]).collect())
            .collect();
        Self::from_rows(rows).expect("permutation of a valid matrix")
    }
}

/// Evaluate every machine at every row of `points`.
pub fn build_prediction_matrix(machines: &[TrainedMachine], points: &Dataset) -> Result<PredictionMatrix> {
    if machines.is_empty() {
        return Err(CobraError::EmptyEnsemble);
    }
    let mut rows = Vec::with_capacity(machines.len());
    for machine in machines {
        let mut row = Vec::with_capacity(points.n());
        for (i, x) in points.rows().enumerate() {
            let y = machine.predict(x)?;
            if !y.is_finite() {
                return Err(CobraError::MachineOutput {
                    machine: machine.name().to_string(),
                    row: i,
                });
            }
            row.push(y);
        }
        rows.push(row);
    }
    PredictionMatrix::from_rows(rows)
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mix a base seed with a stream index (splitmix64 finalizer) so that runs,
/// folds and trees each draw from their own reproducible stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    }
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> f64 {
    let ss: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    (ss / targets.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::{fit_machine, MachineKind, MachineSpec};

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = (0..n).map(|i| 10.0 + i as f64).collect();
        Dataset::from_rows(&rows, Some(y)).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(&toy(10), 5, 1).unwrap();
        assert_eq!((s.k(), s.ell()), (5, 5));
        let s = split_dataset(&toy(10), 7, 1).unwrap();
        assert_eq!((s.k(), s.ell()), (7, 3));
    }

    #[test]
    fn split_rejects_degenerate_k() {
        assert!(matches!(split_dataset(&toy(10), 10, 1), Err(CobraError::InvalidSplit { k: 10, n: 10 })));
        assert!(matches!(split_dataset(&toy(10), 0, 1), Err(CobraError::InvalidSplit { .. })));
    }

    #[test]
    fn split_requires_targets() {
        assert!(split_dataset(&toy(4).without_targets(), 2, 0).is_err());
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let data = toy(23);
        let a = split_dataset(&data, 11, 99).unwrap();
        let b = split_dataset(&data, 11, 99).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.train_indices.iter().chain(&a.retained_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for (j, &src) in a.retained_indices.iter().enumerate() {
            assert_eq!(a.retained_half.row(j), data.row(src));
            assert_eq!(a.retained_half.targets().unwrap()[j], data.targets().unwrap()[src]);
        }
    }

    #[test]
    fn default_split_is_ceil_half() {
        assert_eq!(default_split_size(10), 5);
        assert_eq!(default_split_size(11), 6);
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert!(Dataset::new(vec![1.0, f64::NAN], 1, None).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 1, Some(vec![1.0, f64::INFINITY])).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 1, Some(vec![1.0])).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, None).is_err());
    }

    #[test]
    fn constant_machine_matrix() {
        let data = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, Some(vec![3.0; 4])).unwrap();
        let m = fit_machine(&MachineSpec::new(MachineKind::ridge()), &data).unwrap();
        let pm = build_prediction_matrix(&[m], &data).unwrap();
        assert_eq!((pm.n_machines(), pm.n_points()), (1, 4));
        for i in 0..4 {
            assert!((pm.get(0, i) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(matches!(build_prediction_matrix(&[], &toy(3)), Err(CobraError::EmptyEnsemble)));
    }

    #[test]
    fn matrix_matches_pointwise_predictions() {
        let data = toy(12);
        let machines: Vec<_> = [MachineKind::ridge(), MachineKind::decision_tree()]
            .into_iter()
            .map(|k| fit_machine(&MachineSpec::new(k), &data).unwrap())
            .collect();
        let pts = toy(3);
        let pm = build_prediction_matrix(&machines, &pts).unwrap();
        for (m, machine) in machines.iter().enumerate() {
            for i in 0..3 {
                assert_eq!(pm.get(m, i), machine.predict(pts.row(i)).unwrap());
            }
        }
    }

    #[test]
    fn train_test_split_sizes() {
        let (train, test) = train_test_split(&toy(800), 0.25, 3).unwrap();
        assert_eq!((train.n(), test.n()), (600, 200));
    }

    #[test]
    fn summary_stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[1.0, 3.0], &[1.0, 1.0]), 2.0f64.sqrt());
    }
}
