use serde::{Deserialize, Serialize};

use super::{majority_label, Task};
use crate::data::Dataset;

/// Brute-force Euclidean k-nearest neighbours. Distance ties are broken by
/// training row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    points: Dataset,
    values: Vec<f64>,
    k: usize,
    task: Task,
}

impl Knn {
    pub fn fit(data: &Dataset, values: Vec<f64>, k: usize, task: Task) -> Self {
        Self {
            points: data.without_targets(),
            k: k.min(data.n()),
            values,
            task,
        }
    }

    fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .rows()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let idx = self.neighbours(x);
        match self.task {
            Task::Regression => idx.iter().map(|&i| self.values[i]).sum::<f64>() / idx.len() as f64,
            Task::Classification => majority_label(idx.iter().map(|&i| self.values[i] as i64)) as f64,
        }
    }
}
