use serde::{Deserialize, Serialize};

use crate::data::Dataset;

/// Gaussian naive Bayes. Every class variance is inflated by
/// `var_smoothing` times the largest feature variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNaiveBayes {
    classes: Vec<i64>,
    log_prior: Vec<f64>,
    /// Row-major `classes x d`.
    means: Vec<f64>,
    vars: Vec<f64>,
}

impl GaussianNaiveBayes {
    pub fn fit(data: &Dataset, labels: &[i64], var_smoothing: f64) -> Self {
        let (n, d) = (data.n(), data.d());
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let c = classes.len();

        let mut counts = vec![0usize; c];
        let mut means = vec![0.0; c * d];
        for (row, l) in data.rows().zip(labels) {
            let k = classes.binary_search(l).expect("label present");
            counts[k] += 1;
            means[k * d..(k + 1) * d].iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        for k in 0..c {
            means[k * d..(k + 1) * d].iter_mut().for_each(|m| *m /= counts[k] as f64);
        }
        let mut vars = vec![0.0; c * d];
        for (row, l) in data.rows().zip(labels) {
            let k = classes.binary_search(l).expect("label present");
            for j in 0..d {
                vars[k * d + j] += (row[j] - means[k * d + j]).powi(2);
            }
        }
        for k in 0..c {
            vars[k * d..(k + 1) * d].iter_mut().for_each(|v| *v /= counts[k] as f64);
        }

        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let col_mean = data.rows().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = data.rows().map(|r| (r[j] - col_mean).powi(2)).sum::<f64>() / n as f64;
            max_var = max_var.max(var);
        }
        let epsilon = (var_smoothing * max_var).max(f64::MIN_POSITIVE);
        vars.iter_mut().for_each(|v| *v += epsilon);

        let log_prior = counts.iter().map(|&k| (k as f64 / n as f64).ln()).collect();
        Self {
            classes,
            log_prior,
            means,
            vars,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.classes.len() {
            let mut score = self.log_prior[k];
            let vars = &self.vars[k * d..(k + 1) * d];
            let means = &self.means[k * d..(k + 1) * d];
            for ((xj, mean), var) in x.iter().zip(means).zip(vars) {
                score -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (xj - mean).powi(2) / var);
            }
            if score > best.1 {
                best = (k, score);
            }
        }
        self.classes[best.0] as f64
    }
}
