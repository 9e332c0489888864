use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

/// Affine model `x · coef + intercept`, fitted by ridge or lasso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

struct Centered {
    x: Vec<f64>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(data: &Dataset, y: &[f64]) -> Centered {
    let (n, d) = (data.n(), data.d());
    let mut x_mean = vec![0.0; d];
    for row in data.rows() {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let x = data
        .rows()
        .flat_map(|row| row.iter().zip(&x_mean).map(|(v, m)| v - m))
        .collect();
    let y = y.iter().map(|v| v - y_mean).collect();
    Centered { x, y, x_mean, y_mean }
}

impl Linear {
    /// Normal equations `(XᵀX + αI) w = Xᵀy` on centered data, so the
    /// intercept is not penalized. A singular system is solved with the
    /// pseudo-inverse.
    pub fn fit_ridge(data: &Dataset, y: &[f64], alpha: f64) -> Self {
        let (n, d) = (data.n(), data.d());
        let c = center(data, y);
        let x = DMatrix::from_row_slice(n, d, &c.x);
        let yv = DVector::from_column_slice(&c.y);
        let mut gram = x.transpose() * &x;
        for j in 0..d {
            gram[(j, j)] += alpha;
        }
        let rhs = x.transpose() * yv;
        let w = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                let pinv = gram
                    .pseudo_inverse(1e-12)
                    .expect("pseudo-inverse with nonnegative epsilon");
                pinv * rhs
            }
        };
        let coef: Vec<f64> = w.iter().copied().collect();
        let intercept = c.y_mean - coef.iter().zip(&c.x_mean).map(|(w, m)| w * m).sum::<f64>();
        Self { coef, intercept }
    }

    /// Cyclic coordinate descent on `(1/2n)‖y - Xw - b‖² + α‖w‖₁`.
    /// Returns the model and whether the max coefficient change dropped
    /// below `tol` within `max_iter` sweeps.
    pub fn fit_lasso(data: &Dataset, y: &[f64], alpha: f64, max_iter: usize, tol: f64) -> (Self, bool) {
        let (n, d) = (data.n(), data.d());
        let c = center(data, y);
        // Column-major copy for contiguous coordinate updates.
        let mut cols = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                cols[j * n + i] = c.x[i * d + j];
            }
        }
        let norms: Vec<f64> = cols.chunks_exact(n).map(|col| col.iter().map(|v| v * v).sum()).collect();
        let mut w = vec![0.0; d];
        let mut residual = c.y.clone();
        let threshold = alpha * n as f64;
        let mut converged = false;
        for _ in 0..max_iter {
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                if norms[j] == 0.0 {
                    continue;
                }
                let col = &cols[j * n..(j + 1) * n];
                let old = w[j];
                let rho: f64 = col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>() + norms[j] * old;
                let new = soft_threshold(rho, threshold) / norms[j];
                if new != old {
                    let delta = new - old;
                    for (r, x) in residual.iter_mut().zip(col) {
                        *r -= delta * x;
                    }
                    w[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < tol {
                converged = true;
                break;
            }
        }
        let intercept = c.y_mean - w.iter().zip(&c.x_mean).map(|(w, m)| w * m).sum::<f64>();
        (Self { coef: w, intercept }, converged)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent with an L2 penalty on the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    classes: Vec<i64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major `classes x d`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Logistic {
    pub fn fit(data: &Dataset, labels: &[i64], step: f64, iterations: usize, l2: f64) -> Self {
        let (n, d) = (data.n(), data.d());
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let c = classes.len();
        let target: Vec<usize> = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label present"))
            .collect();

        let mut mean = vec![0.0; d];
        for row in data.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut scale = vec![0.0; d];
        for row in data.rows() {
            scale.iter_mut().zip(row.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2));
        }
        scale.iter_mut().for_each(|s| {
            *s = (*s / n as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        });
        let z: Vec<f64> = data
            .rows()
            .flat_map(|row| row.iter().zip(mean.iter().zip(&scale)).map(|(v, (m, s))| (v - m) / s))
            .collect();

        let mut weights = vec![0.0; c * d];
        let mut bias = vec![0.0; c];
        if c > 1 {
            let mut probs = vec![0.0; c];
            let mut grad_w = vec![0.0; c * d];
            let mut grad_b = vec![0.0; c];
            for _ in 0..iterations {
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                grad_b.iter_mut().for_each(|g| *g = 0.0);
                for (i, xi) in z.chunks_exact(d).enumerate() {
                    softmax_scores(&weights, &bias, xi, &mut probs);
                    for k in 0..c {
                        let err = probs[k] - if target[i] == k { 1.0 } else { 0.0 };
                        grad_b[k] += err;
                        for (g, x) in grad_w[k * d..(k + 1) * d].iter_mut().zip(xi) {
                            *g += err * x;
                        }
                    }
                }
                for (w, g) in weights.iter_mut().zip(&grad_w) {
                    *w -= step * (g / n as f64 + l2 * *w);
                }
                for (b, g) in bias.iter_mut().zip(&grad_b) {
                    *b -= step * g / n as f64;
                }
            }
        }
        Self {
            classes,
            mean,
            scale,
            weights,
            bias,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let z: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.classes.len() {
            let score = self.bias[k]
                + self.weights[k * d..(k + 1) * d]
                    .iter()
                    .zip(&z)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            if score > best.1 {
                best = (k, score);
            }
        }
        self.classes[best.0] as f64
    }
}

fn softmax_scores(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = bias[k] + weights[k * d..(k + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lasso_with_zero_penalty_matches_least_squares() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 / 10.0, ((i * 7) % 5) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 * r[0] - 0.5 * r[1] + 2.0).collect();
        let data = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let (lasso, converged) = Linear::fit_lasso(&data, &y, 0.0, 10_000, 1e-12);
        assert!(converged);
        assert!((lasso.coef[0] - 1.5).abs() < 1e-8);
        assert!((lasso.coef[1] + 0.5).abs() < 1e-8);
        assert!((lasso.intercept - 2.0).abs() < 1e-8);
    }

    #[test]
    fn large_lasso_penalty_zeroes_coefficients() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let data = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let (m, _) = Linear::fit_lasso(&data, &y, 1e6, 100, 1e-6);
        assert_eq!(m.coef, vec![0.0]);
        assert!((m.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }
}
