//! Scalar proximity kernels between a machine's prediction at a retained
//! point and its prediction at the query.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CobraError, Result};

/// `|a - b|`: the Euclidean distance on the real line.
pub fn scalar_distance(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// A symmetric proximity `K(a, b)` with values in `[0, 1]` and `K(a, a) = 1`.
///
/// Implement this to plug a custom kernel into general kernel weights.
pub trait ScalarKernel: Send + Sync {
    fn eval(&self, a: f64, b: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `exp(-λ|a-b|)`
    Exponential,
    /// `exp(-λ(a-b)²)`
    Gaussian,
    /// `1{|a-b| <= ε}`
    Threshold,
    /// `max(0, 1 - |a-b|/ε)`
    Triangular,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Exponential => "exponential",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Threshold => "threshold",
            KernelKind::Triangular => "triangular",
        })
    }
}

impl FromStr for KernelKind {
    type Err = CobraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(KernelKind::Exponential),
            "gaussian" => Ok(KernelKind::Gaussian),
            "threshold" => Ok(KernelKind::Threshold),
            "triangular" => Ok(KernelKind::Triangular),
            other => Err(CobraError::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel kind plus bandwidth: the temperature `λ` for exponential and
/// gaussian kernels, the radius `ε` for threshold and triangular ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        let spec = Self { kind, bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth > 0.0 && self.bandwidth.is_finite() {
            Ok(())
        } else {
            Err(CobraError::InvalidParameter(format!(
                "kernel bandwidth {} must be positive and finite",
                self.bandwidth
            )))
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::Exponential,
            bandwidth: 1.0,
        }
    }
}

impl ScalarKernel for KernelSpec {
    fn eval(&self, a: f64, b: f64) -> f64 {
        kernel_eval(self, a, b)
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: f64, b: f64) -> f64 {
    let dist = scalar_distance(a, b);
    match spec.kind {
        KernelKind::Exponential => (-spec.bandwidth * dist).exp(),
        KernelKind::Gaussian => (-spec.bandwidth * dist * dist).exp(),
        KernelKind::Threshold => {
            if dist <= spec.bandwidth {
                1.0
            } else {
                0.0
            }
        }
        KernelKind::Triangular => (1.0 - dist / spec.bandwidth).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [KernelKind; 4] = [
        KernelKind::Exponential,
        KernelKind::Gaussian,
        KernelKind::Threshold,
        KernelKind::Triangular,
    ];

    #[test]
    fn distance_examples() {
        assert_eq!(scalar_distance(3.0, 3.0), 0.0);
        assert_eq!(scalar_distance(1.0, 4.0), 3.0);
        assert_eq!(scalar_distance(-2.0, 2.0), 4.0);
        assert_eq!(scalar_distance(2.0, -2.0), 4.0);
    }

    #[test]
    fn kernel_examples() {
        for kind in KINDS {
            assert_eq!(kernel_eval(&KernelSpec::new(kind, 0.7).unwrap(), 1.25, 1.25), 1.0);
        }
        let threshold = KernelSpec::new(KernelKind::Threshold, 0.5).unwrap();
        assert_eq!(kernel_eval(&threshold, 0.0, 0.6), 0.0);
        assert_eq!(kernel_eval(&threshold, 0.0, 0.5), 1.0);
        let exponential = KernelSpec::new(KernelKind::Exponential, 1.0).unwrap();
        // e^{-1} to 16 significant digits.
        assert!((kernel_eval(&exponential, 0.0, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        let triangular = KernelSpec::new(KernelKind::Triangular, 2.0).unwrap();
        assert_eq!(kernel_eval(&triangular, 0.0, 1.0), 0.5);
        assert_eq!(kernel_eval(&triangular, 0.0, 3.0), 0.0);
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelSpec::new(KernelKind::Gaussian, 0.0).is_err());
        assert!(KernelSpec::new(KernelKind::Gaussian, f64::INFINITY).is_err());
    }

    #[test]
    fn kind_round_trips_through_str() {
        for kind in KINDS {
            assert_eq!(kind.to_string().parse::<KernelKind>().unwrap(), kind);
        }
    }

    fn any_kind() -> impl Strategy<Value = KernelKind> {
        prop::sample::select(KINDS.to_vec())
    }

    proptest! {
        #[test]
        fn values_in_unit_interval_and_symmetric(kind in any_kind(), bw in 1e-3f64..1e3, a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let spec = KernelSpec::new(kind, bw).unwrap();
            let k = kernel_eval(&spec, a, b);
            prop_assert!((0.0..=1.0).contains(&k));
            prop_assert_eq!(k, kernel_eval(&spec, b, a));
            prop_assert_eq!(kernel_eval(&spec, a, a), 1.0);
        }

        #[test]
        fn monotone_decay(kind in any_kind(), bw in 1e-2f64..1e2, a in -10f64..10.0, d1 in 0f64..5.0, d2 in 0f64..5.0) {
            let spec = KernelSpec::new(kind, bw).unwrap();
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(kernel_eval(&spec, a, a + near) >= kernel_eval(&spec, a, a + far));
        }

        #[test]
        fn exponential_product_is_exponential_of_sum(lambda in 0f64..5.0, dists in prop::collection::vec(0f64..3.0, 1..6)) {
            let spec = KernelSpec { kind: KernelKind::Exponential, bandwidth: lambda.max(1e-9) };
            let product: f64 = dists.iter().map(|&d| kernel_eval(&spec, 0.0, d)).product();
            let summed = (-spec.bandwidth * dists.iter().sum::<f64>()).exp();
            prop_assert!((product - summed).abs() <= 1e-12);
        }
    }
}
