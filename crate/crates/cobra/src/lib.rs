//! Consensus-based aggregation of regression and classification machines.
//!
//! A roster of base machines is fitted on one half of the training data
//! (`D_k`); their predictions on the other half (`D_ℓ`) are cached in a
//! [`PredictionMatrix`]. A query is answered by weighting the retained points
//! according to how closely the machines' predictions there agree with their
//! predictions at the query, then averaging the retained targets.
//!
//! ```
//! use cobra::{
//!     aggregation::{Aggregator, AggregatorConfig, EstimatorKind},
//!     data::split_dataset,
//!     datagen::{generate, GeneratorKind, GeneratorSpec},
//!     machines::{default_regression_roster, fit_machines},
//! };
//!
//! let data = generate(&GeneratorSpec::new(GeneratorKind::Friedman1, 200, 10, 1.0, 7)).unwrap();
//! let split = split_dataset(&data, 100, 7).unwrap();
//! let roster = default_regression_roster(7);
//! let machines = fit_machines(&roster, &split.train_half).unwrap();
//! let agg = Aggregator::from_split(machines, &split).unwrap();
//! let y = agg
//!     .predict(EstimatorKind::KernelCobra, &AggregatorConfig::default(), data.row(0))
//!     .unwrap();
//! assert!(y.as_f64().is_finite());
//! ```

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod bench;
pub mod data;
pub mod datagen;
pub mod error;
pub mod kernels;
pub mod machines;
pub mod tuning;

pub use aggregation::{Aggregator, AggregatorConfig, EstimatorKind, Prediction, WeightVector};
pub use data::{Dataset, PredictionMatrix, SplitPair};
pub use error::{CobraError, Result};
pub use machines::{MachineKind, MachineSpec, Task, TrainedMachine};
