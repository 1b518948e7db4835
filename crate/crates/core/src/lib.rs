//! Weighted-Lasso estimation for sparse logistic regression.
//!
//! The crate bundles data-dependent penalty weights ([`weights`]), a FISTA
//! solver with KKT certificates ([`solver`]), cross-validated tuning
//! ([`tuning`]), oracle-bound calculators ([`theory`]) and a Monte-Carlo
//! harness for the AR(1) Gaussian designs ([`sim`]).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod io;
pub mod logistic;
pub mod solver;
pub mod sim;
pub mod theory;
pub mod tuning;
pub mod weights;

pub use dataset::{Coefficients, Dataset, SupportSet};
pub use error::{Error, Result};
pub use solver::{fit, fit_by_transform, FitResult, SolverConfig};
pub use weights::{normalize, WeightConfig, WeightScheme, WeightVector};
