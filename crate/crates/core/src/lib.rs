//! Robust Gibbs-type posterior distributions built from pairwise tests.
//!
//! The posterior weighs each candidate distribution `P` by
//! `exp(-β T(X, P))`, where `T(X, P)` is a Gibbs average over competitors
//! `Q` of the summed test statistics `t_(P,Q)(X_i)`. Depending on the test
//! family the result is robust to contamination (total variation,
//! Hellinger) or reduces to the classical Bayes posterior (log-likelihood
//! ratios).

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod density;
pub mod error;
pub mod experiment;
pub mod family;
pub mod geometry;
pub mod loss;
pub mod models;
pub mod posterior;
pub mod quad;

pub use density::{CustomDensity, Density, MixtureMeasure};
pub use error::{Error, Result};
pub use family::{FamilyKind, TestFamily};
pub use loss::{LossKind, LossSpec};
pub use posterior::{Atom, Dataset, FinitePrior, PosteriorConfig, SampledPrior};
