//! Bayesian adaptive estimation of psychometric functions.
//!
//! The crate keeps a Laplace-approximated posterior over the parameters of a
//! cumulative-Gaussian psychometric function and chooses each next stimulus
//! to maximize the expected information about either the whole parameter
//! vector or a single scalar functional of it (threshold, width, slope, or a
//! user-defined map).
//!
//! Modules:
//! - [`psychometric`]: function families, parameterization, functionals.
//! - [`bayes`]: prior, likelihood, Laplace fit, sampling, grid oracle.
//! - [`placement`]: information criteria, stimulus selection, stopping rules.
//! - [`density`]: Gaussian, kernel and histogram entropy estimators.

pub mod bayes;
pub mod density;
pub mod error;
pub mod normal;
pub mod placement;
pub mod psychometric;
pub mod rng;

pub use error::{Error, Result};
