//! Bayesian multivariate Bernoulli mixture models for profiling units
//! described by binary indicators.
//!
//! The pipeline runs in stages:
//!
//! 1. [`dataset`]: raw indicator tables are dichotomized against per-column
//!    thresholds (median split by default).
//! 2. [`sampler`]: a Metropolis-coupled MCMC with an allocation sampler and
//!    an unknown number of components draws from the posterior.
//! 3. [`postprocess`]: the modal number of occupied components is selected,
//!    label switching is undone by ECR relabeling, and units are assigned to
//!    profiles; undersized profiles are dissolved.
//! 4. [`regression`]: a Bayesian logistic regression relates profile
//!    membership to a binary outcome, reported as odds ratios.
//!
//! [`oracle`] holds the exact-enumeration posterior and the synthetic data
//! generator used to validate the sampler.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod oracle;
pub mod postprocess;
pub mod regression;
pub mod sampler;
pub mod verify;

pub use error::{Error, Result};
