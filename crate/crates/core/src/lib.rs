//! Pooling of estimators that target the same scalar causal effect through
//! different identifying functionals.
//!
//! The central object is a panel of `(estimate, variance, influence column)`
//! triples, one per identifying functional, combined by a precision-weighted
//! empirical Bayes rule with a heterogeneity hyperparameter `tau2`.
//! Uncertainty is quantified three ways: an influence-curve sandwich Wald
//! interval and a boundary-robust subsampling interval for the fixed target,
//! and a split conformal prediction interval for the latent target of a new
//! functional.
//!
//! Modules:
//! - [`panel`]: the estimator panel, precision weights, and the combiner.
//! - [`heterogeneity`]: pairwise, profiled-likelihood, and Paule-Mandel
//!   estimators of `tau2`.
//! - [`functionals`]: estimator constructors for IV environments, IPW/OR,
//!   difference-in-differences, and regression discontinuity designs.
//! - [`inference`]: sandwich, subsampling, and RCT-only intervals.
//! - [`conformal`]: split conformal prediction for a new functional.
//! - [`dgp`]: seedable data generators for all designs.
//! - [`scenarios`]: replicated Monte Carlo runs used by the CLI and tests.

pub mod conformal;
pub mod dgp;
mod error;
pub mod functionals;
pub mod heterogeneity;
pub mod inference;
pub mod io;
pub mod panel;
pub mod scenarios;
pub mod stats;

pub use error::{Error, Result};
pub use panel::{EbFit, EstimatorPanel, Tau2Method};
