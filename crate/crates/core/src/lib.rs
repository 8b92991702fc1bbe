//! Empirical-likelihood information borrowing from multiple secondary datasets.
//!
//! A logistic main model is re-weighted by empirical-likelihood masses fitted
//! to over-identified working models on each secondary dataset. The weights are
//! combined by averaging, aggregating or omnibus schemes, and the resulting
//! estimators come with plug-in sandwich variances.

pub mod analysis;
pub mod el;
pub mod error;
pub mod estimator;
pub mod model;
pub mod numerics;
pub mod schemes;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
