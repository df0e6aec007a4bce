//! Robust change detection for multivariate image time series under a
//! scaled-Gaussian model with Kronecker-structured covariance.

pub mod error;
pub mod detectors;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod model;
pub mod online;
pub mod simlab;
pub mod wire;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
