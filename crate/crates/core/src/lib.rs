//! Empirical risk minimization for linear inverse problems with known
//! singular systems: periodic deconvolution and planar Radon tomography.

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod models;
pub mod operators;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod spaces;

pub use error::{Error, Result};
