//! Calibration weighting with principal components and bagging.

pub mod bagcal;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod matrixops;
pub mod pca;
pub mod rng;
pub mod simulation;
pub mod varsampling;

pub use error::{Error, Result};
