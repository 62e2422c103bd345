//! Physics-informed neural network toolkit: reverse-mode automatic
//! differentiation, tanh networks, Adam, polynomial and heat-equation
//! residuals, synthetic data, a finite-difference baseline and an experiment
//! harness.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod fdm;
pub mod harness;
pub mod nn;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod taylor;
pub mod trainer;

pub use error::{Error, Result};

/// Toolkit version recorded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
