//! Neyman-Pearson transfer learning with a stochastic constrained solver.

pub mod constraints;
pub mod cp_solver;
pub mod data;
pub mod error;
pub mod experiment;
pub mod np_core;
pub mod np_transfer;
pub mod rng;
pub mod set_oracle;

pub use error::{Error, Result};
