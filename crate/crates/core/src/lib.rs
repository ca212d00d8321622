//! Bayesian mixed logit estimation with normal, finite-mixture and
//! Dirichlet-process mixing distributions.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod utility;

pub use error::{Error, Result};
