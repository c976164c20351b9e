//! Particle and finite-difference solvers for the supercooled Stefan problem
//! in its probabilistic form, with diagnostics and reference oracles.
// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod frontier;
pub mod io;
pub mod oracles;
pub mod particle;
pub mod pde;
pub mod rng;
pub mod types;

pub use config::Config;
pub use density::InitialDensity;
pub use error::{Error, Result};
