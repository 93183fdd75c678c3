//! Conjugate gradient on random Wishart systems: samplers, Krylov solvers,
//! spectral tools, deterministic limit formulas and Monte Carlo drivers.

pub mod cli;
pub mod dense;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod krylov;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
