//! Numerical toolkit for Bayes-Nash equilibria of asymmetric single-dimensional
//! auctions, their equivalent-bid threshold curves, and value/revenue covering.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`] value distributions and virtual values,
//! * [`env`] feasibility environments (single item, matroids, positions),
//! * [`auction`] payment semantics registered by name and mechanisms built from them,
//! * [`solve`] strategy profiles, interim rules and the best-response solver,
//! * [`cover`] threshold curves, covering margins and the revenue-covering sampler,
//! * [`bench`] optimal benchmarks, equilibrium measurements and ratio tables,
//! * [`scenario`] and [`reproduce`] the config-driven runner and fixed constructions.

pub mod auction;
pub mod bench;
pub mod cover;
pub mod dist;
pub mod env;
mod error;
pub mod numeric;
pub mod reproduce;
pub mod scenario;
pub mod solve;

pub use error::{Error, Result};

/// `(e - 1) / e`, the value-covering constant.
pub fn covering_constant() -> f64 {
    let e = std::f64::consts::E;
    (e - 1.0) / e
}
