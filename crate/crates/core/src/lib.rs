//! Chainwise stimulated Raman adiabatic passage (c-STIRAP) in lossy multilevel
//! molecular chains.
//!
//! The crate builds chain Hamiltonians from a level/coupling description,
//! propagates pure states and density matrices with population loss, analyses
//! dark states and adiabaticity, and sweeps or optimises pulse parameters.
//!
//! All rates and Rabi frequencies are angular frequencies in s⁻¹, all times in
//! seconds, and the Rabi frequency convention is Ω = μE/(2ħ).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod hamiltonian;
pub mod integrator;
pub mod optimize;
pub mod output;
pub mod propagate;
pub mod scenarios;
pub mod units;

pub use error::{Error, Result};
