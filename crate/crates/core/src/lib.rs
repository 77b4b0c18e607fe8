//! Numerical laboratory for two-species Lotka–Volterra type competition with
//! nonlocal, possibly nonsymmetric, dispersal.
//!
//! The crate assembles the dispersal operators, computes principal spectral
//! bounds and the invasion indicators that decide the long-run outcome when
//! one species disperses slowly, solves single-species, limiting and coupled
//! steady states by monotone iteration, integrates the full system in time,
//! and checks the predicted outcome against simulation.

pub mod classify;
pub mod dispersal;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod reaction;
pub mod scenario;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
