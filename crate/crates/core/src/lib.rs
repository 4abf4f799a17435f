//! Numerical engine for the box model of a liquid-vapor transition.
//!
//! The crate is organized bottom-up: [`meanfield`] gives the limiting
//! free-energy picture, [`reference`] builds particle free energies,
//! [`spinmodel`] samples the lattice model, [`chessboard`] checks
//! reflection-positivity estimates by enumeration and [`transition`]
//! assembles the coexistence diagnostics.

pub mod chessboard;
pub mod error;
pub mod meanfield;
pub mod numeric;
pub mod reference;
pub mod rng;
pub mod spinmodel;
pub mod transition;

pub use error::{Error, Result};
pub use meanfield::{FreeEnergySpec, MeanFieldAnalysis, MeanFieldOptions};
