//! Simulation and verification lab for one-dimensional boundary models of
//! axisymmetric Euler / 2D Boussinesq blow-up.

pub mod biotsavart;
pub mod bounds;
pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod fields;
pub mod grid;
pub mod kernels;
pub mod quad;

pub use error::{Error, Result};
