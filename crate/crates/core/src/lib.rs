//! Quantum-classical correspondence under repeated coherent-state
//! measurement.
//!
//! A Gaussian packet is propagated with a split-operator scheme between
//! measurements; each measurement samples a phase-space point from the
//! Husimi distribution and collapses onto the coherent state there. The
//! sampled points are compared against an RK4 trajectory from the same
//! initial condition.

pub mod classical;
pub mod cli;
pub mod config;
pub mod divergence;
pub mod grid_state;
pub mod io;
pub mod measurement;
pub mod potentials;
pub mod propagator;
pub mod regimes;
pub mod simulation;
pub mod sweep;
mod spectral;

pub use classical::ClassicalState;
pub use config::{SimConfig, ValidatedConfig};
pub use measurement::PhasePoint;
pub use potentials::PotentialSpec;
pub use regimes::RegimeLabel;
