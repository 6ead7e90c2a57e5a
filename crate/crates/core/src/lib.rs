//! Desk-scale simulator for an adiabatic quantum computer built from
//! persistent-current flux qubits on a triangular lattice.
//!
//! The pipeline runs
//! [`graph`] → [`ising`] → [`lattice`] → [`evolution`] → [`measurement`],
//! with [`device`] supplying the qubit model and architecture limits.

pub mod device;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod ising;
pub mod lattice;
pub mod measurement;
pub mod seed;

pub use error::{Error, ErrorClass, Result};
