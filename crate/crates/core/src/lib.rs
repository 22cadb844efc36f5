//! Reconstruction of a space-dependent heat source from noisy final-time data
//! with quasi-boundary value regularization (QBVM, MQBVM, PQBVM) and a
//! diagonalization-based parallel-in-time direct solver.

pub mod allatonce;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod pint;
pub mod spectral;
pub mod timedisc;

pub use error::{Error, Result};
