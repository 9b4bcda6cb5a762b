//! Thermodynamic formalism for tuples of invertible matrices and affine
//! iterated function systems.
//!
//! The crate computes singular value functions, certified brackets for
//! subadditive pressure and for its zero (the affinity dimension), Lyapunov
//! dimensions of Bernoulli measures, irreducible block structure of matrix
//! tuples, restricted potentials over finite subspace orbits, Gibbs
//! cylinder-weight diagnostics, and attractor sampling.

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod ifs;
pub mod io;
pub mod linalg;
pub mod potentials;
pub mod pressure;
pub mod random;
pub mod structure;

pub use config::Config;
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use potentials::{Factor, MatrixTuple, NormProduct, PotentialSpec, Word};
