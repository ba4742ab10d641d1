//! Exact computation of the metastability scale of local Fröbose bootstrap
//! percolation.
//!
//! The crate is organised around the framed-rectangle Markov chain: the
//! [`chain`] module holds the transition tables and the level-order dynamic
//! program, [`lattice_sim`] provides the lattice dynamics the chain is
//! checked against, and the remaining modules supply the scalar functions,
//! path functionals, matrix estimates and asymptotic fits that accompany the
//! computation.

pub mod chain;
pub mod error;
pub mod fitting;
pub mod lattice_sim;
pub mod matrix_analysis;
pub mod numerics;
pub mod special_functions;
pub mod variational;

pub use error::{Error, Result};
pub use numerics::LogProb;
pub use special_functions::ModelParams;

/// Name of the pseudo-random generator used by every sampling routine.
pub const RNG_ALGORITHM: &str = "ChaCha8";
