//! Bit-level two-piece graph model, exact population oracles over it, and
//! the motif-graph datasets that materialize it.
//!
//! The crate is pure and deterministic: every random draw goes through a
//! seeded [`rand_chacha::ChaCha8Rng`] stream, and every probability is an
//! `f64` compared at [`PROB_TOL`].

pub mod error;
pub mod graph;
pub mod io;
pub mod motif;
pub mod oracle;
pub mod scm;
pub mod synth;

pub use error::{Error, Result};
pub use scm::{BitRecord, EnvParams, EnvironmentSet, JointTable, Slot};

/// Equality tolerance for probabilities produced by the exact model.
pub const PROB_TOL: f64 = 1e-12;
