//! Local error correction (LEC) circuits for the 2D toric code, the 2D Ising
//! model and the 4D toric code: lattice geometry, a bit-packed Pauli-frame
//! simulator with classical ancillas, final-recovery decoders, a PPO circuit
//! search and the analysis tooling around memory lifetimes.

pub mod actions;
pub mod analysis;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod frame;
pub mod gates;
pub mod geometry;
pub mod rl;
pub mod rng;

pub use error::{LecError, Result};
