//! Power-flow planning on a lattice-embedded electricity network exposed to
//! spreading bushfire: fire simulation, per-period parameter estimation,
//! stochastic DC optimal power flow and online learners with regret tracking.

pub mod error;
pub mod estimation;
pub mod fire;
pub mod grid;
pub mod harness;
pub mod lp;
pub mod network;
pub mod online;
pub mod opf;
pub mod rng;

pub use error::{Error, Result};
