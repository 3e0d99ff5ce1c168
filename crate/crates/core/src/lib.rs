//! Exact per-cycle channel extraction and approximate logical Markovian models
//! for repeated stabilizer-code QEC cycles under Pauli-stochastic noise.

pub mod cli;
pub mod cycle;
pub mod error;
pub mod extraction;
pub mod fit;
pub mod markov;
pub mod numfmt;
pub mod oracle;
pub mod pauli;
pub mod verify;

pub use error::{Error, Result};
