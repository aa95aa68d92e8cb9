//! Almost exact Mendelian randomization: randomization tests of causal
//! effects that use the meiosis model of parent-offspring trios as the
//! source of instrument randomness.

pub mod adjustment;
pub mod config;
pub mod data;
pub mod error;
pub mod fisher;
pub mod hmm;
pub mod power;
pub mod quad;
pub mod randtest;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
