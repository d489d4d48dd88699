//! Channel sounding and stochastic channel generation: Zadoff-Chu
//! sounding, CIR estimation, power delay profile analysis, a cluster
//! delay line generator, and the file formats tying them together.

pub mod analysis;
pub mod channel_apply;
pub mod error;
pub mod gbsm;
pub mod io;
pub mod rng;
pub mod signal;
pub mod sounder;

pub use error::{Error, Result};
