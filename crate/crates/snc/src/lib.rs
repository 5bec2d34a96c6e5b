//! Sparse network coding toolkit: exact GF(2^q) codec, an absorbing Markov
//! chain model of the decoder's (rank, covered-columns) trajectory, a Monte
//! Carlo oracle for the linear-dependence probability, and a campaign
//! harness that cross-validates model against simulation.

pub mod codec;
pub mod error;
pub mod gf;
pub mod harness;
pub mod model;
pub mod theta;

pub use error::{Error, Result};
