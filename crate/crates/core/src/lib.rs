//! Train tiny bias-free networks to imitate FIR moving-average filters, then
//! read the filter back out of the weights.
//!
//! - [`signals`]: moving averages, magnitude response, cutoff and side lobe.
//! - [`nnet`]: bias-free networks, gradients and the model JSON format.
//! - [`train`]: labeled datasets and full-batch gradient descent.
//! - [`probe`]: region taps, empirical frequency response, equivalence audit.
//! - [`suite`]: the four-network experiment.
//! - [`cli`]: the `filterlab` command line.

pub mod cli;
pub mod error;
pub mod io;
pub mod nnet;
pub mod par;
pub mod probe;
pub mod seeds;
pub mod signals;
mod sinefit;
pub mod suite;
pub mod train;

pub use error::{Error, Result};
pub use par::Execution;
