//! Mutually regularized autoencoder pairs for noisy financial time series.
//!
//! Two heterogeneous convolutional autoencoders each see the same target
//! series next to a different context variable. They take turns: one
//! speaks (its codes are translated into the partner's code space) while the
//! other listens, training against its reconstruction loss plus a pull
//! toward the translated codes. The denoised reconstructions are clustered
//! into a pattern library, and raw out-of-sample windows are traded by their
//! distance to the library's up and down profiles.

pub mod ae;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod dialogue;
mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod regimes;
pub mod report;
pub mod strategy;
pub mod translator;

pub use error::{Error, Result};
