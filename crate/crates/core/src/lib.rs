//! Deep hashing of in-air-handwriting motion signals.
//!
//! A motion signal is preprocessed into a fixed 256x9 tensor, mapped by a
//! small 1-D convolutional network to a latent vector and then to a short
//! binary code. Codes index an account database so a new writing of an ID
//! string can be resolved to its account with a constant number of hash
//! table probes.

// `!(x >= t)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
mod bytes;
pub mod code;
pub mod dataset;
pub mod db;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod net;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod train;

pub use code::HashCode;
pub use error::{Error, Result};
