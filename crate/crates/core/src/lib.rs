//! Multi-codebook vector quantization over adaptive QAM links.

pub mod allocator;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod distortion;
pub mod error;
pub mod rng;
pub mod sim;
pub mod train;
pub mod vq;

pub use error::{Error, Result};
