//! PUCCH Format 0 laboratory.
//!
//! Generates cyclic-shift encoded uplink control signals for up to twelve
//! multiplexed users, passes them through simple fading channels, and decodes
//! them with a 12-point DFT receiver and a fully-connected multi-label neural
//! network receiver. The [`evalmetrics`] module scores both decoders.

pub mod channel;
pub mod cli;
pub mod dft_baseline;
pub mod error;
pub mod evalmetrics;
pub mod muxdatagen;
pub mod neuralnet;
pub mod rng;
pub mod waveform;

pub use error::{Error, Result};
