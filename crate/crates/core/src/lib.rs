//! Recognition-memory benchmark for autoregressive pixel transformers.
//!
//! Images are quantized into palette tokens, a decoder-only transformer is
//! trained on a study set with exact exposure accounting, and recognition is
//! scored by two-alternative forced choice: the image with the lower
//! negative log-likelihood is taken as "seen".

pub mod cli;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod stimuli;
pub mod trainer;

pub use error::{Error, Result};
