//! Decoder-only pixel transformer: parameters, forward/backward, decoding and
//! checkpoints.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod params;
pub mod scalar;
pub mod transformer;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use decode::{argmax, sample, streaming_nll, Decoder};
pub use params::{init_model, tensor_names, LayerParams, Parameters};
pub use scalar::Scalar;
pub use transformer::{forward_logits, loss_and_gradients, nll, nll_many, LogitsGrid, Nll};
