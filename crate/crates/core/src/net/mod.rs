//! The denoising network: encoder, time-frequency state-space stages, mask
//! and phase decoders, reconstruction, and the training loss.

pub mod blocks;
mod config;
mod loss;
mod model;
mod phase;

pub use config::ModelConfig;
pub use loss::{loss_all, LossTerms, LossWeights};
pub use model::{forward, init_params, masked_magnitude, reconstruct, EnhancedOutput, ForwardOptions, ForwardVars, Model, CONFIG_FILE, WEIGHTS_STEM};
pub use phase::{phase_from_parts, phase_var};
