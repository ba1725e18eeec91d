//! ECG baseline-wander removal with a time-frequency selective state-space
//! network.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
mod init;
pub mod mamba;
pub mod metrics;
pub mod net;
pub mod tf;
pub mod train;

pub use error::{Error, Result};
