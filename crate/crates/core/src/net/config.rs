use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mamba::MambaConfig;
use crate::tf::{check_exponent, FeatureMode, StftConfig};

/// Architecture and signal-geometry settings of the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: FeatureMode,
    /// Power-law compression exponent.
    pub c: f64,
    pub n_blocks: usize,
    pub dim: usize,
    /// Time-axis dilations of the dense blocks.
    pub dilations: Vec<usize>,
    pub stft: StftConfig,
    pub mamba: MambaConfig,
    /// Input length in samples.
    pub segment_len: usize,
    /// Include the frequency-axis Bi-Mamba in each stage.
    pub freq_block: bool,
    /// Reverse the sequence around the backward Mamba layer.
    pub flip: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Complex,
            c: 0.3,
            n_blocks: 4,
            dim: 32,
            dilations: vec![1, 2, 4, 8],
            stft: StftConfig::default(),
            mamba: MambaConfig::default(),
            segment_len: 512,
            freq_block: true,
            flip: true,
        }
    }
}

impl ModelConfig {
    /// The small configuration used for desk-scale training and gradient
    /// checks: width 8, one stage.
    pub fn tiny() -> Self {
        Self {
            dim: 8,
            n_blocks: 1,
            segment_len: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.c).map_err(|e| Error::Config(e.to_string()))?;
        self.stft.validate()?;
        self.mamba.validate()?;
        if self.n_blocks == 0 || self.dim == 0 || self.segment_len == 0 {
            return Err(Error::Config("n_blocks, dim and segment_len must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations[0] == 0 || self.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "dilations {:?} must be positive and strictly increasing",
                self.dilations
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.stft.frames(self.segment_len)
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    /// Frequency extent inside the network, `ceil(bins / 2)`.
    pub fn bins_down(&self) -> usize {
        self.bins().div_ceil(2)
    }
}
