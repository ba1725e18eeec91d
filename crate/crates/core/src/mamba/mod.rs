//! Selective state-space layers: discretization and scan, the gated Mamba
//! layer, the bidirectional block, and time/frequency stacking.

mod layer;
mod scan_op;
pub mod ssm;

pub use layer::{
    bi_mamba_block, init_bi_mamba, init_mamba_layer, init_tf_block, mamba_layer, tf_bi_mamba, BiMambaOptions,
};
pub use scan_op::selective_scan_var;
pub use ssm::{selective_scan, zoh_discretize, Discretized, ScanDims};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of the state-space layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MambaConfig {
    /// State dimension `N`.
    pub d_state: usize,
    /// Causal depthwise convolution width.
    pub d_conv: usize,
    /// Inner width multiplier.
    pub expand: usize,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self {
            d_state: 16,
            d_conv: 4,
            expand: 2,
        }
    }
}

impl MambaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_state == 0 || self.d_conv == 0 || self.expand == 0 {
            return Err(Error::Config(format!("state-space sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn d_inner(&self, d_model: usize) -> usize {
        self.expand * d_model
    }

    /// Rank of the step-size projection, `ceil(d_model / 16)`.
    pub fn dt_rank(&self, d_model: usize) -> usize {
        d_model.div_ceil(16)
    }
}
