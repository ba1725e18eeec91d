//! Short-time Fourier analysis and synthesis, power-law compression, and the
//! two network input layouts.

mod compress;
mod dump;
mod stft;

pub(crate) use compress::wrap_phase;
pub use compress::{assemble_features, compress, compress_var, CompressedSpectrogram, FeatureTensor, LOSS_EPS};
pub use dump::{read_dump, write_dump, SpectrogramDump};
pub use stft::{istft, istft_var, stft, stft_var, ComplexSpectrogram};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analysis settings. The FFT length equals the window length and the
/// window is a periodic Hamming window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 64, hop: 8 }
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        let c = Self { window_len, hop };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Config(format!("window length {} must be at least 2", self.window_len)));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "hop {} must lie in [1, window length {}]",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    /// Onesided bin count `window_len / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Padding added to each end of the signal before framing.
    pub fn pad(&self) -> usize {
        self.window_len / 2
    }

    /// Number of frames for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.window_len) / self.hop
    }

    /// Periodic Hamming window `0.54 - 0.46 cos(2 pi n / N)`.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect()
    }
}

/// Which pair of planes the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Compressed real and imaginary parts.
    Complex,
    /// Compressed magnitude and phase.
    MagPhase,
}

impl FeatureMode {
    pub fn code(self) -> u32 {
        match self {
            FeatureMode::Complex => 0,
            FeatureMode::MagPhase => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(FeatureMode::Complex),
            1 => Ok(FeatureMode::MagPhase),
            other => Err(Error::Data(format!("unknown feature mode code {other}"))),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Complex => "complex",
            FeatureMode::MagPhase => "mag_phase",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(FeatureMode::Complex),
            "mag_phase" => Ok(FeatureMode::MagPhase),
            other => Err(Error::Config(format!("mode must be `complex` or `mag_phase`, got `{other}`"))),
        }
    }
}

/// Validates a compression exponent.
pub fn check_exponent(c: f64) -> Result<()> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("compression exponent {c} outside (0, 1]")))
    }
}
