use ecg_autodiff::{Tape, Var};

use crate::error::{Error, Result};
use crate::net::{ForwardVars, ModelConfig};
use crate::tf::{compress_var, stft, stft_var};

/// Weights of the time, complex-spectrum and consistency terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub time: f64,
    pub complex: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            time: 0.5,
            complex: 1.0,
            consistency: 0.5,
        }
    }
}

/// The weighted total on the tape and the three unweighted terms.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'t> {
    pub total: Var<'t>,
    pub time: f64,
    pub complex: f64,
    pub consistency: f64,
}

/// Mean absolute time error, mean squared error between compressed clean and
/// enhanced spectra, and mean squared error between the compressed enhanced
/// spectrum and the compressed STFT of its own synthesis.
pub fn loss_all<'t>(
    tape: &'t Tape,
    out: &ForwardVars<'t>,
    clean: &[f64],
    cfg: &ModelConfig,
    w: LossWeights,
) -> Result<LossTerms<'t>> {
    if clean.len() != out.signal.shape()[0] {
        return Err(Error::LengthMismatch(format!(
            "clean has {} samples, enhanced {}",
            clean.len(),
            out.signal.shape()[0]
        )));
    }
    let clean_v = tape.constant(ecg_autodiff::Tensor::from_vec(clean.to_vec()));
    let time = out.signal.sub(clean_v)?.abs().mean();
    let clean_spec = tape.constant(stft(clean, cfg.stft)?.to_tensor());
    let enh_c = compress_var(out.spec, cfg.c)?;
    let complex = enh_c.squared_error(compress_var(clean_spec, cfg.c)?)?;
    let resynth = compress_var(stft_var(out.signal, cfg.stft)?, cfg.c)?;
    let consistency = enh_c.squared_error(resynth)?;
    let total = time
        .scale(w.time)
        .add(complex.scale(w.complex))?
        .add(consistency.scale(w.consistency))?;
    Ok(LossTerms {
        total,
        time: time.item(),
        complex: complex.item(),
        consistency: consistency.item(),
    })
}
