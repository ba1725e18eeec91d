use std::fs;
use std::path::Path;

use ecg_autodiff::{BoundParams, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mamba::{init_tf_block, tf_bi_mamba, BiMambaOptions};
use crate::net::blocks::{
    encoder_forward, init_encoder, init_mask_decoder, init_phase_decoder, mask_decode, phase_decode,
};
use crate::net::phase::phase_var;
use crate::net::ModelConfig;
use crate::tf::{assemble_features, check_exponent, compress, istft_var, stft, wrap_phase, FeatureMode};

/// Fresh parameters for `cfg`, deterministic in `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    init_encoder(&mut store, cfg.dim, &cfg.dilations, &mut rng);
    for b in 0..cfg.n_blocks {
        init_tf_block(&mut store, &format!("tf{b}"), cfg.dim, &cfg.mamba, cfg.freq_block, &mut rng);
    }
    init_mask_decoder(&mut store, cfg.dim, &cfg.dilations, &mut rng);
    init_phase_decoder(&mut store, cfg.dim, &cfg.dilations, &mut rng);
    Ok(store)
}

/// Debug switches for the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardOptions {
    /// Replace the mask by ones and use the noisy phase without correction,
    /// so the output should reproduce the input.
    pub identity: bool,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars<'t> {
    /// Enhanced signal, `[L]`.
    pub signal: Var<'t>,
    /// Enhanced spectrum before synthesis, `[2, T, F]`.
    pub spec: Var<'t>,
    /// Enhanced (uncompressed) magnitude, `[T, F]`.
    pub mag: Var<'t>,
}

/// Everything derived from the noisy input that the network treats as
/// constant.
struct NoisyInputs {
    features: Tensor,
    mag_c: Tensor,
    cos: Tensor,
    sin: Tensor,
}

fn noisy_inputs(noisy: &[f64], cfg: &ModelConfig) -> Result<NoisyInputs> {
    let spec = stft(noisy, cfg.stft)?;
    let comp = compress(&spec, cfg.c)?;
    let shape = [spec.frames, spec.bins];
    let features = assemble_features(&comp, cfg.mode).planes;
    Ok(NoisyInputs {
        features,
        mag_c: Tensor::new(&shape, comp.mag.clone())?,
        cos: Tensor::new(&shape, comp.phase.iter().map(|p| p.cos()).collect())?,
        sin: Tensor::new(&shape, comp.phase.iter().map(|p| p.sin()).collect())?,
    })
}

/// `(mag_c * mask)^(1/c)`: the mask scales the compressed noisy magnitude
/// and the exponent undoes the compression.
pub fn masked_magnitude<'t>(mag_c: Var<'t>, mask: Var<'t>, c: f64) -> Result<Var<'t>> {
    check_exponent(c)?;
    Ok(mag_c.mul(mask)?.power(1.0 / c))
}

/// Real and imaginary enhanced spectrum from the enhanced magnitude.
/// Complex mode adds the pseudo-real/imaginary residual to the magnitude on
/// the noisy phase; magnitude-phase mode places the magnitude on the phase
/// derived from the two maps.
pub fn reconstruct<'t>(
    mode: FeatureMode,
    mag: Var<'t>,
    noisy_cos: Var<'t>,
    noisy_sin: Var<'t>,
    pseudo_re: Var<'t>,
    pseudo_im: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    Ok(match mode {
        FeatureMode::Complex => (mag.mul(noisy_cos)?.add(pseudo_re)?, mag.mul(noisy_sin)?.add(pseudo_im)?),
        FeatureMode::MagPhase => {
            let phase = phase_var(pseudo_re, pseudo_im)?;
            (mag.mul(phase.cos())?, mag.mul(phase.sin())?)
        }
    })
}

/// Runs the network on one segment, recording on `p`'s tape.
pub fn forward<'t>(
    noisy: &[f64],
    p: &BoundParams<'t>,
    tape: &'t Tape,
    cfg: &ModelConfig,
    opts: ForwardOptions,
) -> Result<ForwardVars<'t>> {
    if noisy.len() != cfg.segment_len {
        return Err(Error::LengthMismatch(format!(
            "segment has {} samples, model expects {}",
            noisy.len(),
            cfg.segment_len
        )));
    }
    let inp = noisy_inputs(noisy, cfg)?;
    let (t, f) = (cfg.frames(), cfg.bins());
    let mag_c = tape.constant(inp.mag_c);
    let cos_n = tape.constant(inp.cos);
    let sin_n = tape.constant(inp.sin);

    let (mag, re, im) = if opts.identity {
        let mag = mag_c.power(1.0 / cfg.c);
        (mag, mag.mul(cos_n)?, mag.mul(sin_n)?)
    } else {
        let mut h = encoder_forward(tape.constant(inp.features), p, &cfg.dilations)?;
        let bi = BiMambaOptions { flip: cfg.flip };
        for b in 0..cfg.n_blocks {
            h = tf_bi_mamba(h, p, &format!("tf{b}"), &cfg.mamba, cfg.freq_block, bi)?;
        }
        let mask = mask_decode(h, p, &cfg.dilations, f)?;
        let (pr, pi) = phase_decode(h, p, &cfg.dilations, f)?;
        let mag = masked_magnitude(mag_c, mask, cfg.c)?;
        let (re, im) = reconstruct(cfg.mode, mag, cos_n, sin_n, pr, pi)?;
        (mag, re, im)
    };
    let spec = Var::concat(&[re.reshape(&[1, t, f])?, im.reshape(&[1, t, f])?], 0)?;
    let signal = istft_var(spec, cfg.stft, cfg.segment_len)?;
    Ok(ForwardVars { signal, spec, mag })
}

/// Result of denoising one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedOutput {
    pub signal: Vec<f64>,
    /// Enhanced magnitude, `T x F` row-major.
    pub mag: Vec<f64>,
    /// Phase of the enhanced spectrum in `(-pi, pi]`.
    pub phase: Vec<f64>,
    /// Enhanced spectrum `[2, T, F]`.
    pub complex: Tensor,
    /// Floating-point operations of the forward pass.
    pub flops: u64,
}

/// A configuration with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

pub const WEIGHTS_STEM: &str = "model";
pub const CONFIG_FILE: &str = "config.json";

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn denoise(&self, noisy: &[f64]) -> Result<EnhancedOutput> {
        self.denoise_with(noisy, ForwardOptions::default())
    }

    pub fn denoise_with(&self, noisy: &[f64], opts: ForwardOptions) -> Result<EnhancedOutput> {
        let tape = Tape::inference().with_finite_check(true);
        let p = self.params.bind(&tape);
        let out = forward(noisy, &p, &tape, &self.config, opts)?;
        if let Some(op) = tape.first_non_finite() {
            return Err(Error::Numeric(format!("non-finite value produced by `{op}`")));
        }
        let complex = (*out.spec.value()).clone();
        let n = complex.len() / 2;
        let phase = (0..n)
            .map(|k| wrap_phase(complex.data()[n + k].atan2(complex.data()[k])))
            .collect();
        Ok(EnhancedOutput {
            signal: out.signal.value().data().to_vec(),
            mag: out.mag.value().data().to_vec(),
            phase,
            complex,
            flops: tape.flops(),
        })
    }

    /// Writes `model.bin`, `model.json` and `config.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.params.save(&dir.join(WEIGHTS_STEM))?;
        let cfg = serde_json::to_string_pretty(&self.config)?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, cfg).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config: ModelConfig = serde_json::from_str(&text)?;
        config.validate()?;
        let params = ParamStore::load(&dir.join(WEIGHTS_STEM))?;
        let expected = init_params(&config, 0)?;
        for (name, t) in expected.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::Config(format!(
                        "checkpoint parameter {name} has shape {:?}, configuration implies {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("checkpoint lacks parameter {name}"))),
            }
        }
        if params.len() != expected.len() {
            return Err(Error::Config("checkpoint has parameters the configuration does not use".into()));
        }
        Ok(Self { config, params })
    }
}
