use std::f64::consts::PI;
use std::rc::Rc;

use ecg_autodiff::{Tensor, Var};

use crate::error::{Error, Result};
use crate::tf::StftConfig;

/// `frames x bins` complex spectrum stored as row-major real and imaginary
/// planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub config: StftConfig,
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(config: StftConfig, signal_len: usize) -> Self {
        let (frames, bins) = (config.frames(signal_len), config.bins());
        Self {
            re: vec![0.0; frames * bins],
            im: vec![0.0; frames * bins],
            frames,
            bins,
            config,
            signal_len,
        }
    }

    /// Stacks the planes into a `[2, frames, bins]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = self.re.clone();
        data.extend_from_slice(&self.im);
        Tensor::new(&[2, self.frames, self.bins], data).expect("plane sizes match")
    }

    pub fn from_tensor(t: &Tensor, config: StftConfig, signal_len: usize) -> Result<Self> {
        let (frames, bins) = (config.frames(signal_len), config.bins());
        if t.shape() != [2, frames, bins] {
            return Err(Error::LengthMismatch(format!(
                "spectrogram tensor {:?}, expected [2, {frames}, {bins}]",
                t.shape()
            )));
        }
        let n = frames * bins;
        Ok(Self {
            re: t.data()[..n].to_vec(),
            im: t.data()[n..].to_vec(),
            frames,
            bins,
            config,
            signal_len,
        })
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }
}

/// Precomputed window and twiddle tables for one configuration and signal
/// length.
struct Plan {
    cfg: StftConfig,
    len: usize,
    frames: usize,
    bins: usize,
    pad: usize,
    window: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    /// Sum of squared windows over the padded signal.
    envelope: Vec<f64>,
}

impl Plan {
    fn new(cfg: StftConfig, len: usize) -> Result<Self> {
        cfg.validate()?;
        if len == 0 {
            return Err(Error::Config("signal must have at least one sample".into()));
        }
        let n = cfg.window_len;
        let frames = cfg.frames(len);
        let pad = cfg.pad();
        let window = cfg.window();
        let mut envelope = vec![0.0; len + 2 * pad];
        for t in 0..frames {
            for (k, w) in window.iter().enumerate() {
                envelope[t * cfg.hop + k] += w * w;
            }
        }
        Ok(Self {
            cfg,
            len,
            frames,
            bins: cfg.bins(),
            pad,
            cos: (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).cos()).collect(),
            sin: (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect(),
            window,
            envelope,
        })
    }

    /// Source sample of padded position `j` under reflection about both ends.
    fn reflect(&self, j: usize) -> usize {
        let l = self.len as isize;
        if l == 1 {
            return 0;
        }
        let period = 2 * (l - 1);
        let mut i = (j as isize - self.pad as isize).rem_euclid(period);
        if i >= l {
            i = period - i;
        }
        i as usize
    }

    fn twiddle(&self, k: usize, n: usize) -> (f64, f64) {
        let idx = (k * n) % self.cfg.window_len;
        (self.cos[idx], self.sin[idx])
    }

    /// Synthesis weight of bin `k` in a real inverse DFT whose DC and Nyquist
    /// imaginary parts are ignored.
    fn bin_weight(&self, k: usize) -> (f64, f64) {
        let n = self.cfg.window_len;
        let inv = 1.0 / n as f64;
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            (inv, 0.0)
        } else {
            (2.0 * inv, 2.0 * inv)
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.cfg.window_len;
        let padded: Vec<f64> = (0..self.len + 2 * self.pad).map(|j| x[self.reflect(j)]).collect();
        let mut re = vec![0.0; self.frames * self.bins];
        let mut im = vec![0.0; self.frames * self.bins];
        let mut frame = vec![0.0; n];
        for t in 0..self.frames {
            for (i, f) in frame.iter_mut().enumerate() {
                *f = self.window[i] * padded[t * self.cfg.hop + i];
            }
            for k in 0..self.bins {
                let (mut sr, mut si) = (0.0, 0.0);
                for (i, f) in frame.iter().enumerate() {
                    let (c, s) = self.twiddle(k, i);
                    sr += f * c;
                    si -= f * s;
                }
                re[t * self.bins + k] = sr;
                im[t * self.bins + k] = si;
            }
        }
        (re, im)
    }

    /// Adjoint of [`Plan::forward`].
    fn forward_adjoint(&self, g_re: &[f64], g_im: &[f64]) -> Vec<f64> {
        let n = self.cfg.window_len;
        let mut gp = vec![0.0; self.len + 2 * self.pad];
        for t in 0..self.frames {
            for i in 0..n {
                let mut acc = 0.0;
                for k in 0..self.bins {
                    let (c, s) = self.twiddle(k, i);
                    acc += g_re[t * self.bins + k] * c - g_im[t * self.bins + k] * s;
                }
                gp[t * self.cfg.hop + i] += self.window[i] * acc;
            }
        }
        let mut gx = vec![0.0; self.len];
        for (j, g) in gp.iter().enumerate() {
            gx[self.reflect(j)] += g;
        }
        gx
    }

    fn check_envelope(&self) -> Result<()> {
        let low = self.envelope[self.pad..self.pad + self.len]
            .iter()
            .position(|&e| e < 1e-12);
        match low {
            Some(i) => Err(Error::Config(format!(
                "overlap-add normalization vanishes at sample {i} (window {}, hop {})",
                self.cfg.window_len, self.cfg.hop
            ))),
            None => Ok(()),
        }
    }

    fn inverse(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let n = self.cfg.window_len;
        let mut acc = vec![0.0; self.len + 2 * self.pad];
        for t in 0..self.frames {
            for i in 0..n {
                let mut y = 0.0;
                for k in 0..self.bins {
                    let (c, s) = self.twiddle(k, i);
                    let (wr, wi) = self.bin_weight(k);
                    y += wr * re[t * self.bins + k] * c - wi * im[t * self.bins + k] * s;
                }
                acc[t * self.cfg.hop + i] += self.window[i] * y;
            }
        }
        (self.pad..self.pad + self.len).map(|j| acc[j] / self.envelope[j]).collect()
    }

    /// Adjoint of [`Plan::inverse`].
    fn inverse_adjoint(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.cfg.window_len;
        let mut gq = vec![0.0; self.len + 2 * self.pad];
        for (i, v) in g.iter().enumerate() {
            gq[self.pad + i] = v / self.envelope[self.pad + i];
        }
        let mut g_re = vec![0.0; self.frames * self.bins];
        let mut g_im = vec![0.0; self.frames * self.bins];
        for t in 0..self.frames {
            for k in 0..self.bins {
                let (wr, wi) = self.bin_weight(k);
                let (mut sr, mut si) = (0.0, 0.0);
                for i in 0..n {
                    let gy = self.window[i] * gq[t * self.cfg.hop + i];
                    let (c, s) = self.twiddle(k, i);
                    sr += gy * c;
                    si -= gy * s;
                }
                g_re[t * self.bins + k] = wr * sr;
                g_im[t * self.bins + k] = wi * si;
            }
        }
        (g_re, g_im)
    }

    fn flops(&self) -> u64 {
        (4 * self.frames * self.bins * self.cfg.window_len) as u64
    }
}

/// Center-padded (reflect) Hamming-window STFT, onesided.
pub fn stft(signal: &[f64], config: StftConfig) -> Result<ComplexSpectrogram> {
    let plan = Plan::new(config, signal.len())?;
    let (re, im) = plan.forward(signal);
    Ok(ComplexSpectrogram {
        re,
        im,
        frames: plan.frames,
        bins: plan.bins,
        config,
        signal_len: signal.len(),
    })
}

/// Least-squares inverse: per-frame inverse DFT, windowed overlap-add,
/// division by the summed squared window, trimming of the padding.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
    let plan = Plan::new(spec.config, spec.signal_len)?;
    if spec.frames != plan.frames || spec.bins != plan.bins || spec.re.len() != plan.frames * plan.bins
        || spec.im.len() != spec.re.len()
    {
        return Err(Error::LengthMismatch(format!(
            "spectrogram is {}x{}, configuration implies {}x{}",
            spec.frames, spec.bins, plan.frames, plan.bins
        )));
    }
    plan.check_envelope()?;
    Ok(plan.inverse(&spec.re, &spec.im))
}

/// Differentiable [`stft`]: `[len]` to `[2, frames, bins]`.
pub fn stft_var<'t>(x: Var<'t>, config: StftConfig) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 1 {
        return Err(Error::LengthMismatch(format!("stft expects a 1-D signal, got {shape:?}")));
    }
    let plan = Rc::new(Plan::new(config, shape[0])?);
    let (mut re, im) = plan.forward(x.value().data());
    re.extend_from_slice(&im);
    let value = Tensor::new(&[2, plan.frames, plan.bins], re)?;
    let p = Rc::clone(&plan);
    Ok(x.tape().push_op("stft", &[x], value, plan.flops(), move |g, _| {
        let n = p.frames * p.bins;
        let gx = p.forward_adjoint(&g.data()[..n], &g.data()[n..]);
        vec![Some(Tensor::from_vec(gx))]
    }))
}

/// Differentiable [`istft`]: `[2, frames, bins]` to `[signal_len]`.
pub fn istft_var<'t>(spec: Var<'t>, config: StftConfig, signal_len: usize) -> Result<Var<'t>> {
    let plan = Rc::new(Plan::new(config, signal_len)?);
    if spec.shape() != [2, plan.frames, plan.bins] {
        return Err(Error::LengthMismatch(format!(
            "istft input {:?}, expected [2, {}, {}]",
            spec.shape(),
            plan.frames,
            plan.bins
        )));
    }
    plan.check_envelope()?;
    let v = spec.value();
    let n = plan.frames * plan.bins;
    let value = Tensor::from_vec(plan.inverse(&v.data()[..n], &v.data()[n..]));
    let p = Rc::clone(&plan);
    Ok(spec.tape().push_op("istft", &[spec], value, plan.flops(), move |g, _| {
        let (mut gr, gi) = p.inverse_adjoint(g.data());
        gr.extend_from_slice(&gi);
        vec![Some(Tensor::new(&[2, p.frames, p.bins], gr).expect("plane sizes match"))]
    }))
}
