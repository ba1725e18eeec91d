//! Classical baseline-wander filters: a linear-phase windowed-sinc FIR
//! band-pass and a forward-backward Butterworth IIR high-pass.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into `0..len` for position `i` of a signal reflected about both
/// ends (without repeating the edge sample).
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirConfig {
    /// High-pass corner in Hz.
    pub low_hz: f64,
    /// Low-pass corner in Hz; ignored at or above Nyquist.
    pub high_hz: f64,
    /// Kernel length (odd). `None` picks about one second of samples.
    pub taps: Option<usize>,
}

impl Default for FirConfig {
    fn default() -> Self {
        Self {
            low_hz: 0.67,
            high_hz: 150.0,
            taps: None,
        }
    }
}

/// Designed FIR kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    kernel: Vec<f64>,
}

/// Hamming-windowed sinc low-pass of length `n` with unit DC gain.
fn windowed_sinc(fc: f64, fs: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64 / 2.0;
    let w = 2.0 * fc / fs;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - m;
            let sinc = if t == 0.0 { w } else { (PI * w * t).sin() / (PI * t) };
            let win = if n == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
            };
            sinc * win
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

impl FirFilter {
    /// Band-pass as the difference of two unit-gain low-passes, so the DC
    /// gain is exactly zero. Without a usable upper corner the upper
    /// low-pass is the identity and the result is a pure high-pass.
    pub fn design(fs: f64, cfg: &FirConfig) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::Config(format!("sampling rate {fs} must be positive")));
        }
        let nyq = fs / 2.0;
        if !(cfg.low_hz > 0.0 && cfg.low_hz < nyq && cfg.high_hz > cfg.low_hz) {
            return Err(Error::Config(format!(
                "FIR corners {} / {} Hz invalid at fs = {fs}",
                cfg.low_hz, cfg.high_hz
            )));
        }
        let taps = cfg.taps.unwrap_or_else(|| (fs.round() as usize) | 1);
        if taps % 2 == 0 || taps < 3 {
            return Err(Error::Config(format!("FIR length {taps} must be odd and at least 3")));
        }
        let low = windowed_sinc(cfg.low_hz, fs, taps);
        let mut kernel: Vec<f64> = if cfg.high_hz < nyq {
            windowed_sinc(cfg.high_hz, fs, taps)
        } else {
            let mut d = vec![0.0; taps];
            d[taps / 2] = 1.0;
            d
        };
        for (k, l) in kernel.iter_mut().zip(&low) {
            *k -= l;
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Zero-phase application: the symmetric kernel is centred on each
    /// sample, with reflected edges.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let half = (self.kernel.len() / 2) as isize;
        (0..x.len())
            .map(|n| {
                self.kernel
                    .iter()
                    .enumerate()
                    .map(|(k, h)| h * x[reflect(n as isize + k as isize - half, x.len())])
                    .sum()
            })
            .collect()
    }
}

/// FIR band-pass with the default corners.
pub fn fir_baseline(noisy: &[f64], fs: f64) -> Result<Vec<f64>> {
    Ok(FirFilter::design(fs, &FirConfig::default())?.apply(noisy))
}

pub const IIR_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IirConfig {
    pub cutoff_hz: f64,
}

impl Default for IirConfig {
    fn default() -> Self {
        Self { cutoff_hz: 0.67 }
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Pole magnitudes.
    pub fn pole_radii(&self) -> [f64; 2] {
        let [a1, a2] = self.a;
        let disc = a1 * a1 - 4.0 * a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            [((-a1 + s) / 2.0).abs(), ((-a1 - s) / 2.0).abs()]
        } else {
            // complex pair with product a2
            let r = a2.sqrt();
            [r, r]
        }
    }

    /// Direct-form-II-transposed state that holds the output steady for a
    /// constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * g;
        [b1 - a1 * g + z2, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b.iter().sum::<f64>()) / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &[f64], zi: [f64; 2]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let [mut z1, mut z2] = zi;
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }
}

/// Butterworth high-pass as a cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub sections: Vec<Biquad>,
    /// Edge extension length used by [`IirFilter::apply`].
    pub pad_len: usize,
}

/// Cutoff periods covered by the edge extension.
const PAD_PERIODS: f64 = 6.0;

impl IirFilter {
    /// Order-4 Butterworth high-pass by the bilinear transform with
    /// frequency prewarping.
    pub fn design(fs: f64, cfg: &IirConfig) -> Result<Self> {
        if !(fs > 0.0 && cfg.cutoff_hz > 0.0 && cfg.cutoff_hz < fs / 2.0) {
            return Err(Error::Config(format!("IIR cutoff {} Hz invalid at fs = {fs}", cfg.cutoff_hz)));
        }
        let k = (PI * cfg.cutoff_hz / fs).tan();
        let sections: Vec<Biquad> = (1..=IIR_ORDER / 2)
            .map(|i| {
                let q = 1.0 / (2.0 * ((2 * i - 1) as f64 * PI / (2 * IIR_ORDER) as f64).sin());
                let norm = 1.0 / (1.0 + k / q + k * k);
                Biquad {
                    b: [norm, -2.0 * norm, norm],
                    a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
                }
            })
            .collect();
        let filter = Self {
            sections,
            pad_len: (PAD_PERIODS * fs / cfg.cutoff_hz).ceil() as usize,
        };
        if let Some(r) = filter.pole_radii().into_iter().find(|&r| r >= 1.0) {
            return Err(Error::Numeric(format!("unstable IIR design: pole radius {r}")));
        }
        Ok(filter)
    }

    pub fn pole_radii(&self) -> Vec<f64> {
        self.sections.iter().flat_map(|s| s.pole_radii()).collect()
    }

    fn cascade(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut scale = x.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let zi = s.steady_state().map(|v| v * scale);
            y = s.run(&y, zi);
            scale *= s.dc_gain();
        }
        y
    }

    /// Forward-backward filtering with odd extension at both ends and
    /// steady-state initial conditions, giving zero phase.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return self.cascade(x);
        }
        let pad = (n - 1).min(self.pad_len);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.cascade(&ext);
        y.reverse();
        let mut y = self.cascade(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// IIR high-pass with the default cutoff.
pub fn iir_baseline(noisy: &[f64], fs: f64) -> Result<Vec<f64>> {
    Ok(IirFilter::design(fs, &IirConfig::default())?.apply(noisy))
}
