//! Noise normalization and mixing.

use crate::data::{EcgSegment, NoisyPair};
use crate::error::{Error, Result};

/// Smallest allowed noise scale factor.
pub const FACTOR_MIN: f64 = 0.2;
/// Largest allowed noise scale factor.
pub const FACTOR_MAX: f64 = 2.0;

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Affinely maps `noise` so that its minimum and maximum coincide with those
/// of `reference`.
pub fn normalize_noise(noise: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    let (nlo, nhi) = range(noise);
    let (rlo, rhi) = range(reference);
    if noise.is_empty() || !(nhi > nlo) {
        return Err(Error::Degenerate("noise has zero range".into()));
    }
    if reference.is_empty() || !(rhi > rlo) {
        return Err(Error::Degenerate("reference has zero range".into()));
    }
    let scale = (rhi - rlo) / (nhi - nlo);
    Ok(noise
        .iter()
        .map(|&v| {
            // pin the extremes so the output range matches exactly
            if v == nlo {
                rlo
            } else if v == nhi {
                rhi
            } else {
                rlo + (v - nlo) * scale
            }
        })
        .collect())
}

/// `noisy = clean + factor * noise`, with the factor restricted to
/// `[FACTOR_MIN, FACTOR_MAX]`.
pub fn mix_noise(clean: &EcgSegment, noise: &[f64], factor: f64) -> Result<NoisyPair> {
    if !(FACTOR_MIN..=FACTOR_MAX).contains(&factor) {
        return Err(Error::OutOfRange(format!(
            "noise factor {factor} outside [{FACTOR_MIN}, {FACTOR_MAX}]"
        )));
    }
    if noise.len() != clean.len() {
        return Err(Error::LengthMismatch(format!(
            "noise has {} samples, clean segment {}",
            noise.len(),
            clean.len()
        )));
    }
    let noisy = EcgSegment {
        samples: clean.samples.iter().zip(noise).map(|(c, n)| c + factor * n).collect(),
        fs: clean.fs,
        source: clean.source.clone(),
    };
    Ok(NoisyPair {
        clean: clean.clone(),
        noisy,
        factor,
    })
}
