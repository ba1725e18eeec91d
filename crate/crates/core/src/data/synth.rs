//! Synthetic stand-ins for clean ECG and baseline-wander noise, used by the
//! desk-scale experiments and the test suites.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{mix_noise, normalize_noise, EcgSegment, NoisyPair, SegmentSource, FACTOR_MAX, FACTOR_MIN};
use crate::error::Result;

/// A beat-like trace: a few harmonics of a random heart rate plus narrow
/// Gaussian QRS bumps and broader T-wave bumps on every beat.
pub fn synth_ecg<R: Rng>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let hr = rng.gen_range(1.0..1.6);
    let first_beat = rng.gen_range(0.0..1.0 / hr);
    let harmonics: Vec<(f64, f64)> = (1..=3)
        .map(|k| (rng.gen_range(0.02..0.12) / k as f64, rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let qrs_amp = rng.gen_range(0.8..1.4);
    let t_amp = rng.gen_range(0.15..0.35);
    let duration = len as f64 / fs;
    let beats: Vec<f64> = (-1..)
        .map(|k| first_beat + k as f64 / hr)
        .take_while(|&t| t < duration + 1.0 / hr)
        .collect();
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            let mut v: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(k, &(a, ph))| a * (2.0 * PI * hr * (k + 1) as f64 * t + ph).sin())
                .sum();
            for &b in &beats {
                let dq = (t - b) / 0.012;
                let dt = (t - b - 0.25) / 0.05;
                v += qrs_amp * (-0.5 * dq * dq).exp() + t_amp * (-0.5 * dt * dt).exp();
            }
            v
        })
        .collect()
}

/// Baseline wander: a sum of three sinusoids below 0.7 Hz with random
/// amplitudes and phases.
pub fn synth_wander<R: Rng>(rng: &mut R, len: usize, fs: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.05..0.7),
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            parts.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum()
        })
        .collect()
}

/// `count` clean/noisy pairs with factors uniform in the allowed range. Pair
/// `k` is named `synth{k:04}` and depends only on `(seed, k)`.
pub fn synth_pairs(seed: u64, count: usize, len: usize, fs: f64) -> Result<Vec<NoisyPair>> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let clean = EcgSegment {
                samples: synth_ecg(&mut rng, len, fs),
                fs,
                source: SegmentSource {
                    record: format!("synth{k:04}"),
                    channel: 0,
                    offset: 0,
                },
            };
            let noise = normalize_noise(&synth_wander(&mut rng, len, fs), &clean.samples)?;
            let factor = rng.gen_range(FACTOR_MIN..=FACTOR_MAX);
            mix_noise(&clean, &noise, factor)
        })
        .collect()
}
