//! Wall-clock timing of the forward pass.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MeanStd;
use crate::net::Model;

/// Per-segment forward time over `reps` timed passes, plus the FLOP count
/// of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mean_s: f64,
    pub std_s: f64,
    pub reps: usize,
    pub flops: u64,
}

/// Runs one untimed warm-up pass, then `reps` timed passes over all
/// segments, one forward at a time.
pub fn bench_inference(model: &Model, segments: &[Vec<f64>], reps: usize) -> Result<BenchResult> {
    if reps < 3 {
        return Err(Error::Config(format!("benchmark needs at least 3 repetitions, got {reps}")));
    }
    let first = segments
        .first()
        .ok_or_else(|| Error::Data("benchmark needs at least one segment".into()))?;
    let flops = model.denoise(first)?.flops;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for s in segments {
            std::hint::black_box(model.denoise(s)?);
        }
        times.push(start.elapsed().as_secs_f64() / segments.len() as f64);
    }
    let s = MeanStd::of(&times);
    Ok(BenchResult {
        mean_s: s.mean,
        std_s: s.std,
        reps,
        flops,
    })
}

/// One line of the time-versus-quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config_id: String,
    pub window: usize,
    pub hop: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub ssd_mean: f64,
    pub flops: u64,
}
