//! Distortion metrics between a clean reference and a processed signal,
//! their aggregates, classical filter baselines, and inference timing.

mod bench;
mod filters;

pub use bench::{bench_inference, BenchResult, BenchRow};
pub use filters::{
    fir_baseline, iir_baseline, FirConfig, FirFilter, IirConfig, IirFilter, Biquad, IIR_ORDER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics of one segment. PRD and cosine similarity are `None` where their
/// denominators vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub ssd: f64,
    pub mad: f64,
    pub prd: Option<f64>,
    pub cossim: Option<f64>,
}

/// Compares processed `y` against clean `x`:
/// `SSD = sum (y - x)^2`, `MAD = max |y - x|`,
/// `PRD = 100 sqrt(sum (y - x)^2 / sum (y - mean(x))^2)`,
/// `CosSim = <x, y> / (|x| |y|)`.
pub fn compute_metrics(x: &[f64], y: &[f64]) -> Result<SegmentMetrics> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("clean has {} samples, processed {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    let ssd: f64 = x.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
    let mad = x.iter().zip(y).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
    let mean_x = x.iter().sum::<f64>() / x.len() as f64;
    let den: f64 = y.iter().map(|b| (b - mean_x).powi(2)).sum();
    let prd = (den > 0.0).then(|| 100.0 * (ssd / den).sqrt());
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let cossim = (nx > 0.0 && ny > 0.0).then(|| (dot / (nx * ny)).clamp(-1.0, 1.0));
    Ok(SegmentMetrics { ssd, mad, prd, cossim })
}

/// Mean and unbiased standard deviation (zero for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

/// Aggregate over segments. Undefined PRD / CosSim values are left out and
/// counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub ssd: MeanStd,
    pub mad: MeanStd,
    pub prd: MeanStd,
    pub cossim: MeanStd,
    pub undefined_prd: usize,
    pub undefined_cossim: usize,
}

pub fn aggregate(items: &[SegmentMetrics]) -> MetricSummary {
    let ssd: Vec<f64> = items.iter().map(|m| m.ssd).collect();
    let mad: Vec<f64> = items.iter().map(|m| m.mad).collect();
    let prd: Vec<f64> = items.iter().filter_map(|m| m.prd).collect();
    let cos: Vec<f64> = items.iter().filter_map(|m| m.cossim).collect();
    MetricSummary {
        count: items.len(),
        ssd: MeanStd::of(&ssd),
        mad: MeanStd::of(&mad),
        prd: MeanStd::of(&prd),
        cossim: MeanStd::of(&cos),
        undefined_prd: items.len() - prd.len(),
        undefined_cossim: items.len() - cos.len(),
    }
}
