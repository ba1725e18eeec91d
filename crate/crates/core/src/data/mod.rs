//! ECG records, segments, and the noise-contamination protocol.

pub mod dataset;
mod noise;
mod segment;
pub mod synth;
pub mod wfdb;

pub use noise::{mix_noise, normalize_noise, FACTOR_MAX, FACTOR_MIN};
pub use segment::segment_record;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-channel recording in physical units (mV).
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub name: String,
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
}

impl EcgRecord {
    pub fn new(name: impl Into<String>, fs: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::Malformed(format!("{name}: sampling rate {fs} must be positive")));
        }
        if channels.is_empty() {
            return Err(Error::ChannelMismatch(format!("{name}: no channels")));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::ChannelMismatch(format!("{name}: channels differ in length")));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!("{name}: non-finite sample")));
        }
        Ok(Self { name, fs, channels })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where a segment came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSource {
    pub record: String,
    pub channel: usize,
    pub offset: usize,
}

/// A fixed-length single-channel excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgSegment {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub source: SegmentSource,
}

impl EcgSegment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A clean segment and its contaminated counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPair {
    pub clean: EcgSegment,
    pub noisy: EcgSegment,
    pub factor: f64,
}

/// Reads a plain CSV record: a header row `fs=<Hz>` followed by one sample
/// per line.
pub fn parse_csv_record(name: &str, text: &str) -> Result<EcgRecord> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed(format!("{name}: empty CSV record")))?;
    let fs = header
        .strip_prefix("fs=")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| Error::Malformed(format!("{name}: expected header `fs=<Hz>`, got `{header}`")))?;
    let samples = lines
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|_| Error::Malformed(format!("{name}: line {} is not a number: `{l}`", i + 2)))
        })
        .collect::<Result<Vec<f64>>>()?;
    EcgRecord::new(name, fs, vec![samples])
}

/// Inverse of [`parse_csv_record`] for one channel.
pub fn format_csv_record(fs: f64, samples: &[f64]) -> String {
    let mut s = format!("fs={fs}\n");
    for v in samples {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_record_round_trip() {
        let text = format_csv_record(360.0, &[0.5, -1.25, 3.0]);
        let rec = parse_csv_record("r", &text).unwrap();
        assert_eq!(rec.fs, 360.0);
        assert_eq!(rec.channels[0], vec![0.5, -1.25, 3.0]);
    }

    #[test]
    fn csv_record_requires_header() {
        assert!(parse_csv_record("r", "1.0\n2.0\n").is_err());
        assert!(parse_csv_record("r", "fs=250\n1.0\nabc\n").is_err());
    }

    #[test]
    fn record_invariants() {
        assert!(EcgRecord::new("a", 0.0, vec![vec![1.0]]).is_err());
        assert!(EcgRecord::new("a", 250.0, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(EcgRecord::new("a", 250.0, vec![vec![f64::NAN]]).is_err());
    }
}
