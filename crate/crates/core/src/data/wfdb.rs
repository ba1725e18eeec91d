//! Reader for the subset of PhysioNet WFDB records used here: one header plus
//! one signal file holding all channels frame-interleaved, in format 16
//! (little-endian 16-bit) or format 212 (two 12-bit samples per 3 bytes).

use crate::data::EcgRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    Format16,
    Format212,
}

impl SignalFormat {
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            16 => Ok(Self::Format16),
            212 => Ok(Self::Format212),
            other => Err(Error::UnsupportedFormat(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: SignalFormat,
    pub byte_offset: usize,
    /// ADC units per physical unit.
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub name: String,
    pub num_signals: usize,
    pub fs: f64,
    pub num_samples: Option<usize>,
    pub signals: Vec<SignalSpec>,
}

const DEFAULT_FS: f64 = 250.0;
const DEFAULT_GAIN: f64 = 200.0;

fn malformed(msg: impl Into<String>) -> Error {
    Error::Malformed(msg.into())
}

fn leading_number(s: &str) -> &str {
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .unwrap_or(s.len());
    &s[..end]
}

pub fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let record_line = lines.next().ok_or_else(|| malformed("empty header"))?;
    let mut f = record_line.split_whitespace();
    let name = f.next().ok_or_else(|| malformed("missing record name"))?;
    if name.contains('/') {
        return Err(malformed("multi-segment records are not supported"));
    }
    let num_signals: usize = f
        .next()
        .ok_or_else(|| malformed("missing signal count"))?
        .parse()
        .map_err(|_| malformed("bad signal count"))?;
    let fs = match f.next() {
        // "360/360(0)" style: frequency before any counter spec
        Some(tok) => leading_number(tok.split('/').next().unwrap_or(tok))
            .parse::<f64>()
            .map_err(|_| malformed(format!("bad sampling frequency `{tok}`")))?,
        None => DEFAULT_FS,
    };
    let num_samples = match f.next() {
        Some(tok) => Some(tok.parse::<usize>().map_err(|_| malformed(format!("bad sample count `{tok}`")))?),
        None => None,
    };
    if num_signals == 0 {
        return Err(Error::ChannelMismatch("header declares no signals".into()));
    }

    let mut signals = Vec::with_capacity(num_signals);
    for line in lines {
        let mut f = line.split_whitespace();
        let file_name = f.next().ok_or_else(|| malformed("empty signal line"))?.to_string();
        let fmt_tok = f.next().ok_or_else(|| malformed("missing format"))?;
        let code_str: String = fmt_tok.chars().take_while(char::is_ascii_digit).collect();
        let code: u32 = code_str
            .parse()
            .map_err(|_| malformed(format!("bad format `{fmt_tok}`")))?;
        if fmt_tok[code_str.len()..].starts_with('x') || fmt_tok.contains(':') {
            return Err(malformed(format!("multi-frequency or skewed signals are not supported: `{fmt_tok}`")));
        }
        let format = SignalFormat::from_code(code)?;
        let byte_offset = match fmt_tok.split_once('+') {
            Some((_, off)) => off.parse().map_err(|_| malformed(format!("bad byte offset in `{fmt_tok}`")))?,
            None => 0,
        };

        let mut gain = DEFAULT_GAIN;
        let mut baseline: Option<i32> = None;
        let mut units = "mV".to_string();
        if let Some(tok) = f.next() {
            let (gain_part, unit_part) = match tok.split_once('/') {
                Some((g, u)) => (g, Some(u)),
                None => (tok, None),
            };
            let (g, b) = match gain_part.split_once('(') {
                Some((g, rest)) => (g, Some(rest.trim_end_matches(')'))),
                None => (gain_part, None),
            };
            let g: f64 = g.parse().map_err(|_| malformed(format!("bad gain `{tok}`")))?;
            if g != 0.0 {
                gain = g;
            }
            if let Some(b) = b {
                baseline = Some(b.parse().map_err(|_| malformed(format!("bad baseline `{tok}`")))?);
            }
            if let Some(u) = unit_part {
                units = u.to_string();
            }
        }
        let _adc_res = f.next();
        let adc_zero: i32 = match f.next() {
            Some(tok) => tok.parse().map_err(|_| malformed(format!("bad ADC zero `{tok}`")))?,
            None => 0,
        };
        let _init = f.next();
        let _checksum = f.next();
        let _block = f.next();
        let description = f.collect::<Vec<_>>().join(" ");
        signals.push(SignalSpec {
            file_name,
            format,
            byte_offset,
            gain,
            baseline: baseline.unwrap_or(adc_zero),
            units,
            description,
        });
    }
    if signals.len() != num_signals {
        return Err(Error::ChannelMismatch(format!(
            "header declares {num_signals} signals but lists {}",
            signals.len()
        )));
    }
    Ok(Header {
        name: name.to_string(),
        num_signals,
        fs,
        num_samples,
        signals,
    })
}

/// Decodes `count` raw ADC values from a format-212 byte stream.
fn decode_212(bytes: &[u8], count: usize) -> Result<Vec<i32>> {
    let needed = count.div_ceil(2) * 3 - if count % 2 == 1 { 1 } else { 0 };
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let sign12 = |v: i32| if v & 0x800 != 0 { v - 0x1000 } else { v };
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = (i / 2) * 3;
        let v = if i % 2 == 0 {
            bytes[base] as i32 | ((bytes[base + 1] as i32 & 0x0F) << 8)
        } else {
            bytes[base + 2] as i32 | ((bytes[base + 1] as i32 & 0xF0) << 4)
        };
        out.push(sign12(v));
    }
    Ok(out)
}

fn decode_16(bytes: &[u8], count: usize) -> Result<Vec<i32>> {
    let needed = count * 2;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[..needed]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect())
}

/// Parses a header and its signal file into physical units:
/// `(adc - baseline) / gain`.
pub fn parse_wfdb_record(header_bytes: &[u8], data_bytes: &[u8]) -> Result<EcgRecord> {
    let text = std::str::from_utf8(header_bytes).map_err(|_| malformed("header is not UTF-8"))?;
    let header = parse_header(text)?;
    let first = &header.signals[0];
    if header
        .signals
        .iter()
        .any(|s| s.file_name != first.file_name || s.format != first.format || s.byte_offset != first.byte_offset)
    {
        return Err(malformed("all signals must share one file, format and offset"));
    }
    let data = data_bytes.get(first.byte_offset..).unwrap_or(&[]);
    let nsig = header.num_signals;
    let frames = match header.num_samples {
        Some(n) if n > 0 => n,
        _ => match first.format {
            SignalFormat::Format16 => data.len() / 2 / nsig,
            SignalFormat::Format212 => data.len() * 2 / 3 / nsig,
        },
    };
    let raw = match first.format {
        SignalFormat::Format16 => decode_16(data, frames * nsig)?,
        SignalFormat::Format212 => decode_212(data, frames * nsig)?,
    };
    let channels = (0..nsig)
        .map(|c| {
            let s = &header.signals[c];
            (0..frames)
                .map(|t| (raw[t * nsig + c] - s.baseline) as f64 / s.gain)
                .collect()
        })
        .collect();
    EcgRecord::new(header.name, header.fs, channels)
}
