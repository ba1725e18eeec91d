//! Binary spectrogram dumps: little-endian `u32 frames`, `u32 bins`,
//! `u32 mode`, `f32 c`, then the two planes as row-major `f32`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tf::FeatureMode;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramDump {
    pub frames: usize,
    pub bins: usize,
    pub mode: FeatureMode,
    pub c: f32,
    /// `2 * frames * bins` values, first plane then second.
    pub planes: Vec<f32>,
}

pub fn write_dump(path: &Path, dump: &SpectrogramDump) -> Result<()> {
    if dump.planes.len() != 2 * dump.frames * dump.bins {
        return Err(Error::LengthMismatch(format!(
            "dump holds {} values, expected {}",
            dump.planes.len(),
            2 * dump.frames * dump.bins
        )));
    }
    let mut bytes = Vec::with_capacity(16 + 4 * dump.planes.len());
    bytes.extend_from_slice(&(dump.frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(dump.bins as u32).to_le_bytes());
    bytes.extend_from_slice(&dump.mode.code().to_le_bytes());
    bytes.extend_from_slice(&dump.c.to_le_bytes());
    for v in &dump.planes {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<SpectrogramDump> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| [b[0], b[1], b[2], b[3]])
            .ok_or(Error::Truncated {
                needed: 4 * i + 4,
                available: bytes.len(),
            })
    };
    let frames = u32::from_le_bytes(word(0)?) as usize;
    let bins = u32::from_le_bytes(word(1)?) as usize;
    let mode = FeatureMode::from_code(u32::from_le_bytes(word(2)?))?;
    let c = f32::from_le_bytes(word(3)?);
    let count = 2 * frames * bins;
    let planes = (0..count)
        .map(|k| word(4 + k).map(f32::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrogramDump {
        frames,
        bins,
        mode,
        c,
        planes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = SpectrogramDump {
            frames: 2,
            bins: 3,
            mode: FeatureMode::MagPhase,
            c: 0.3,
            planes: (0..12).map(|v| v as f32 * 0.5).collect(),
        };
        let p = dir.path().join("s.bin");
        write_dump(&p, &d).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..12], &[2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(read_dump(&p).unwrap(), d);
        fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_dump(&p), Err(Error::Truncated { .. })));
    }
}
