//! Fixed-length windowing of records.

use crate::data::{EcgRecord, EcgSegment, SegmentSource};
use crate::error::{Error, Result};

/// Cuts one channel into windows of `len` samples starting at offsets
/// `0, stride, 2*stride, ...`; a trailing partial window is dropped and a
/// record shorter than `len` yields no segments.
pub fn segment_record(record: &EcgRecord, len: usize, stride: usize, channel: usize) -> Result<Vec<EcgSegment>> {
    if len == 0 {
        return Err(Error::Config("segment length must be at least 1".into()));
    }
    if stride == 0 || stride > len {
        return Err(Error::Config(format!("stride {stride} must lie in [1, {len}]")));
    }
    let samples = record.channels.get(channel).ok_or_else(|| {
        Error::ChannelMismatch(format!(
            "{}: channel {channel} requested, record has {}",
            record.name,
            record.channels.len()
        ))
    })?;
    if samples.len() < len {
        return Ok(Vec::new());
    }
    Ok((0..=samples.len() - len)
        .step_by(stride)
        .map(|offset| EcgSegment {
            samples: samples[offset..offset + len].to_vec(),
            fs: record.fs,
            source: SegmentSource {
                record: record.name.clone(),
                channel,
                offset,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(n: usize) -> EcgRecord {
        EcgRecord::new("r", 360.0, vec![(0..n).map(|i| i as f64).collect()]).unwrap()
    }

    #[test]
    fn tiling_examples() {
        let s = segment_record(&rec(1024), 512, 512, 0).unwrap();
        assert_eq!(s.iter().map(|s| s.source.offset).collect::<Vec<_>>(), vec![0, 512]);
        assert_eq!(s[1].samples[0], 512.0);
        assert_eq!(segment_record(&rec(1000), 512, 512, 0).unwrap().len(), 1);
        assert!(segment_record(&rec(100), 512, 512, 0).unwrap().is_empty());
    }

    #[test]
    fn invalid_arguments() {
        assert!(segment_record(&rec(10), 0, 1, 0).is_err());
        assert!(segment_record(&rec(10), 4, 5, 0).is_err());
        assert!(segment_record(&rec(10), 4, 0, 0).is_err());
        assert!(matches!(segment_record(&rec(10), 4, 4, 1), Err(Error::ChannelMismatch(_))));
    }

    proptest! {
        #[test]
        fn offsets_are_deterministic_and_in_bounds(n in 0usize..400, len in 1usize..64, stride_frac in 0.0f64..1.0) {
            let stride = 1 + ((len - 1) as f64 * stride_frac) as usize;
            let r = rec(n);
            let a = segment_record(&r, len, stride, 0).unwrap();
            let b = segment_record(&r, len, stride, 0).unwrap();
            prop_assert_eq!(&a, &b);
            for (k, s) in a.iter().enumerate() {
                prop_assert_eq!(s.source.offset, k * stride);
                prop_assert!(s.source.offset + len <= n);
                prop_assert_eq!(s.samples.len(), len);
            }
            let expected = if n < len { 0 } else { (n - len) / stride + 1 };
            prop_assert_eq!(a.len(), expected);
        }
    }
}
