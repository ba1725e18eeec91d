//! On-disk datasets: record discovery, the contamination run that turns clean
//! and noise records into pairs, deterministic splits, and the JSON-lines
//! manifest / pair files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::wfdb::parse_wfdb_record;
use crate::data::{
    mix_noise, normalize_noise, parse_csv_record, segment_record, EcgRecord, EcgSegment, NoisyPair, SegmentSource,
    FACTOR_MAX, FACTOR_MIN,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const REJECTS_FILE: &str = "rejects.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Train / validation fractions; the remainder is the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if !(self.train >= 0.0 && self.val >= 0.0 && self.train + self.val <= 1.0) {
            return Err(Error::Config(format!(
                "split ratios train={} val={} must be nonnegative with sum at most 1",
                self.train, self.val
            )));
        }
        Ok(())
    }
}

fn sha256_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Assigns a record to a split from a hash of its id, so every segment of a
/// record lands in the same split regardless of processing order.
pub fn split_for_record(record: &str, ratios: SplitRatios) -> Split {
    let u = (sha256_u64(&[record.as_bytes()]) >> 11) as f64 / (1u64 << 53) as f64;
    if u < ratios.train {
        Split::Train
    } else if u < ratios.train + ratios.val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Per-segment seed derived from the run seed and the segment id.
pub fn segment_seed(seed: u64, segment_id: &str) -> u64 {
    sha256_u64(&[&seed.to_le_bytes(), segment_id.as_bytes()])
}

pub fn segment_id(source: &SegmentSource) -> String {
    format!("{}_c{}_{}", source.record, source.channel, source.offset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub segment_id: String,
    pub record: String,
    pub channel: usize,
    pub offset: usize,
    pub factor: f64,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairLine {
    segment_id: String,
    fs: f64,
    clean: Vec<f64>,
    noisy: Vec<f64>,
}

/// Pairs with their manifest rows, in manifest order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    pub pairs: Vec<NoisyPair>,
}

impl Dataset {
    /// Wraps already-mixed pairs (e.g. synthetic ones), splitting by record.
    pub fn from_pairs(pairs: Vec<NoisyPair>, seed: u64, ratios: SplitRatios) -> Self {
        let entries = pairs
            .iter()
            .map(|p| {
                let id = segment_id(&p.clean.source);
                ManifestEntry {
                    seed: segment_seed(seed, &id),
                    segment_id: id,
                    record: p.clean.source.record.clone(),
                    channel: p.clean.source.channel,
                    offset: p.clean.source.offset,
                    factor: p.factor,
                    split: split_for_record(&p.clean.source.record, ratios),
                }
            })
            .collect();
        Self { entries, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&NoisyPair> {
        self.entries
            .iter()
            .zip(&self.pairs)
            .filter(|(e, _)| e.split == split)
            .map(|(_, p)| p)
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let mut pairs = String::new();
        for (e, p) in self.entries.iter().zip(&self.pairs) {
            manifest.push_str(&serde_json::to_string(e)?);
            manifest.push('\n');
            let line = PairLine {
                segment_id: e.segment_id.clone(),
                fs: p.clean.fs,
                clean: p.clean.samples.clone(),
                noisy: p.noisy.samples.clone(),
            };
            pairs.push_str(&serde_json::to_string(&line)?);
            pairs.push('\n');
        }
        write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
        write_file(&dir.join(PAIRS_FILE), pairs.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let pairs_path = dir.join(PAIRS_FILE);
        let entries: Vec<ManifestEntry> = read_jsonl(&manifest_path)?;
        let lines: Vec<PairLine> = read_jsonl(&pairs_path)?;
        let mut by_id: BTreeMap<String, PairLine> = lines.into_iter().map(|l| (l.segment_id.clone(), l)).collect();
        let mut pairs = Vec::with_capacity(entries.len());
        for e in &entries {
            let line = by_id.remove(&e.segment_id).ok_or_else(|| {
                Error::Data(format!("{}: segment {} has no samples", pairs_path.display(), e.segment_id))
            })?;
            if line.clean.len() != line.noisy.len() {
                return Err(Error::LengthMismatch(format!("segment {}", e.segment_id)));
            }
            let source = SegmentSource {
                record: e.record.clone(),
                channel: e.channel,
                offset: e.offset,
            };
            let seg = |samples| EcgSegment {
                samples,
                fs: line.fs,
                source: source.clone(),
            };
            pairs.push(NoisyPair {
                clean: seg(line.clean.clone()),
                noisy: seg(line.noisy.clone()),
                factor: e.factor,
            });
        }
        Ok(Self { entries, pairs })
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// A record that could not be read, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub name: String,
    pub reason: String,
}

/// Reads every `*.hea` (with its signal file) and `*.csv` record in `dir`, in
/// file-name order. Unreadable records are returned as rejects.
pub fn load_records_dir(dir: &Path) -> Result<(Vec<EcgRecord>, Vec<Reject>)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|s| s.to_str()), Some("hea" | "csv")))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for path in paths {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        match load_record(&path) {
            Ok(r) => records.push(r),
            Err(e) => rejects.push(Reject {
                name,
                reason: e.to_string(),
            }),
        }
    }
    Ok((records, rejects))
}

/// Reads one record from a `.hea` or `.csv` path.
pub fn load_record(path: &Path) -> Result<EcgRecord> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    match path.extension().and_then(|s| s.to_str()) {
        Some("csv") => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv_record(&name, &text)
        }
        Some("hea") => {
            let header = fs::read(path).map_err(|e| Error::io(path, e))?;
            let text = String::from_utf8_lossy(&header);
            let parsed = crate::data::wfdb::parse_header(&text)?;
            let dat = path.with_file_name(&parsed.signals[0].file_name);
            let data = fs::read(&dat).map_err(|e| Error::io(&dat, e))?;
            parse_wfdb_record(&header, &data)
        }
        _ => Err(Error::Data(format!("{}: unknown record type", path.display()))),
    }
}

/// Settings for turning clean and noise records into a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub segment_len: usize,
    pub stride: usize,
    pub channel: usize,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            segment_len: 512,
            stride: 512,
            channel: 0,
            seed: 0,
            ratios: SplitRatios::default(),
        }
    }
}

/// Result of a contamination run. Rejects name records or segments that were
/// skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub dataset: Dataset,
    pub rejects: Vec<Reject>,
}

const NOISE_DRAWS: usize = 8;

/// Segments every clean record and contaminates each segment with a window
/// of noise drawn from `noise`. Every random choice for a segment comes from
/// a generator seeded by [`segment_seed`], so results do not depend on
/// record order.
pub fn prepare_dataset(clean: &[EcgRecord], noise: &[EcgRecord], config: &PrepareConfig) -> Result<Prepared> {
    config.ratios.validate()?;
    let len = config.segment_len;
    let noise_tracks: Vec<(&str, &[f64])> = noise
        .iter()
        .flat_map(|r| r.channels.iter().map(move |c| (r.name.as_str(), c.as_slice())))
        .filter(|(_, c)| c.len() >= len)
        .collect();
    if noise_tracks.is_empty() {
        return Err(Error::Data(format!("no noise record has at least {len} samples")));
    }
    let mut dataset = Dataset::default();
    let mut rejects = Vec::new();
    for record in clean {
        let segments = match segment_record(record, len, config.stride, config.channel) {
            Ok(s) => s,
            Err(e) => {
                rejects.push(Reject {
                    name: record.name.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if segments.is_empty() {
            rejects.push(Reject {
                name: record.name.clone(),
                reason: format!("shorter than {len} samples"),
            });
        }
        for seg in segments {
            let id = segment_id(&seg.source);
            let seed = segment_seed(config.seed, &id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut outcome = Err(Error::Degenerate(format!("{id}: no usable noise window")));
            for _ in 0..NOISE_DRAWS {
                let (_, track) = noise_tracks[rng.gen_range(0..noise_tracks.len())];
                let start = rng.gen_range(0..=track.len() - len);
                match normalize_noise(&track[start..start + len], &seg.samples) {
                    Ok(n) => {
                        outcome = Ok(n);
                        break;
                    }
                    Err(e @ Error::Degenerate(_)) if seg.samples.iter().all(|&v| v == seg.samples[0]) => {
                        outcome = Err(e);
                        break;
                    }
                    Err(e) => outcome = Err(e),
                }
            }
            let noise = match outcome {
                Ok(n) => n,
                Err(e) => {
                    rejects.push(Reject {
                        name: id,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let factor = rng.gen_range(FACTOR_MIN..=FACTOR_MAX);
            let pair = mix_noise(&seg, &noise, factor)?;
            dataset.entries.push(ManifestEntry {
                segment_id: id,
                record: seg.source.record.clone(),
                channel: seg.source.channel,
                offset: seg.source.offset,
                factor,
                seed,
                split: split_for_record(&seg.source.record, config.ratios),
            });
            dataset.pairs.push(pair);
        }
    }
    Ok(Prepared { dataset, rejects })
}

pub fn write_rejects(dir: &Path, rejects: &[Reject]) -> Result<()> {
    let text: String = rejects.iter().map(|r| format!("{}\t{}\n", r.name, r.reason)).collect();
    write_file(&dir.join(REJECTS_FILE), text.as_bytes())
}
