//! The pipeline steps behind the command-line verbs. Each writes its
//! outputs plus a [`RunManifest`] into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunManifest};
use crate::data::dataset::{
    load_record, load_records_dir, prepare_dataset, write_file, write_rejects, Dataset, PrepareConfig, Split,
    MANIFEST_FILE,
};
use crate::data::{FACTOR_MAX, FACTOR_MIN};
use crate::data::synth::synth_pairs;
use crate::data::{format_csv_record, EcgRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, bench_inference, compute_metrics, fir_baseline, iir_baseline, BenchRow, MeanStd, MetricSummary,
    SegmentMetrics,
};
use crate::net::{EnhancedOutput, ForwardOptions, Model};
use crate::tf::{check_exponent, write_dump, FeatureMode, SpectrogramDump};
use crate::train::{train, TrainOutcome};

pub const SEGMENTS_FILE: &str = "segments.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BENCH_FILE: &str = "bench.csv";
/// Compression exponent of the reference configuration.
pub const DEFAULT_C: f64 = 0.3;

fn prepare_config(cfg: &RunConfig) -> PrepareConfig {
    PrepareConfig {
        segment_len: cfg.model.segment_len,
        stride: cfg.data.stride.unwrap_or(cfg.model.segment_len),
        channel: cfg.data.channel,
        seed: cfg.seed(),
        ratios: cfg.data.ratios,
    }
}

/// Counts reported by the prepare step.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepareReport {
    pub pairs: usize,
    pub rejects: usize,
}

fn read_dir_records(dir: &Path, what: &str) -> Result<(Vec<EcgRecord>, Vec<crate::data::dataset::Reject>)> {
    let (records, rejects) = load_records_dir(dir)?;
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no records found in {what} directory {} ({} unreadable)",
            dir.display(),
            rejects.len()
        )));
    }
    Ok((records, rejects))
}

/// Segments and contaminates the clean records of `clean_dir` with noise
/// from `noise_dir`. Unreadable records go to the rejects file.
pub fn cmd_prepare(clean_dir: &Path, noise_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<PrepareReport> {
    cfg.validate()?;
    let (clean, mut rejects) = read_dir_records(clean_dir, "clean")?;
    let (noise, noise_rejects) = read_dir_records(noise_dir, "noise")?;
    rejects.extend(noise_rejects);
    let prepared = prepare_dataset(&clean, &noise, &prepare_config(cfg))?;
    rejects.extend(prepared.rejects);
    if prepared.dataset.is_empty() {
        return Err(Error::Data("no segments could be prepared".into()));
    }
    prepared.dataset.save(out)?;
    write_rejects(out, &rejects)?;
    RunManifest::new("prepare", cfg, &[clean_dir, noise_dir])?.write(out)?;
    Ok(PrepareReport {
        pairs: prepared.dataset.len(),
        rejects: rejects.len(),
    })
}

/// Writes a synthetic corpus of `count` pairs of the model's segment length.
pub fn cmd_prepare_synthetic(count: usize, out: &Path, cfg: &RunConfig) -> Result<PrepareReport> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::Config("synthetic corpus needs at least one pair".into()));
    }
    let pairs = synth_pairs(cfg.seed(), count, cfg.model.segment_len, cfg.data.synth_fs)?;
    let dataset = Dataset::from_pairs(pairs, cfg.seed(), cfg.data.ratios);
    dataset.save(out)?;
    write_rejects(out, &[])?;
    RunManifest::new("prepare", cfg, &[])?.write(out)?;
    Ok(PrepareReport { pairs: count, rejects: 0 })
}

/// Trains a fresh model (or resumes the run in `out`) on a prepared dataset.
pub fn cmd_train(dataset_dir: &Path, out: &Path, cfg: &RunConfig, resume: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = Dataset::load(dataset_dir)?;
    let model = Model::new(cfg.model.clone(), cfg.seed())?;
    let outcome = train(model, &cfg.train, &data, Some(out), resume.then_some(out))?;
    RunManifest::new("train", cfg, &[dataset_dir])?.write(out)?;
    Ok(outcome)
}

/// Options of the denoise step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DenoiseOptions {
    /// Force the mask to one and keep the noisy phase.
    pub identity_mask: bool,
    /// Write the enhanced spectrum of every tile.
    pub dumps: bool,
}

/// Tile layout of a record of `n` samples for segments of `len`: pairs of
/// (start, number of leading outputs to drop). Full tiles do not overlap; a
/// trailing partial tile is taken as the last `len` samples and only its
/// new outputs are kept. A record shorter than `len` is one tile starting
/// before the record, left-padded with its first sample.
pub fn tiles(n: usize, len: usize) -> Vec<(isize, usize)> {
    if n < len {
        return vec![(n as isize - len as isize, len - n)];
    }
    let mut t: Vec<(isize, usize)> = (0..n / len).map(|k| ((k * len) as isize, 0)).collect();
    let rem = n % len;
    if rem > 0 {
        t.push(((n - len) as isize, len - rem));
    }
    t
}

/// Denoises a whole signal tile by tile; the output has the input's length.
pub fn denoise_signal(model: &Model, x: &[f64], opts: DenoiseOptions) -> Result<(Vec<f64>, Vec<EnhancedOutput>)> {
    if x.is_empty() {
        return Err(Error::Data("cannot denoise an empty signal".into()));
    }
    let len = model.config.segment_len;
    let fwd = ForwardOptions {
        identity: opts.identity_mask,
    };
    let outputs: Vec<(usize, EnhancedOutput)> = tiles(x.len(), len)
        .par_iter()
        .map(|&(start, drop)| {
            let seg: Vec<f64> = (0..len as isize)
                .map(|k| x[(start + k).max(0) as usize])
                .collect();
            model.denoise_with(&seg, fwd).map(|o| (drop, o))
        })
        .collect::<Result<_>>()?;
    let mut y = Vec::with_capacity(x.len());
    for (drop, o) in &outputs {
        y.extend_from_slice(&o.signal[*drop..]);
    }
    Ok((y, outputs.into_iter().map(|(_, o)| o).collect()))
}

fn write_tile_dumps(out: &Path, name: &str, model: &Model, tiles: &[EnhancedOutput]) -> Result<()> {
    for (k, t) in tiles.iter().enumerate() {
        let dump = SpectrogramDump {
            frames: t.complex.shape()[1],
            bins: t.complex.shape()[2],
            mode: FeatureMode::Complex,
            c: model.config.c as f32,
            planes: t.complex.data().iter().map(|&v| v as f32).collect(),
        };
        write_dump(&out.join(format!("{name}_t{k}.spec")), &dump)?;
    }
    Ok(())
}

/// A denoised record or segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub name: String,
    pub len: usize,
}

fn record_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(f.extension().and_then(|s| s.to_str()), Some("hea" | "csv")))
                .collect();
            found.sort();
            paths.extend(found);
        } else {
            paths.push(p.clone());
        }
    }
    if paths.is_empty() {
        return Err(Error::Data("no records found".into()));
    }
    Ok(paths)
}

/// Denoises records (`.hea` or `.csv` files, or directories of them),
/// writing `<name>.csv` per record with one sample per line.
pub fn cmd_denoise(
    checkpoint: &Path,
    inputs: &[PathBuf],
    out: &Path,
    cfg: &RunConfig,
    opts: DenoiseOptions,
) -> Result<Vec<Denoised>> {
    let model = Model::load(checkpoint)?;
    let paths = record_paths(inputs)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut done = Vec::new();
    for path in &paths {
        let rec = load_record(path)?;
        let x = rec.channels.get(cfg.data.channel).ok_or_else(|| {
            Error::ChannelMismatch(format!("{} has no channel {}", rec.name, cfg.data.channel))
        })?;
        let (y, tiles) = denoise_signal(&model, x, opts)?;
        write_file(&out.join(format!("{}.csv", rec.name)), format_csv_record(rec.fs, &y).as_bytes())?;
        if opts.dumps {
            write_tile_dumps(out, &rec.name, &model, &tiles)?;
        }
        done.push(Denoised { name: rec.name, len: y.len() });
    }
    let mut run = cfg.clone();
    run.model = model.config.clone();
    let mut ins: Vec<&Path> = vec![checkpoint];
    ins.extend(inputs.iter().map(PathBuf::as_path));
    RunManifest::new("denoise", &run, &ins)?.write(out)?;
    Ok(done)
}

/// Denoises the noisy segments of a prepared dataset (optionally one
/// split), writing `<segment_id>.csv` per segment.
pub fn cmd_denoise_dataset(
    checkpoint: &Path,
    dataset_dir: &Path,
    split: Option<Split>,
    out: &Path,
    cfg: &RunConfig,
    opts: DenoiseOptions,
) -> Result<Vec<Denoised>> {
    let model = Model::load(checkpoint)?;
    let data = Dataset::load(dataset_dir)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let chosen: Vec<usize> = (0..data.len())
        .filter(|&i| split.is_none_or(|s| data.entries[i].split == s))
        .collect();
    let done = chosen
        .par_iter()
        .map(|&i| {
            let (id, pair) = (&data.entries[i].segment_id, &data.pairs[i]);
            let (y, tiles) = denoise_signal(&model, &pair.noisy.samples, opts)?;
            write_file(&out.join(format!("{id}.csv")), format_csv_record(pair.noisy.fs, &y).as_bytes())?;
            if opts.dumps {
                write_tile_dumps(out, id, &model, &tiles)?;
            }
            Ok(Denoised { name: id.clone(), len: y.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut run = cfg.clone();
    run.model = model.config.clone();
    RunManifest::new("denoise", &run, &[checkpoint, dataset_dir])?.write(out)?;
    Ok(done)
}

/// What to score against the clean references.
#[derive(Debug, Clone, PartialEq)]
pub enum Processed {
    /// `<id>.csv` files in a directory.
    Dir(PathBuf),
    /// The contaminated input itself.
    Noisy,
    /// The band-pass FIR baseline applied to the noisy input.
    Fir,
    /// The Butterworth high-pass baseline applied to the noisy input.
    Iir,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    /// Number of equal-width noise-factor bins for the curve table.
    pub bins: Option<usize>,
    /// Restrict a dataset reference to one split.
    pub split: Option<Split>,
}

/// One row of the per-segment table. Undefined metrics are empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub segment_id: String,
    pub factor: Option<f64>,
    pub ssd: f64,
    pub mad: f64,
    pub prd: Option<f64>,
    pub cossim: Option<f64>,
}

impl SegmentRow {
    fn metrics(&self) -> SegmentMetrics {
        SegmentMetrics {
            ssd: self.ssd,
            mad: self.mad,
            prd: self.prd,
            cossim: self.cossim,
        }
    }
}

/// One point of a metric-versus-noise-factor curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub metric: String,
    pub bin: usize,
    pub factor_lo: f64,
    pub factor_hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<SegmentRow>,
    pub summary: MetricSummary,
    pub curves: Vec<CurveRow>,
}

struct Reference {
    id: String,
    factor: Option<f64>,
    fs: f64,
    clean: Vec<f64>,
    noisy: Option<Vec<f64>>,
}

fn references(clean: &Path, split: Option<Split>, channel: usize) -> Result<Vec<Reference>> {
    if clean.join(MANIFEST_FILE).exists() {
        let data = Dataset::load(clean)?;
        return Ok(data
            .entries
            .iter()
            .zip(data.pairs)
            .filter(|(e, _)| split.is_none_or(|s| e.split == s))
            .map(|(e, p)| Reference {
                id: e.segment_id.clone(),
                factor: Some(e.factor),
                fs: p.clean.fs,
                clean: p.clean.samples,
                noisy: Some(p.noisy.samples),
            })
            .collect());
    }
    if split.is_some() {
        return Err(Error::Config("a split can only be chosen for a prepared dataset".into()));
    }
    let (records, rejects) = load_records_dir(clean)?;
    if let Some(r) = rejects.first() {
        return Err(Error::Data(format!("clean record {}: {}", r.name, r.reason)));
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no records found in {}", clean.display())));
    }
    records
        .into_iter()
        .map(|r| {
            let x = r
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| Error::ChannelMismatch(format!("{} has no channel {channel}", r.name)))?;
            Ok(Reference {
                id: r.name,
                factor: None,
                fs: r.fs,
                clean: x,
                noisy: None,
            })
        })
        .collect()
}

fn bin_of(f: f64, bins: usize) -> usize {
    let u = (f - FACTOR_MIN) / (FACTOR_MAX - FACTOR_MIN);
    ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Metric curves over `bins` equal-width noise-factor bins: one row per
/// metric and bin, empty bins included with no mean.
pub fn factor_curves(rows: &[SegmentRow], bins: usize) -> Result<Vec<CurveRow>> {
    if bins == 0 {
        return Err(Error::Config("number of bins must be positive".into()));
    }
    let mut grouped = vec![Vec::new(); bins];
    for r in rows {
        let f = r
            .factor
            .ok_or_else(|| Error::Config(format!("segment {} has no noise factor to bin by", r.segment_id)))?;
        grouped[bin_of(f, bins)].push(r.metrics());
    }
    let width = (FACTOR_MAX - FACTOR_MIN) / bins as f64;
    let mut curves = Vec::new();
    for metric in ["ssd", "mad", "prd", "cossim"] {
        for (b, items) in grouped.iter().enumerate() {
            let values: Vec<f64> = items
                .iter()
                .filter_map(|m| match metric {
                    "ssd" => Some(m.ssd),
                    "mad" => Some(m.mad),
                    "prd" => m.prd,
                    _ => m.cossim,
                })
                .collect();
            let s = MeanStd::of(&values);
            let defined = !values.is_empty();
            curves.push(CurveRow {
                metric: metric.to_string(),
                bin: b,
                factor_lo: FACTOR_MIN + width * b as f64,
                factor_hi: FACTOR_MIN + width * (b + 1) as f64,
                count: values.len(),
                mean: defined.then_some(s.mean),
                std: defined.then_some(s.std),
            });
        }
    }
    Ok(curves)
}

/// Scores processed signals against clean references. `clean` is either a
/// prepared dataset directory or a directory of clean records; processed
/// files must be named after the segment or record id.
pub fn cmd_evaluate(clean: &Path, processed: &Processed, out: &Path, cfg: &RunConfig, opts: EvalOptions) -> Result<EvalReport> {
    let refs = references(clean, opts.split, cfg.data.channel)?;
    if let Processed::Dir(dir) = processed {
        let missing: Vec<&str> = refs
            .iter()
            .filter(|r| !dir.join(format!("{}.csv", r.id)).exists() && !dir.join(format!("{}.hea", r.id)).exists())
            .map(|r| r.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "missing processed output for record {} in {}",
                missing.join(", "),
                dir.display()
            )));
        }
    }
    let rows = refs
        .par_iter()
        .map(|r| {
            let noisy = || {
                r.noisy
                    .clone()
                    .ok_or_else(|| Error::Config("baselines need a prepared dataset as reference".into()))
            };
            let y = match processed {
                Processed::Dir(dir) => {
                    let csv = dir.join(format!("{}.csv", r.id));
                    let path = if csv.exists() { csv } else { dir.join(format!("{}.hea", r.id)) };
                    let rec = load_record(&path)?;
                    rec.channels.into_iter().next().unwrap_or_default()
                }
                Processed::Noisy => noisy()?,
                Processed::Fir => fir_baseline(&noisy()?, r.fs)?,
                Processed::Iir => iir_baseline(&noisy()?, r.fs)?,
            };
            let m = compute_metrics(&r.clean, &y)
                .map_err(|e| Error::LengthMismatch(format!("record {}: {e}", r.id)))?;
            Ok(SegmentRow {
                segment_id: r.id.clone(),
                factor: r.factor,
                ssd: m.ssd,
                mad: m.mad,
                prd: m.prd,
                cossim: m.cossim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate(&rows.iter().map(SegmentRow::metrics).collect::<Vec<_>>());
    let curves = match opts.bins {
        Some(b) => factor_curves(&rows, b)?,
        None => Vec::new(),
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join(SEGMENTS_FILE), &rows)?;
    write_file(&out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    if opts.bins.is_some() {
        write_csv(&out.join(CURVES_FILE), &curves)?;
    }
    let mut ins: Vec<&Path> = vec![clean];
    if let Processed::Dir(d) = processed {
        ins.push(d);
    }
    RunManifest::new("evaluate", cfg, &ins)?.write(out)?;
    Ok(EvalReport { rows, summary, curves })
}

/// Mean metrics of one compression exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub ssd: f64,
    pub mad: f64,
    pub prd: f64,
    pub cossim: f64,
    pub is_default: bool,
}

/// The pairs used for scoring: the test split, else validation, else all.
fn eval_pairs(data: &Dataset) -> Vec<&crate::data::NoisyPair> {
    [Split::Test, Split::Val, Split::Train]
        .into_iter()
        .map(|s| data.split(s))
        .find(|p| !p.is_empty())
        .unwrap_or_default()
}

/// Trains one model per exponent in `c_list` and scores its best
/// checkpoint on the held-out pairs. Every exponent is checked before any
/// training starts.
pub fn cmd_sweep(dataset_dir: &Path, out: &Path, cfg: &RunConfig, c_list: &[f64]) -> Result<Vec<SweepRow>> {
    if c_list.is_empty() {
        return Err(Error::Config("empty list of compression exponents".into()));
    }
    for &c in c_list {
        check_exponent(c).map_err(|e| Error::Config(e.to_string()))?;
    }
    cfg.validate()?;
    let data = Dataset::load(dataset_dir)?;
    let held_out = eval_pairs(&data);
    let mut rows = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let mut run = cfg.clone();
        run.model.c = c;
        let model = Model::new(run.model.clone(), run.seed())?;
        let outcome = train(model, &run.train, &data, Some(&out.join(format!("c{c}"))), None)?;
        let ys = crate::train::denoise_pairs(&outcome.best, &held_out)?;
        let metrics = held_out
            .iter()
            .zip(&ys)
            .map(|(p, y)| compute_metrics(&p.clean.samples, y))
            .collect::<Result<Vec<_>>>()?;
        let s = aggregate(&metrics);
        rows.push(SweepRow {
            c,
            ssd: s.ssd.mean,
            mad: s.mad.mean,
            prd: s.prd.mean,
            cossim: s.cossim.mean,
            is_default: (c - DEFAULT_C).abs() < 1e-9,
        });
    }
    write_csv(&out.join(SWEEP_FILE), &rows)?;
    RunManifest::new("sweep-c", cfg, &[dataset_dir])?.write(out)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub reps: usize,
    /// Upper bound on the number of timed segments.
    pub max_segments: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { reps: 5, max_segments: 16 }
    }
}

/// Times each checkpoint's forward pass on held-out segments and scores
/// its output SSD. One row per checkpoint, named after its directory.
pub fn cmd_bench(checkpoints: &[PathBuf], dataset_dir: &Path, out: &Path, cfg: &RunConfig, opts: BenchOptions) -> Result<Vec<BenchRow>> {
    if checkpoints.is_empty() {
        return Err(Error::Config("bench needs at least one checkpoint".into()));
    }
    let data = Dataset::load(dataset_dir)?;
    let held_out = eval_pairs(&data);
    let mut rows = Vec::with_capacity(checkpoints.len());
    for ckpt in checkpoints {
        let model = Model::load(ckpt)?;
        let pairs: Vec<_> = held_out
            .iter()
            .filter(|p| p.noisy.len() == model.config.segment_len)
            .take(opts.max_segments)
            .copied()
            .collect();
        if pairs.is_empty() {
            return Err(Error::Data(format!(
                "no held-out segment has the {} samples {} expects",
                model.config.segment_len,
                ckpt.display()
            )));
        }
        let segments: Vec<Vec<f64>> = pairs.iter().map(|p| p.noisy.samples.clone()).collect();
        let timing = bench_inference(&model, &segments, opts.reps)?;
        let ys = crate::train::denoise_pairs(&model, &pairs)?;
        let ssd: Vec<f64> = pairs
            .iter()
            .zip(&ys)
            .map(|(p, y)| compute_metrics(&p.clean.samples, y).map(|m| m.ssd))
            .collect::<Result<_>>()?;
        rows.push(BenchRow {
            config_id: ckpt
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("checkpoint")
                .to_string(),
            window: model.config.stft.window_len,
            hop: model.config.stft.hop,
            mean_s: timing.mean_s,
            std_s: timing.std_s,
            ssd_mean: MeanStd::of(&ssd).mean,
            flops: timing.flops,
        });
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join(BENCH_FILE), &rows)?;
    let mut ins: Vec<&Path> = checkpoints.iter().map(PathBuf::as_path).collect();
    ins.push(dataset_dir);
    RunManifest::new("bench", cfg, &ins)?.write(out)?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
