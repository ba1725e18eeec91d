//! Run configuration as flat `key = value` text with `model.`, `train.` and
//! `data.` prefixes, plus the run manifest every command writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::dataset::{write_file, SplitRatios};
use crate::error::{Error, Result};
use crate::net::ModelConfig;
use crate::train::TrainConfig;

/// Data-preparation settings. The segment length is the model's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub stride: Option<usize>,
    pub channel: usize,
    pub ratios: SplitRatios,
    /// Sampling rate of synthetic corpora.
    pub synth_fs: f64,
    pub clean_dir: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            stride: None,
            channel: 0,
            ratios: SplitRatios::default(),
            synth_fs: 100.0,
            clean_dir: None,
            noise_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl RunConfig {
    /// Parses config text. Blank lines and lines starting with `#` are
    /// skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "model.mode" => m.mode = value.parse()?,
            "model.c" => m.c = parse(key, value)?,
            "model.n_blocks" => m.n_blocks = parse(key, value)?,
            "model.dim" => m.dim = parse(key, value)?,
            "model.dilations" => {
                m.dilations = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "model.window" => m.stft.window_len = parse(key, value)?,
            "model.hop" => m.stft.hop = parse(key, value)?,
            "model.d_state" => m.mamba.d_state = parse(key, value)?,
            "model.d_conv" => m.mamba.d_conv = parse(key, value)?,
            "model.expand" => m.mamba.expand = parse(key, value)?,
            "model.segment_len" => m.segment_len = parse(key, value)?,
            "model.freq_block" => m.freq_block = parse_bool(key, value)?,
            "model.flip" => m.flip = parse_bool(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.lr" => t.lr = parse(key, value)?,
            "train.weight_decay" => t.weight_decay = parse(key, value)?,
            "train.gamma" => t.gamma = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.loss_time" => t.loss.time = parse(key, value)?,
            "train.loss_complex" => t.loss.complex = parse(key, value)?,
            "train.loss_consistency" => t.loss.consistency = parse(key, value)?,
            "data.stride" => d.stride = Some(parse(key, value)?),
            "data.channel" => d.channel = parse(key, value)?,
            "data.train_ratio" => d.ratios.train = parse(key, value)?,
            "data.val_ratio" => d.ratios.val = parse(key, value)?,
            "data.synth_fs" => d.synth_fs = parse(key, value)?,
            "data.clean_dir" => d.clean_dir = Some(PathBuf::from(value)),
            "data.noise_dir" => d.noise_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Renders the configuration in the format [`RunConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let d = &self.data;
        let mut s = String::new();
        let dil: Vec<String> = m.dilations.iter().map(|v| v.to_string()).collect();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("model.mode", m.mode.to_string());
        kv("model.c", m.c.to_string());
        kv("model.n_blocks", m.n_blocks.to_string());
        kv("model.dim", m.dim.to_string());
        kv("model.dilations", dil.join(","));
        kv("model.window", m.stft.window_len.to_string());
        kv("model.hop", m.stft.hop.to_string());
        kv("model.d_state", m.mamba.d_state.to_string());
        kv("model.d_conv", m.mamba.d_conv.to_string());
        kv("model.expand", m.mamba.expand.to_string());
        kv("model.segment_len", m.segment_len.to_string());
        kv("model.freq_block", m.freq_block.to_string());
        kv("model.flip", m.flip.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.gamma", t.gamma.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.loss_time", t.loss.time.to_string());
        kv("train.loss_complex", t.loss.complex.to_string());
        kv("train.loss_consistency", t.loss.consistency.to_string());
        if let Some(v) = d.stride {
            kv("data.stride", v.to_string());
        }
        kv("data.channel", d.channel.to_string());
        kv("data.train_ratio", d.ratios.train.to_string());
        kv("data.val_ratio", d.ratios.val.to_string());
        kv("data.synth_fs", d.synth_fs.to_string());
        if let Some(p) = &d.clean_dir {
            kv("data.clean_dir", p.display().to_string());
        }
        if let Some(p) = &d.noise_dir {
            kv("data.noise_dir", p.display().to_string());
        }
        s
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Checks every section and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.ratios.validate()?;
        if !(self.data.synth_fs > 0.0 && self.data.synth_fs.is_finite()) {
            return Err(Error::Config(format!("data.synth_fs must be positive, got {}", self.data.synth_fs)));
        }
        if let Some(s) = self.data.stride {
            if s == 0 || s > self.model.segment_len {
                return Err(Error::Config(format!(
                    "data.stride {s} must lie in 1..={}",
                    self.model.segment_len
                )));
            }
        }
        for p in [&self.data.clean_dir, &self.data.noise_dir].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("path {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Content hash over all input files, see [`hash_inputs`].
    pub input_hash: String,
    pub inputs: Vec<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed(),
            input_hash: hash_inputs(inputs)?,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config: config.clone(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(RUN_MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Hashes each file as a git-style blob (`blob <len>\0<bytes>`), then hashes
/// the sorted `relative-path<TAB>blob-hash` lines of all files under the
/// given paths. Directories are walked recursively.
pub fn hash_inputs(paths: &[&Path]) -> Result<String> {
    let mut lines = Vec::new();
    for (k, root) in paths.iter().enumerate() {
        let mut files = Vec::new();
        collect_files(root, &mut files)?;
        for f in files {
            let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
            let mut h = Sha256::new();
            h.update(format!("blob {}\0", bytes.len()).as_bytes());
            h.update(&bytes);
            let rel = f.strip_prefix(root).unwrap_or(&f).display().to_string();
            lines.push(format!("{k}:{rel}\t{}\n", hex(&h.finalize())));
        }
    }
    lines.sort();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.file_name().and_then(|n| n.to_str()) == Some(RUN_MANIFEST_FILE) {
            continue;
        }
        collect_files(&p, out)?;
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
