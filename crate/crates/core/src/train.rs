//! Mini-batch training with AdamW and an exponential learning-rate decay.
//!
//! Each sample of a batch is run on its own tape (in parallel); the
//! per-sample gradients are averaged in sample order, so results do not
//! depend on the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ecg_autodiff::{adamw_step, AdamWConfig, AutodiffError, ExponentialLr, OptimState, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{write_file, Dataset, Split};
use crate::data::NoisyPair;
use crate::error::{Error, Result};
use crate::metrics::compute_metrics;
use crate::net::{forward, loss_all, ForwardOptions, LossWeights, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Per-epoch learning-rate factor.
    pub gamma: f64,
    pub seed: u64,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 96,
            lr: 1e-4,
            weight_decay: 1e-2,
            gamma: 0.99,
            seed: 0,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive and weight decay {} nonnegative",
                self.lr, self.weight_decay
            )));
        }
        ExponentialLr::new(self.gamma).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_ssd: f64,
}

/// Where a run stands after its last completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub step: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub last: Model,
    pub best: Model,
    pub state: TrainState,
}

pub const LAST_DIR: &str = "last";
pub const BEST_DIR: &str = "best";
pub const LOG_FILE: &str = "train_log.csv";
const STATE_FILE: &str = "train_state.json";
const OPTIM_STEM: &str = "optim";

/// Loss and parameter gradients of one pair.
fn sample_gradients(model: &Model, pair: &NoisyPair, w: LossWeights) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let p = model.params.bind(&tape);
    let out = forward(&pair.noisy.samples, &p, &tape, &model.config, ForwardOptions::default())?;
    let loss = loss_all(&tape, &out, &pair.clean.samples, &model.config, w)?.total;
    let value = loss.item();
    if !value.is_finite() {
        return Ok((value, BTreeMap::new()));
    }
    let grads = tape.backward(loss)?;
    Ok((value, p.gradients(&grads)))
}

/// Loss of one pair without recording gradients.
pub fn sample_loss(model: &Model, pair: &NoisyPair, w: LossWeights) -> Result<f64> {
    let tape = Tape::inference();
    let p = model.params.bind(&tape);
    let out = forward(&pair.noisy.samples, &p, &tape, &model.config, ForwardOptions::default())?;
    Ok(loss_all(&tape, &out, &pair.clean.samples, &model.config, w)?.total.item())
}

/// Denoises every pair's noisy segment, in order.
pub fn denoise_pairs(model: &Model, pairs: &[&NoisyPair]) -> Result<Vec<Vec<f64>>> {
    pairs
        .par_iter()
        .map(|p| model.denoise(&p.noisy.samples).map(|o| o.signal))
        .collect()
}

/// Mean loss and mean SSD of the denoised output over `pairs`.
pub fn validate(model: &Model, pairs: &[&NoisyPair], w: LossWeights) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let loss = sample_loss(model, p, w)?;
            let y = model.denoise(&p.noisy.samples)?.signal;
            Ok((loss, compute_metrics(&p.clean.samples, &y)?.ssd))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    Ok((
        rows.iter().map(|r| r.0).sum::<f64>() / n,
        rows.iter().map(|r| r.1).sum::<f64>() / n,
    ))
}

fn batch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Trains `model` on the train split of `data`, validating on the val split
/// (or on the training pairs when the val split is empty). With `out_dir`
/// the log, the best-by-validation-loss model and a resumable last state
/// are written there after every epoch. `resume` continues from such a
/// state; epochs are then numbered after the last completed one.
pub fn train(
    mut model: Model,
    cfg: &TrainConfig,
    data: &Dataset,
    out_dir: Option<&Path>,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = data.split(Split::Train);
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if let Some(p) = train_set.iter().find(|p| p.noisy.len() != model.config.segment_len) {
        return Err(Error::Config(format!(
            "segment {} has {} samples, model expects {}",
            p.clean.source.record,
            p.noisy.len(),
            model.config.segment_len
        )));
    }
    let mut val_set = data.split(Split::Val);
    if val_set.is_empty() {
        val_set = train_set.clone();
    }
    let sched = ExponentialLr::new(cfg.gamma)?;
    let adam = AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };

    let (mut optim, mut state, mut log, mut best) = match resume {
        Some(dir) => {
            let last = dir.join(LAST_DIR);
            model = Model::load(&last)?;
            let state: TrainState = read_json(&last.join(STATE_FILE))?;
            let moments = ParamStore::load(&last.join(OPTIM_STEM))?;
            let optim = OptimState::from_store(AdamWConfig { lr: state.lr, ..adam }, state.step, &moments);
            let log = read_log(&dir.join(LOG_FILE))?;
            let best = Model::load(&dir.join(BEST_DIR))?;
            (optim, state, log, best)
        }
        None => (
            OptimState::new(adam),
            TrainState {
                epoch: 0,
                lr: cfg.lr,
                step: 0,
                best_epoch: 0,
                best_val_loss: f64::INFINITY,
            },
            Vec::new(),
            model.clone(),
        ),
    };

    let first = state.epoch + 1;
    for epoch in first..first + cfg.epochs {
        optim.config.lr = state.lr;
        let order = batch_order(cfg.seed, epoch, train_set.len());
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, BTreeMap<String, Tensor>)> = chunk
                .par_iter()
                .map(|&i| sample_gradients(&model, train_set[i], cfg.loss))
                .collect::<Result<_>>()?;
            let ids = || {
                chunk
                    .iter()
                    .map(|&i| crate::data::dataset::segment_id(&train_set[i].clean.source))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            if let Some(k) = results.iter().position(|r| !r.0.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss {} in epoch {epoch}, batch {b} (segment {}); batch holds {}",
                    results[k].0,
                    crate::data::dataset::segment_id(&train_set[chunk[k]].clean.source),
                    ids()
                )));
            }
            let scale = 1.0 / results.len() as f64;
            let mut mean: BTreeMap<String, Tensor> = BTreeMap::new();
            for (loss, grads) in &results {
                loss_sum += loss;
                for (name, g) in grads {
                    match mean.get_mut(name) {
                        Some(acc) => acc.add_assign(g),
                        None => {
                            mean.insert(name.clone(), g.clone());
                        }
                    }
                }
            }
            mean.values_mut().for_each(|g| g.scale_in_place(scale));
            adamw_step(&mut model.params, &mean, &mut optim).map_err(|e| match e {
                AutodiffError::NonFinite(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}; batch holds {}", ids())),
                other => other.into(),
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_ssd) = validate(&model, &val_set, cfg.loss)?;
        log.push(EpochLog {
            epoch,
            lr: state.lr,
            train_loss,
            val_loss,
            val_ssd,
        });
        if val_loss < state.best_val_loss {
            state.best_val_loss = val_loss;
            state.best_epoch = epoch;
            best = model.clone();
        }
        state.epoch = epoch;
        state.step = optim.step;
        state.lr = sched.step(state.lr);
        if let Some(dir) = out_dir {
            save_run(dir, &model, &best, &optim, &state, &log)?;
        }
    }
    Ok(TrainOutcome {
        log,
        last: model,
        best,
        state,
    })
}

fn save_run(dir: &Path, last: &Model, best: &Model, optim: &OptimState, state: &TrainState, log: &[EpochLog]) -> Result<()> {
    let last_dir = dir.join(LAST_DIR);
    last.save(&last_dir)?;
    optim.to_store().save(&last_dir.join(OPTIM_STEM))?;
    write_file(&last_dir.join(STATE_FILE), serde_json::to_string_pretty(state)?.as_bytes())?;
    best.save(&dir.join(BEST_DIR))?;
    write_log(&dir.join(LOG_FILE), log)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_order_is_a_seeded_permutation() {
        let a = batch_order(1, 3, 50);
        assert_eq!(a, batch_order(1, 3, 50));
        assert_ne!(a, batch_order(1, 4, 50));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
    }
}
