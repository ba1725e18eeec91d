//! AdamW with decoupled weight decay, and an exponential learning-rate schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Moment estimates keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl OptimState {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Moments flattened into one store (`m.<name>`, `v.<name>`) for checkpointing.
    pub fn to_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        for (k, t) in &self.m {
            s.insert(format!("m.{k}"), t.clone());
        }
        for (k, t) in &self.v {
            s.insert(format!("v.{k}"), t.clone());
        }
        s
    }

    pub fn from_store(config: AdamWConfig, step: u64, store: &ParamStore) -> Self {
        let mut st = Self::new(config);
        st.step = step;
        for (k, t) in store.iter() {
            if let Some(name) = k.strip_prefix("m.") {
                st.m.insert(name.to_string(), t.clone());
            } else if let Some(name) = k.strip_prefix("v.") {
                st.v.insert(name.to_string(), t.clone());
            }
        }
        st
    }
}

/// One AdamW update. Every gradient is validated before any parameter is
/// touched, so a rejected step leaves `params` and `state` unchanged.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimState,
) -> Result<()> {
    let cfg = state.config;
    if !(cfg.lr > 0.0) {
        return Err(AutodiffError::InvalidArgument(format!("learning rate {} must be positive", cfg.lr)));
    }
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| AutodiffError::InvalidArgument(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(AutodiffError::Shape(format!(
                "gradient {name} has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite(format!(
                "gradient of {name} at index {i} is {}",
                g.data()[i]
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("validated above");
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        for i in 0..g.len() {
            let gi = g.data()[i];
            let pm = &mut p.data_mut()[i];
            *pm *= decay;
            let mi = &mut m.data_mut()[i];
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            let vi = &mut v.data_mut()[i];
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = m.data()[i] / bc1;
            let vhat = v.data()[i] / bc2;
            *pm -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `gamma` once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialLr {
    gamma: f64,
}

impl ExponentialLr {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AutodiffError::InvalidArgument(format!(
                "scheduler gamma {gamma} outside (0, 1]"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step(&self, lr: f64) -> f64 {
        lr * self.gamma
    }
}

/// `lr * gamma`, validating `gamma`.
pub fn exp_lr_step(lr: f64, gamma: f64) -> Result<f64> {
    Ok(ExponentialLr::new(gamma)?.step(lr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::from_vec(vec![v]));
        p
    }

    fn grad(v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::from_vec(vec![v]))])
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = single(0.7);
        let mut st = OptimState::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        adamw_step(&mut p, &grad(0.0), &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn zero_gradient_applies_decoupled_decay_only() {
        let mut p = single(2.0);
        let mut st = OptimState::new(AdamWConfig {
            lr: 1e-4,
            weight_decay: 1e-2,
            ..Default::default()
        });
        adamw_step(&mut p, &grad(0.0), &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 2.0 * (1.0 - 1e-6));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 after bias correction, so the step is lr / (1 + eps).
        let mut p = single(0.0);
        let mut st = OptimState::new(AdamWConfig {
            lr: 1e-4,
            weight_decay: 0.0,
            ..Default::default()
        });
        adamw_step(&mut p, &grad(1.0), &mut st).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().item() - expected).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = single(1.0);
        let mut st = OptimState::new(AdamWConfig::default());
        let err = adamw_step(&mut p, &grad(f64::NAN), &mut st).unwrap_err();
        assert!(err.to_string().contains("w"));
        assert_eq!(p.get("w").unwrap().item(), 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn exponential_schedule() {
        assert!((exp_lr_step(1e-4, 0.99).unwrap() / 9.9e-5 - 1.0).abs() < 1e-14);
        assert_eq!(exp_lr_step(1e-4, 1.0).unwrap(), 1e-4);
        let s = ExponentialLr::new(0.99).unwrap();
        let lr = (0..40).fold(1e-4, |lr, _| s.step(lr));
        // 0.99^40 = 0.668971...
        assert!((lr / 1e-4 - 0.99f64.powi(40)).abs() < 1e-12);
        assert!((lr / 1e-4 - 0.669).abs() < 1e-3);
        assert!(ExponentialLr::new(0.0).is_err());
        assert!(ExponentialLr::new(1.5).is_err());
    }
}
