//! Zero-order-hold discretization and the selective-scan recurrence on plain
//! arrays. The differentiable network path uses the fused op in
//! `scan_op`, which evaluates the same formulas.

use crate::error::{Error, Result};

/// Below this `|z|` the first-order series of `expm1(z) / z` is used.
pub const ZOH_SERIES_THRESHOLD: f64 = 1e-6;

/// `(e^z - 1) / z`, continuous at `z = 0`.
pub fn phi(z: f64) -> f64 {
    if z.abs() < ZOH_SERIES_THRESHOLD {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Derivative of [`phi`]: `(z e^z - (e^z - 1)) / z^2`.
pub fn phi_prime(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

/// Array sizes of one scan: `t` steps, `d` channels, `n` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanDims {
    pub t: usize,
    pub d: usize,
    pub n: usize,
}

/// Discretized transition and input matrices, each `t x d x n` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// `A_bar = exp(delta A)`, `B_bar = (delta A)^-1 (exp(delta A) - 1) delta B`,
/// elementwise. `a` is `d x n`, `b` is `t x n`, `delta` is `t x d`.
pub fn zoh_discretize(a: &[f64], b: &[f64], delta: &[f64], dims: ScanDims) -> Result<Discretized> {
    let ScanDims { t, d, n } = dims;
    if a.len() != d * n || b.len() != t * n || delta.len() != t * d {
        return Err(Error::LengthMismatch(format!(
            "zoh: A {} B {} delta {} for dims {dims:?}",
            a.len(),
            b.len(),
            delta.len()
        )));
    }
    if let Some(bad) = delta.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::OutOfRange(format!("step size {bad} must be positive")));
    }
    let mut a_bar = Vec::with_capacity(t * d * n);
    let mut b_bar = Vec::with_capacity(t * d * n);
    for s in 0..t {
        for c in 0..d {
            let dt = delta[s * d + c];
            for k in 0..n {
                let z = dt * a[c * n + k];
                a_bar.push(z.exp());
                b_bar.push(b[s * n + k] * dt * phi(z));
            }
        }
    }
    Ok(Discretized { a_bar, b_bar })
}

/// `h[t] = A_bar[t] * h[t-1] + B_bar[t] u[t]`, `y[t] = C[t] . h[t] + D u[t]`
/// with `h[-1] = 0`. `u` is `t x d`, `c` is `t x n`, `d_skip` has `d` entries.
pub fn selective_scan(u: &[f64], disc: &Discretized, c: &[f64], d_skip: &[f64], dims: ScanDims) -> Result<Vec<f64>> {
    let ScanDims { t, d, n } = dims;
    if u.len() != t * d || c.len() != t * n || d_skip.len() != d || disc.a_bar.len() != t * d * n
        || disc.b_bar.len() != t * d * n
    {
        return Err(Error::LengthMismatch(format!("selective scan inputs do not match {dims:?}")));
    }
    let mut y = vec![0.0; t * d];
    let mut h = vec![0.0; d * n];
    for s in 0..t {
        for ch in 0..d {
            let x = u[s * d + ch];
            let mut acc = 0.0;
            for k in 0..n {
                let i = (s * d + ch) * n + k;
                let hk = &mut h[ch * n + k];
                *hk = disc.a_bar[i] * *hk + disc.b_bar[i] * x;
                acc += c[s * n + k] * *hk;
            }
            y[s * d + ch] = acc + d_skip[ch] * x;
        }
    }
    Ok(y)
}
