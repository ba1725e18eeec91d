//! Fused, differentiable selective scan over a batch of sequences.

use ecg_autodiff::{Tensor, Var};

use crate::error::{Error, Result};
use crate::mamba::ssm::{phi, phi_prime};

struct Saved {
    bsz: usize,
    len: usize,
    d: usize,
    n: usize,
    u: Vec<f64>,
    delta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d_skip: Vec<f64>,
    /// States after every step, `[bsz, len, d, n]`.
    h: Vec<f64>,
}

/// Selective scan with in-place zero-order-hold discretization.
///
/// Shapes: `u, delta: [B, S, D]`, `a: [D, N]`, `b, c: [B, S, N]`,
/// `d_skip: [D]`. Returns `y: [B, S, D]`.
pub fn selective_scan_var<'t>(
    u: Var<'t>,
    delta: Var<'t>,
    a: Var<'t>,
    b: Var<'t>,
    c: Var<'t>,
    d_skip: Var<'t>,
) -> Result<Var<'t>> {
    let us = u.shape();
    let as_ = a.shape();
    if us.len() != 3 || as_.len() != 2 || as_[0] != us[2] {
        return Err(Error::LengthMismatch(format!("scan: u {us:?}, A {as_:?}")));
    }
    let (bsz, len, d, n) = (us[0], us[1], us[2], as_[1]);
    if delta.shape() != us
        || b.shape() != [bsz, len, n]
        || c.shape() != [bsz, len, n]
        || d_skip.shape() != [d]
    {
        return Err(Error::LengthMismatch(format!(
            "scan: delta {:?}, B {:?}, C {:?}, D {:?} for u {us:?}, A {as_:?}",
            delta.shape(),
            b.shape(),
            c.shape(),
            d_skip.shape()
        )));
    }
    let saved = Saved {
        bsz,
        len,
        d,
        n,
        u: u.value().data().to_vec(),
        delta: delta.value().data().to_vec(),
        a: a.value().data().to_vec(),
        b: b.value().data().to_vec(),
        c: c.value().data().to_vec(),
        d_skip: d_skip.value().data().to_vec(),
        h: vec![0.0; bsz * len * d * n],
    };
    let (y, saved) = forward(saved);
    let flops = (bsz * len * d * n * 8) as u64;
    let value = Tensor::new(&[bsz, len, d], y)?;
    Ok(u.tape()
        .push_op("selective_scan", &[u, delta, a, b, c, d_skip], value, flops, move |g, need| {
            backward(&saved, g.data(), need)
        }))
}

fn forward(mut s: Saved) -> (Vec<f64>, Saved) {
    let (len, d, n) = (s.len, s.d, s.n);
    let mut y = vec![0.0; s.bsz * len * d];
    for bi in 0..s.bsz {
        for ch in 0..d {
            for k in 0..n {
                let a = s.a[ch * n + k];
                let mut h = 0.0;
                for t in 0..len {
                    let row = bi * len + t;
                    let dt = s.delta[row * d + ch];
                    let z = dt * a;
                    let x = s.u[row * d + ch];
                    h = z.exp() * h + s.b[row * n + k] * dt * phi(z) * x;
                    s.h[(row * d + ch) * n + k] = h;
                    y[row * d + ch] += s.c[row * n + k] * h;
                }
            }
            for t in 0..len {
                let i = (bi * len + t) * d + ch;
                y[i] += s.d_skip[ch] * s.u[i];
            }
        }
    }
    (y, s)
}

fn backward(s: &Saved, gy: &[f64], need: &[bool]) -> Vec<Option<Tensor>> {
    let (bsz, len, d, n) = (s.bsz, s.len, s.d, s.n);
    let mut gu = vec![0.0; bsz * len * d];
    let mut gdelta = vec![0.0; bsz * len * d];
    let mut ga = vec![0.0; d * n];
    let mut gb = vec![0.0; bsz * len * n];
    let mut gc = vec![0.0; bsz * len * n];
    let mut gd = vec![0.0; d];
    for bi in 0..bsz {
        for ch in 0..d {
            for t in 0..len {
                let i = (bi * len + t) * d + ch;
                gu[i] += s.d_skip[ch] * gy[i];
                gd[ch] += gy[i] * s.u[i];
            }
            for k in 0..n {
                let a = s.a[ch * n + k];
                // gradient flowing into h[t] from later steps
                let mut gh_next = 0.0;
                let mut a_bar_next = 0.0;
                for t in (0..len).rev() {
                    let row = bi * len + t;
                    let i = row * d + ch;
                    let hi = i * n + k;
                    let h = s.h[hi];
                    gc[row * n + k] += gy[i] * h;
                    let gh = s.c[row * n + k] * gy[i] + a_bar_next * gh_next;
                    let dt = s.delta[i];
                    let z = dt * a;
                    let a_bar = z.exp();
                    let h_prev = if t > 0 { s.h[hi - d * n] } else { 0.0 };
                    let x = s.u[i];
                    let bv = s.b[row * n + k];
                    let g_abar = gh * h_prev;
                    let g_bbar = gh * x;
                    gu[i] += gh * bv * dt * phi(z);
                    gdelta[i] += g_abar * a * a_bar + g_bbar * bv * a_bar;
                    ga[ch * n + k] += g_abar * dt * a_bar + g_bbar * bv * dt * dt * phi_prime(z);
                    gb[row * n + k] += g_bbar * dt * phi(z);
                    gh_next = gh;
                    a_bar_next = a_bar;
                }
            }
        }
    }
    let wrap = |flag: bool, shape: &[usize], data: Vec<f64>| flag.then(|| Tensor::new(shape, data).expect("shape matches"));
    vec![
        wrap(need[0], &[bsz, len, d], gu),
        wrap(need[1], &[bsz, len, d], gdelta),
        wrap(need[2], &[d, n], ga),
        wrap(need[3], &[bsz, len, n], gb),
        wrap(need[4], &[bsz, len, n], gc),
        wrap(need[5], &[d], gd),
    ]
}
