//! Phase from pseudo-real and pseudo-imaginary maps.

use std::f64::consts::FRAC_PI_2;

use ecg_autodiff::{Tensor, Var};

use crate::error::{Error, Result};

/// `1` for `t >= 0`, else `-1`.
fn sgn_star(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `arctan(i / r) - (pi / 2) * sgn*(i) * (sgn*(r) - 1)`, evaluated term by
/// term. When `r == 0` the quotient is undefined and `atan2` is used.
pub fn phase_from_parts(r: f64, i: f64) -> f64 {
    if r == 0.0 {
        let p = i.atan2(r);
        return if p <= -std::f64::consts::PI { -p } else { p };
    }
    (i / r).atan() - FRAC_PI_2 * sgn_star(i) * (sgn_star(r) - 1.0)
}

/// Differentiable [`phase_from_parts`] on equal-shape maps. The gradient is
/// that of `atan2`, `(-i, r) / (r^2 + i^2)`, and zero at the origin.
pub fn phase_var<'t>(r: Var<'t>, i: Var<'t>) -> Result<Var<'t>> {
    if r.shape() != i.shape() {
        return Err(Error::LengthMismatch(format!("phase: {:?} vs {:?}", r.shape(), i.shape())));
    }
    let rv = r.value();
    let iv = i.value();
    let value = rv.zip_map(&iv, phase_from_parts);
    let (rs, is) = ((*rv).clone(), (*iv).clone());
    let n = rs.len() as u64;
    Ok(r.tape().push_op("phase", &[r, i], value, 10 * n, move |g, need| {
        let den = |a: f64, b: f64| {
            let d = a * a + b * b;
            if d == 0.0 {
                f64::INFINITY
            } else {
                d
            }
        };
        let gr = need[0].then(|| {
            let t = rs.zip_map(&is, |a, b| -b / den(a, b));
            t.zip_map(g, |x, y| x * y)
        });
        let gi = need[1].then(|| {
            let t: Tensor = rs.zip_map(&is, |a, b| a / den(a, b));
            t.zip_map(g, |x, y| x * y)
        });
        vec![gr, gi]
    }))
}
