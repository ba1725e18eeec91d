//! Central finite-difference checking of tape gradients.

use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative error measure used by the checker: `|a - n| / max(1, |a|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn eval<F>(f: &F, point: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::inference().with_finite_check(false);
    let vars: Vec<Var<'_>> = point.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars)?;
    Ok(out.item())
}

fn analytic<F>(f: &F, point: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new().with_finite_check(false);
    let vars: Vec<Var<'_>> = point.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars.iter().map(|v| grads.get_or_zeros(*v)).collect())
}

fn validate_h(h: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(AutodiffError::InvalidArgument(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    Ok(())
}

/// Identity that fixes a closure's signature to the higher-ranked form the
/// checkers expect, so closures can be built before being passed in.
pub fn scalar_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    f
}

/// Compares reverse-mode gradients of a scalar-valued `f` against central
/// differences at every coordinate of every input; returns the largest
/// [`rel_err`].
pub fn finite_diff_check<F>(f: F, point: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let coords: Vec<(usize, usize)> = point
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    finite_diff_check_at(f, point, h, &coords)
}

/// As [`finite_diff_check`], restricted to `(input, element)` coordinates.
pub fn finite_diff_check_at<F>(f: F, point: &[Tensor], h: f64, coords: &[(usize, usize)]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    validate_h(h)?;
    let grads = analytic(&f, point)?;
    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = point.to_vec();
    for &(i, j) in coords {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + h;
        let up = eval(&f, &work)?;
        work[i].data_mut()[j] = orig - h;
        let down = eval(&f, &work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(grads[i].data()[j], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_fn(&[5], |i| i as f64 - 2.0);
        let err = finite_diff_check(|_, v| Ok(v[0].scale(3.0).sum()), &[x], 1e-5).unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        let x = Tensor::ones(&[2]);
        assert!(finite_diff_check(|_, v| Ok(v[0].sum()), &[x.clone()], 1e-2).is_err());
        assert!(finite_diff_check(|_, v| Ok(v[0].sum()), &[x], 1e-9).is_err());
    }

    #[test]
    fn square_at_three_has_slope_six() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![3.0]));
        let y = x.mul(x).unwrap().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[3]));
        assert!(tape.backward(x.scale(2.0)).is_err());
    }
}
