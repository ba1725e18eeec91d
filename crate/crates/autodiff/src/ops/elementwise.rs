//! Elementwise and broadcast primitives.

use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tape::Var;
use crate::tensor::{same_shape, strides, Tensor};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'t> Var<'t> {
    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(
        self,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let out = (*y).clone();
        let n = x.len() as u64;
        let yb = Rc::clone(&y);
        self.tape.push_op(name, &[self], out, n, move |g, _| {
            let gx = Tensor::from_fn(g.shape(), |i| g.data()[i] * df(x.data()[i], yb.data()[i]));
            vec![Some(gx)]
        })
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.unary("scale", move |v| v * k, move |_, _| k)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.unary("add_scalar", move |v| v + k, |_, _| 1.0)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn log(self) -> Var<'t> {
        self.unary("log", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(self) -> Var<'t> {
        self.unary(
            "silu",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    /// `x^c` for nonnegative inputs. Where the derivative is infinite
    /// (`x == 0`, `c < 1`) it is taken as zero.
    pub fn power(self, c: f64) -> Var<'t> {
        self.unary(
            "power",
            move |x| x.powf(c),
            move |x, _| {
                let d = c * x.powf(c - 1.0);
                if d.is_finite() {
                    d
                } else {
                    0.0
                }
            },
        )
    }

    pub fn sqr(self) -> Var<'t> {
        self.unary("sqr", |x| x * x, |x, _| 2.0 * x)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sin(self) -> Var<'t> {
        self.unary("sin", f64::sin, |x, _| x.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary("cos", f64::cos, |x, _| -x.sin())
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64) -> f64 + 'static,
        db: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        same_shape(&a, &b, name)?;
        let out = a.zip_map(&b, f);
        let n = a.len() as u64;
        Ok(self.tape.push_op(name, &[self, other], out, n, move |g, needs| {
            let ga = needs[0].then(|| {
                Tensor::from_fn(g.shape(), |i| g.data()[i] * da(a.data()[i], b.data()[i]))
            });
            let gb = needs[1].then(|| {
                Tensor::from_fn(g.shape(), |i| g.data()[i] * db(a.data()[i], b.data()[i]))
            });
            vec![ga, gb]
        }))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    /// Adds a 1-D `bias` broadcast along `axis` of `self`.
    pub fn add_bias(self, bias: Var<'t>, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let b = bias.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || b.shape() != [shape[axis]] {
            return Err(AutodiffError::Shape(format!(
                "add_bias: bias {:?} does not match axis {axis} of {:?}",
                b.shape(),
                shape
            )));
        }
        let inner = strides(&shape)[axis];
        let c = shape[axis];
        let mut out = (*x).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[(i / inner) % c];
        }
        let n = x.len() as u64;
        Ok(self.tape.push_op("add_bias", &[self, bias], out, n, move |g, needs| {
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; c];
                for (i, v) in g.data().iter().enumerate() {
                    gb[(i / inner) % c] += v;
                }
                Tensor::from_vec(gb)
            });
            vec![needs[0].then(|| g.clone()), gb]
        }))
    }

    /// Parametric rectifier with one slope per index of `axis` (or a single
    /// shared slope when `slope` has length 1).
    pub fn prelu(self, slope: Var<'t>, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let a = slope.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || a.ndim() != 1 || (a.len() != 1 && a.len() != shape[axis]) {
            return Err(AutodiffError::Shape(format!(
                "prelu: slope {:?} does not match axis {axis} of {:?}",
                a.shape(),
                shape
            )));
        }
        let inner = strides(&shape)[axis];
        let c = shape[axis];
        let shared = a.len() == 1;
        let idx = move |i: usize| if shared { 0 } else { (i / inner) % c };
        let out = Tensor::from_fn(&shape, |i| {
            let v = x.data()[i];
            if v >= 0.0 {
                v
            } else {
                a.data()[idx(i)] * v
            }
        });
        let n = x.len() as u64;
        Ok(self.tape.push_op("prelu", &[self, slope], out, n, move |g, needs| {
            let gx = needs[0].then(|| {
                Tensor::from_fn(g.shape(), |i| {
                    if x.data()[i] >= 0.0 {
                        g.data()[i]
                    } else {
                        a.data()[idx(i)] * g.data()[i]
                    }
                })
            });
            let ga = needs[1].then(|| {
                let mut ga = vec![0.0; a.len()];
                for (i, (&gv, &xv)) in g.data().iter().zip(x.data()).enumerate() {
                    if xv < 0.0 {
                        ga[idx(i)] += gv * xv;
                    }
                }
                Tensor::from_vec(ga)
            });
            vec![gx, ga]
        }))
    }
}
