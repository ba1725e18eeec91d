//! Layout primitives: reshape, permute, slice, concat, flip.

use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tape::Var;
use crate::tensor::{strides, Tensor};

/// Visits every multi-index of `shape` in row-major order, passing the
/// source offset computed from `src_strides` (signed) and `src_base`.
fn gather_offsets(shape: &[usize], src_strides: &[isize], src_base: isize) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let nd = shape.len();
    let mut idx = vec![0usize; nd];
    let mut off = src_base;
    for _ in 0..n {
        out.push(off as usize);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            off -= src_strides[ax] * shape[ax] as isize;
            idx[ax] = 0;
        }
    }
    out
}

impl<'t> Var<'t> {
    fn gather(self, name: &'static str, out_shape: Vec<usize>, src: Vec<usize>) -> Var<'t> {
        let x = self.value();
        let out = Tensor::from_fn(&out_shape, |i| x.data()[src[i]]);
        let in_shape = x.shape().to_vec();
        self.tape.push_op(name, &[self], out, 0, move |g, _| {
            let mut gx = Tensor::zeros(&in_shape);
            let d = gx.data_mut();
            for (i, &s) in src.iter().enumerate() {
                d[s] += g.data()[i];
            }
            vec![Some(gx)]
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let out = (*x).clone().reshaped(shape)?;
        Ok(self.tape.push_op("reshape", &[self], out, 0, move |g, _| {
            vec![Some(g.clone().reshaped(&in_shape).expect("same length"))]
        }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(AutodiffError::InvalidArgument(format!(
                "permute: {:?} is not a permutation of {} axes",
                axes,
                shape.len()
            )));
        }
        let st = strides(&shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let src_strides: Vec<isize> = axes.iter().map(|&a| st[a] as isize).collect();
        let src = gather_offsets(&out_shape, &src_strides, 0);
        Ok(self.gather("permute", out_shape, src))
    }

    /// Swaps two axes.
    pub fn transpose(self, a: usize, b: usize) -> Result<Var<'t>> {
        let nd = self.shape().len();
        if a >= nd || b >= nd {
            return Err(AutodiffError::InvalidArgument(format!(
                "transpose: axes ({a}, {b}) out of range for {nd} dims"
            )));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(AutodiffError::Shape(format!(
                "slice: [{start}, {}) out of range for axis {axis} of {:?}",
                start + len,
                shape
            )));
        }
        let st = strides(&shape);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let src_strides: Vec<isize> = st.iter().map(|&s| s as isize).collect();
        let src = gather_offsets(&out_shape, &src_strides, (start * st[axis]) as isize);
        Ok(self.gather("slice", out_shape, src))
    }

    /// Reverses the order of entries along `axis`.
    pub fn flip(self, axis: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidArgument(format!(
                "flip: axis {axis} out of range for {:?}",
                shape
            )));
        }
        let st = strides(&shape);
        let mut src_strides: Vec<isize> = st.iter().map(|&s| s as isize).collect();
        src_strides[axis] = -src_strides[axis];
        let base = (shape[axis].saturating_sub(1) * st[axis]) as isize;
        let src = gather_offsets(&shape, &src_strides, base);
        Ok(self.gather("flip", shape, src))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::InvalidArgument("concat of nothing".into()))?;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::InvalidArgument(format!(
                "concat: axis {axis} out of range for {:?}",
                base
            )));
        }
        for v in &values[1..] {
            let s = v.shape();
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(AutodiffError::Shape(format!(
                    "concat: {:?} incompatible with {:?} along axis {axis}",
                    s, base
                )));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let widths: Vec<usize> = values.iter().map(|v| v.shape()[axis] * inner).collect();
        let total_w: usize = widths.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total_w / inner.max(1);
        let mut out = Vec::with_capacity(outer * total_w);
        for o in 0..outer {
            for (v, &w) in values.iter().zip(&widths) {
                out.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(first.tape.push_op("concat", parts, out, 0, move |g, needs| {
            let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(shapes.len());
            let mut col = 0;
            for ((shape, &w), &need) in shapes.iter().zip(&widths).zip(needs) {
                if need {
                    let mut gv = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        let start = o * total_w + col;
                        gv.extend_from_slice(&g.data()[start..start + w]);
                    }
                    grads.push(Some(Tensor::new(shape, gv).expect("consistent")));
                } else {
                    grads.push(None);
                }
                col += w;
            }
            grads
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    fn iota(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| i as f64)
    }

    #[test]
    fn permute_matches_manual_transpose() {
        let tape = Tape::new();
        let x = tape.constant(iota(&[2, 3]));
        let y = x.transpose(0, 1).unwrap();
        assert_eq!(y.shape(), vec![3, 2]);
        assert_eq!(y.value().data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn slice_and_concat_inverse() {
        let tape = Tape::new();
        let x = tape.constant(iota(&[2, 5]));
        let a = x.slice(1, 0, 2).unwrap();
        let b = x.slice(1, 2, 3).unwrap();
        assert_eq!(a.value().data(), &[0.0, 1.0, 5.0, 6.0]);
        let y = crate::Var::concat(&[a, b], 1).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn flip_reverses_axis() {
        let tape = Tape::new();
        let x = tape.constant(iota(&[2, 3]));
        let y = x.flip(1).unwrap();
        assert_eq!(y.value().data(), &[2.0, 1.0, 0.0, 5.0, 4.0, 3.0]);
        let z = x.flip(0).unwrap();
        assert_eq!(z.value().data(), &[3.0, 4.0, 5.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn sum_of_flip_has_unit_gradient() {
        let tape = Tape::new();
        let x = tape.param(iota(&[4, 3]));
        let loss = x.flip(0).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bad_slice_is_rejected() {
        let tape = Tape::new();
        let x = tape.constant(iota(&[2, 3]));
        assert!(x.slice(1, 2, 2).is_err());
        assert!(x.permute(&[0, 0]).is_err());
    }
}
