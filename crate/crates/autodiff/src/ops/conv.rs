//! Convolutions over single (unbatched) channel-first feature maps.

use crate::error::{AutodiffError, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Stride, dilation and symmetric zero padding per spatial axis `(h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
}

impl Default for Conv2dGeom {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            dilation: (1, 1),
            padding: (0, 0),
        }
    }
}

impl Conv2dGeom {
    fn validate(&self) -> Result<()> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(AutodiffError::InvalidArgument("conv stride must be >= 1".into()));
        }
        if self.dilation.0 == 0 || self.dilation.1 == 0 {
            return Err(AutodiffError::InvalidArgument("conv dilation must be >= 1".into()));
        }
        Ok(())
    }

    /// Output extent of a forward convolution along one axis, if positive.
    pub fn out_len(input: usize, kernel: usize, stride: usize, dilation: usize, pad: usize) -> Option<usize> {
        let span = dilation * (kernel - 1) + 1;
        (input + 2 * pad).checked_sub(span).map(|r| r / stride + 1)
    }
}

/// Index bookkeeping shared by the forward and adjoint kernels. Output map is
/// `[co, oh, ow]`, input map `[ci, ih, iw]`, weight `[co, ci, kh, kw]`.
struct Plan {
    cout: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    geom: Conv2dGeom,
}

impl Plan {
    /// Calls `f(weight_idx, out_offset, in_offset, count)`; the covered pairs
    /// are `out[out_offset + j]` and `in[in_offset + j * stride_w]`.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (sh, sw) = self.geom.stride;
        let (dh, dw) = self.geom.dilation;
        let (ph, pw) = self.geom.padding;
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for ki in 0..self.kh {
                    for kj in 0..self.kw {
                        let widx = ((co * self.cin + ci) * self.kh + ki) * self.kw + kj;
                        // iw = ow*sw + kj*dw - pw must lie in [0, w)
                        let shift = kj * dw;
                        let ow_lo = if pw > shift { (pw - shift).div_ceil(sw) } else { 0 };
                        let ow_hi = if self.w + pw > shift {
                            ((self.w + pw - shift - 1) / sw + 1).min(self.ow)
                        } else {
                            0
                        };
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        let count = ow_hi - ow_lo;
                        for oy in 0..self.oh {
                            let iy = (oy * sh + ki * dh) as isize - ph as isize;
                            if iy < 0 || iy as usize >= self.h {
                                continue;
                            }
                            let out_off = (co * self.oh + oy) * self.ow + ow_lo;
                            let ix0 = ow_lo * sw + shift - pw;
                            let in_off = (ci * self.h + iy as usize) * self.w + ix0;
                            f(widx, out_off, in_off, count);
                        }
                    }
                }
            }
        }
    }

    fn macs(&self) -> u64 {
        (self.cout * self.cin * self.kh * self.kw * self.oh * self.ow) as u64
    }

    fn forward(&self, x: &[f64], wt: &[f64]) -> Vec<f64> {
        let sw = self.geom.stride.1;
        let mut y = vec![0.0; self.cout * self.oh * self.ow];
        self.for_each_run(|wi, oo, io, n| {
            let wv = wt[wi];
            if sw == 1 {
                for (o, &i) in y[oo..oo + n].iter_mut().zip(&x[io..io + n]) {
                    *o += wv * i;
                }
            } else {
                for j in 0..n {
                    y[oo + j] += wv * x[io + j * sw];
                }
            }
        });
        y
    }

    fn input_grad(&self, gy: &[f64], wt: &[f64]) -> Vec<f64> {
        let sw = self.geom.stride.1;
        let mut gx = vec![0.0; self.cin * self.h * self.w];
        self.for_each_run(|wi, oo, io, n| {
            let wv = wt[wi];
            if sw == 1 {
                for (i, &o) in gx[io..io + n].iter_mut().zip(&gy[oo..oo + n]) {
                    *i += wv * o;
                }
            } else {
                for j in 0..n {
                    gx[io + j * sw] += wv * gy[oo + j];
                }
            }
        });
        gx
    }

    fn weight_grad(&self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        let sw = self.geom.stride.1;
        let mut gw = vec![0.0; self.cout * self.cin * self.kh * self.kw];
        self.for_each_run(|wi, oo, io, n| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += gy[oo + j] * x[io + j * sw];
            }
            gw[wi] += acc;
        });
        gw
    }
}

fn channel_sums(g: &[f64], c: usize) -> Vec<f64> {
    let per = g.len() / c.max(1);
    (0..c).map(|i| g[i * per..(i + 1) * per].iter().sum()).collect()
}

fn add_channel_bias(y: &mut [f64], b: &[f64]) {
    let per = y.len() / b.len().max(1);
    for (c, chunk) in y.chunks_mut(per).enumerate() {
        for v in chunk {
            *v += b[c];
        }
    }
}

impl<'t> Var<'t> {
    /// 2-D convolution. `self: [cin, h, w]`, `weight: [cout, cin, kh, kw]`,
    /// `bias: [cout]`.
    pub fn conv2d(self, weight: Var<'t>, bias: Option<Var<'t>>, geom: Conv2dGeom) -> Result<Var<'t>> {
        geom.validate()?;
        let x = self.value();
        let wt = weight.value();
        let (xs, ws) = (x.shape(), wt.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] {
            return Err(AutodiffError::Shape(format!("conv2d: input {:?} weight {:?}", xs, ws)));
        }
        let oh = Conv2dGeom::out_len(xs[1], ws[2], geom.stride.0, geom.dilation.0, geom.padding.0);
        let ow = Conv2dGeom::out_len(xs[2], ws[3], geom.stride.1, geom.dilation.1, geom.padding.1);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(AutodiffError::Shape(format!(
                "conv2d: kernel {:?} larger than padded input {:?}",
                ws, xs
            )));
        };
        let plan = Plan {
            cout: ws[0],
            cin: xs[0],
            kh: ws[2],
            kw: ws[3],
            h: xs[1],
            w: xs[2],
            oh,
            ow,
            geom,
        };
        let mut y = plan.forward(x.data(), wt.data());
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            let bv = b.value();
            if bv.shape() != [plan.cout] {
                return Err(AutodiffError::Shape(format!("conv2d: bias {:?}", bv.shape())));
            }
            add_channel_bias(&mut y, bv.data());
            parents.push(b);
        }
        let out = Tensor::new(&[plan.cout, oh, ow], y)?;
        let flops = 2 * plan.macs();
        let (xs, ws) = (xs.to_vec(), ws.to_vec());
        Ok(self.tape.push_op("conv2d", &parents, out, flops, move |g, needs| {
            let mut grads = vec![
                needs[0].then(|| Tensor::new(&xs, plan.input_grad(g.data(), wt.data())).unwrap()),
                needs[1].then(|| Tensor::new(&ws, plan.weight_grad(x.data(), g.data())).unwrap()),
            ];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| Tensor::from_vec(channel_sums(g.data(), plan.cout))));
            }
            grads
        }))
    }

    /// Transposed 2-D convolution (the adjoint of [`Var::conv2d`]).
    /// `self: [cin, h, w]`, `weight: [cin, cout, kh, kw]`, `bias: [cout]`.
    /// Output extent per axis is `(n - 1) * stride - 2 * pad + dil * (k - 1) + out_pad + 1`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'t>,
        bias: Option<Var<'t>>,
        geom: Conv2dGeom,
        output_padding: (usize, usize),
    ) -> Result<Var<'t>> {
        geom.validate()?;
        let x = self.value();
        let wt = weight.value();
        let (xs, ws) = (x.shape(), wt.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[0] != xs[0] {
            return Err(AutodiffError::Shape(format!(
                "conv_transpose2d: input {:?} weight {:?}",
                xs, ws
            )));
        }
        let extent = |n: usize, k: usize, s: usize, d: usize, p: usize, op: usize| -> Option<usize> {
            ((n - 1) * s + d * (k - 1) + op + 1).checked_sub(2 * p)
        };
        let h = extent(xs[1], ws[2], geom.stride.0, geom.dilation.0, geom.padding.0, output_padding.0);
        let w = extent(xs[2], ws[3], geom.stride.1, geom.dilation.1, geom.padding.1, output_padding.1);
        let (Some(h), Some(w)) = (h, w) else {
            return Err(AutodiffError::Shape("conv_transpose2d: negative output extent".into()));
        };
        if output_padding.0 >= geom.stride.0.max(geom.dilation.0)
            || output_padding.1 >= geom.stride.1.max(geom.dilation.1)
        {
            return Err(AutodiffError::InvalidArgument(
                "conv_transpose2d: output padding must be smaller than stride or dilation".into(),
            ));
        }
        // As a forward conv, this maps [cout_t, h, w] -> [cin_t, xs1, xs2].
        let plan = Plan {
            cout: ws[0],
            cin: ws[1],
            kh: ws[2],
            kw: ws[3],
            h,
            w,
            oh: xs[1],
            ow: xs[2],
            geom,
        };
        let mut y = plan.input_grad(x.data(), wt.data());
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            let bv = b.value();
            if bv.shape() != [plan.cin] {
                return Err(AutodiffError::Shape(format!(
                    "conv_transpose2d: bias {:?}",
                    bv.shape()
                )));
            }
            add_channel_bias(&mut y, bv.data());
            parents.push(b);
        }
        let out = Tensor::new(&[plan.cin, h, w], y)?;
        let flops = 2 * plan.macs();
        let (xs, ws) = (xs.to_vec(), ws.to_vec());
        Ok(self.tape.push_op("conv_transpose2d", &parents, out, flops, move |g, needs| {
            let mut grads = vec![
                needs[0].then(|| Tensor::new(&xs, plan.forward(g.data(), wt.data())).unwrap()),
                needs[1].then(|| Tensor::new(&ws, plan.weight_grad(g.data(), x.data())).unwrap()),
            ];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| Tensor::from_vec(channel_sums(g.data(), plan.cin))));
            }
            grads
        }))
    }

    /// Causal depthwise convolution along the sequence axis.
    /// `self: [batch, seq, ch]`, `weight: [ch, k]`, `bias: [ch]`; output
    /// position `s` sees inputs `s - k + 1 ..= s` (zeros before the start).
    pub fn conv1d_depthwise(self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        let x = self.value();
        let wt = weight.value();
        let (xs, ws) = (x.shape(), wt.shape());
        if xs.len() != 3 || ws.len() != 2 || ws[0] != xs[2] || ws[1] == 0 {
            return Err(AutodiffError::Shape(format!(
                "conv1d_depthwise: input {:?} weight {:?}",
                xs, ws
            )));
        }
        let (nb, ns, nc, k) = (xs[0], xs[1], xs[2], ws[1]);
        let mut y = vec![0.0; nb * ns * nc];
        for b in 0..nb {
            for s in 0..ns {
                let orow = &mut y[(b * ns + s) * nc..(b * ns + s + 1) * nc];
                for j in 0..k {
                    let src = s as isize + j as isize - (k as isize - 1);
                    if src < 0 {
                        continue;
                    }
                    let irow = &x.data()[(b * ns + src as usize) * nc..(b * ns + src as usize + 1) * nc];
                    for c in 0..nc {
                        orow[c] += wt.data()[c * k + j] * irow[c];
                    }
                }
            }
        }
        let mut parents = vec![self, weight];
        if let Some(bias) = bias {
            let bv = bias.value();
            if bv.shape() != [nc] {
                return Err(AutodiffError::Shape(format!(
                    "conv1d_depthwise: bias {:?}",
                    bv.shape()
                )));
            }
            for row in y.chunks_mut(nc) {
                for (v, bb) in row.iter_mut().zip(bv.data()) {
                    *v += bb;
                }
            }
            parents.push(bias);
        }
        let out = Tensor::new(xs, y)?;
        let flops = 2 * (nb * ns * nc * k) as u64;
        let (xs, ws) = (xs.to_vec(), ws.to_vec());
        Ok(self.tape.push_op("conv1d_depthwise", &parents, out, flops, move |g, needs| {
            let mut gx = vec![0.0; nb * ns * nc];
            let mut gw = vec![0.0; nc * k];
            for b in 0..nb {
                for s in 0..ns {
                    let grow = &g.data()[(b * ns + s) * nc..(b * ns + s + 1) * nc];
                    for j in 0..k {
                        let src = s as isize + j as isize - (k as isize - 1);
                        if src < 0 {
                            continue;
                        }
                        let base = (b * ns + src as usize) * nc;
                        for c in 0..nc {
                            gx[base + c] += wt.data()[c * k + j] * grow[c];
                            gw[c * k + j] += x.data()[base + c] * grow[c];
                        }
                    }
                }
            }
            let mut grads = vec![
                needs[0].then(|| Tensor::new(&xs, gx).unwrap()),
                needs[1].then(|| Tensor::new(&ws, gw).unwrap()),
            ];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| {
                    let mut gb = vec![0.0; nc];
                    for row in g.data().chunks(nc) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::from_vec(gb)
                }));
            }
            grads
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    #[test]
    fn ones_conv_sums_window() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 3, 3]));
        let w = tape.constant(Tensor::ones(&[1, 1, 2, 2]));
        let y = x.conv2d(w, None, Conv2dGeom::default()).unwrap();
        assert_eq!(y.shape(), vec![1, 2, 2]);
        assert!(y.value().data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn strided_frequency_conv_halves_with_ceil() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[2, 5, 33]));
        let w = tape.constant(Tensor::ones(&[4, 2, 1, 3]));
        let geom = Conv2dGeom {
            stride: (1, 2),
            padding: (0, 1),
            ..Default::default()
        };
        let y = x.conv2d(w, None, geom).unwrap();
        assert_eq!(y.shape(), vec![4, 5, 17]);
        let back = y
            .conv_transpose2d(tape.constant(Tensor::ones(&[4, 2, 1, 3])), None, geom, (0, 0))
            .unwrap();
        assert_eq!(back.shape(), vec![2, 5, 33]);
    }

    #[test]
    fn zero_dilation_rejected() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 3, 3]));
        let w = tape.constant(Tensor::ones(&[1, 1, 2, 2]));
        let geom = Conv2dGeom {
            dilation: (0, 1),
            ..Default::default()
        };
        assert!(x.conv2d(w, None, geom).is_err());
    }

    #[test]
    fn depthwise_is_causal() {
        let tape = Tape::new();
        let mut v = Tensor::zeros(&[1, 6, 2]);
        v.data_mut()[3 * 2] = 1.0; // impulse at s=3, channel 0
        let x = tape.constant(v);
        let w = tape.constant(Tensor::ones(&[2, 4]));
        let y = x.conv1d_depthwise(w, None).unwrap().value();
        let ch0: Vec<f64> = (0..6).map(|s| y.data()[s * 2]).collect();
        assert_eq!(ch0, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }
}
