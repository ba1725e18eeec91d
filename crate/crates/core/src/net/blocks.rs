//! Convolutional encoder and the two decoders. Feature maps are
//! channel-first `[C, T, F]` here; the state-space stages see `[T, F', C]`.

use ecg_autodiff::{BoundParams, Conv2dGeom, ParamStore, Tensor, Var};
use rand::Rng;

use crate::error::Result;
use crate::init::fan_in_uniform;

pub const NORM_EPS: f64 = 1e-5;
const PRELU_INIT: f64 = 0.25;

fn init_conv<R: Rng>(store: &mut ParamStore, prefix: &str, shape: [usize; 4], rng: &mut R) {
    let fan_in = shape[1] * shape[2] * shape[3];
    store.insert(format!("{prefix}.w"), fan_in_uniform(rng, &shape, fan_in));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[shape[0]]));
}

fn init_norm_act(store: &mut ParamStore, prefix: &str, ch: usize) {
    store.insert(format!("{prefix}.norm.g"), Tensor::ones(&[ch]));
    store.insert(format!("{prefix}.norm.b"), Tensor::zeros(&[ch]));
    store.insert(format!("{prefix}.act.a"), Tensor::full(&[ch], PRELU_INIT));
}

fn conv<'t>(x: Var<'t>, p: &BoundParams<'t>, prefix: &str, geom: Conv2dGeom) -> Result<Var<'t>> {
    Ok(x.conv2d(p.get(&format!("{prefix}.w"))?, Some(p.get(&format!("{prefix}.b"))?), geom)?)
}

fn norm_act<'t>(x: Var<'t>, p: &BoundParams<'t>, prefix: &str, normalize: bool) -> Result<Var<'t>> {
    let x = if normalize {
        x.instance_norm(
            p.get(&format!("{prefix}.norm.g"))?,
            p.get(&format!("{prefix}.norm.b"))?,
            NORM_EPS,
        )?
    } else {
        x
    };
    Ok(x.prelu(p.get(&format!("{prefix}.act.a"))?, 0)?)
}

/// Registers a dense block of `dilations.len()` layers on `ch` channels.
pub fn init_dense_block<R: Rng>(store: &mut ParamStore, prefix: &str, ch: usize, dilations: &[usize], rng: &mut R) {
    for i in 0..dilations.len() {
        let p = format!("{prefix}.{i}");
        init_conv(store, &format!("{p}.conv"), [ch, ch * (i + 1), 3, 3], rng);
        init_norm_act(store, &p, ch);
    }
}

/// Densely connected dilated convolutions: layer `i` sees the block input
/// and every earlier layer output, uses a 3x3 kernel dilated by
/// `dilations[i]` along time, and the last layer's output is returned.
/// `normalize = false` skips instance normalization.
pub fn dense_block<'t>(
    x: Var<'t>,
    p: &BoundParams<'t>,
    prefix: &str,
    dilations: &[usize],
    normalize: bool,
) -> Result<Var<'t>> {
    let mut skip = x;
    let mut out = x;
    for (i, &d) in dilations.iter().enumerate() {
        let lp = format!("{prefix}.{i}");
        let geom = Conv2dGeom {
            dilation: (d, 1),
            padding: (d, 1),
            ..Default::default()
        };
        out = norm_act(conv(skip, p, &format!("{lp}.conv"), geom)?, p, &lp, normalize)?;
        skip = Var::concat(&[out, skip], 0)?;
    }
    Ok(out)
}

pub fn init_encoder<R: Rng>(store: &mut ParamStore, dim: usize, dilations: &[usize], rng: &mut R) {
    init_conv(store, "enc.in.conv", [dim, 2, 1, 1], rng);
    init_norm_act(store, "enc.in", dim);
    init_dense_block(store, "enc.dense", dim, dilations, rng);
    init_conv(store, "enc.down.conv", [dim, dim, 1, 3], rng);
    init_norm_act(store, "enc.down", dim);
}

/// `[2, T, F]` input planes to `[T, ceil(F / 2), dim]`.
pub fn encoder_forward<'t>(features: Var<'t>, p: &BoundParams<'t>, dilations: &[usize]) -> Result<Var<'t>> {
    let h = norm_act(conv(features, p, "enc.in.conv", Conv2dGeom::default())?, p, "enc.in", true)?;
    let h = dense_block(h, p, "enc.dense", dilations, true)?;
    let down = Conv2dGeom {
        stride: (1, 2),
        padding: (0, 1),
        ..Default::default()
    };
    let h = norm_act(conv(h, p, "enc.down.conv", down)?, p, "enc.down", true)?;
    Ok(h.permute(&[1, 2, 0])?)
}

fn init_upsample<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut R) {
    // transposed-conv weights are [cin, cout, kh, kw]; each output sees dim * 3 taps at most
    store.insert(format!("{prefix}.conv.w"), fan_in_uniform(rng, &[dim, dim, 1, 3], dim * 3));
    store.insert(format!("{prefix}.conv.b"), Tensor::zeros(&[dim]));
    init_norm_act(store, prefix, dim);
}

/// Dense block then a stride-2 transposed convolution along frequency back
/// to `bins`, instance norm and PReLU. `[T, F', dim]` to `[dim, T, bins]`.
fn decoder_trunk<'t>(
    h: Var<'t>,
    p: &BoundParams<'t>,
    prefix: &str,
    dilations: &[usize],
    bins: usize,
) -> Result<Var<'t>> {
    let x = h.permute(&[2, 0, 1])?;
    let x = dense_block(x, p, &format!("{prefix}.dense"), dilations, true)?;
    let f_down = x.shape()[2];
    let geom = Conv2dGeom {
        stride: (1, 2),
        padding: (0, 1),
        ..Default::default()
    };
    let out_pad = bins + 1 - 2 * f_down;
    let x = x.conv_transpose2d(
        p.get(&format!("{prefix}.up.conv.w"))?,
        Some(p.get(&format!("{prefix}.up.conv.b"))?),
        geom,
        (0, out_pad),
    )?;
    norm_act(x, p, &format!("{prefix}.up"), true)
}

pub fn init_mask_decoder<R: Rng>(store: &mut ParamStore, dim: usize, dilations: &[usize], rng: &mut R) {
    init_dense_block(store, "mask.dense", dim, dilations, rng);
    init_upsample(store, "mask.up", dim, rng);
    init_conv(store, "mask.head", [1, dim, 1, 1], rng);
}

/// Magnitude mask in `(0, 2)`, shape `[T, bins]`.
pub fn mask_decode<'t>(h: Var<'t>, p: &BoundParams<'t>, dilations: &[usize], bins: usize) -> Result<Var<'t>> {
    let x = decoder_trunk(h, p, "mask", dilations, bins)?;
    let m = conv(x, p, "mask.head", Conv2dGeom::default())?.sigmoid().scale(2.0);
    let (t, f) = (m.shape()[1], m.shape()[2]);
    Ok(m.reshape(&[t, f])?)
}

pub fn init_phase_decoder<R: Rng>(store: &mut ParamStore, dim: usize, dilations: &[usize], rng: &mut R) {
    init_dense_block(store, "phase.dense", dim, dilations, rng);
    init_upsample(store, "phase.up", dim, rng);
    init_conv(store, "phase.real", [1, dim, 1, 1], rng);
    init_conv(store, "phase.imag", [1, dim, 1, 1], rng);
}

/// Pseudo-real and pseudo-imaginary maps, each `[T, bins]`.
pub fn phase_decode<'t>(
    h: Var<'t>,
    p: &BoundParams<'t>,
    dilations: &[usize],
    bins: usize,
) -> Result<(Var<'t>, Var<'t>)> {
    let x = decoder_trunk(h, p, "phase", dilations, bins)?;
    let r = conv(x, p, "phase.real", Conv2dGeom::default())?;
    let i = conv(x, p, "phase.imag", Conv2dGeom::default())?;
    let (t, f) = (r.shape()[1], r.shape()[2]);
    Ok((r.reshape(&[t, f])?, i.reshape(&[t, f])?))
}
