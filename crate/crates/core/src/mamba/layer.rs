use ecg_autodiff::{BoundParams, ParamStore, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::init::fan_in_uniform;
use crate::mamba::{selective_scan_var, MambaConfig};

const DT_MIN: f64 = 1e-3;
const DT_MAX: f64 = 1e-1;

/// Registers the parameters of one Mamba layer of width `d` under `prefix`.
pub fn init_mamba_layer<R: Rng>(store: &mut ParamStore, prefix: &str, d: usize, cfg: &MambaConfig, rng: &mut R) {
    let di = cfg.d_inner(d);
    let n = cfg.d_state;
    let r = cfg.dt_rank(d);
    let p = |s: &str| format!("{prefix}.{s}");
    store.insert(p("in_proj.w"), fan_in_uniform(rng, &[d, 2 * di], d));
    store.insert(p("in_proj.b"), Tensor::zeros(&[2 * di]));
    store.insert(p("conv.w"), fan_in_uniform(rng, &[di, cfg.d_conv], cfg.d_conv));
    store.insert(p("conv.b"), Tensor::zeros(&[di]));
    store.insert(p("x_proj.w"), fan_in_uniform(rng, &[di, r + 2 * n], di));
    store.insert(p("dt_proj.w"), fan_in_uniform(rng, &[r, di], r));
    // step sizes start log-uniform in [DT_MIN, DT_MAX]; the bias holds their
    // inverse softplus
    let dt_bias = Tensor::from_fn(&[di], |_| {
        let dt: f64 = (rng.gen_range(DT_MIN.ln()..DT_MAX.ln())).exp();
        dt + (-(-dt).exp_m1()).ln()
    });
    store.insert(p("dt_proj.b"), dt_bias);
    store.insert(p("a_log"), Tensor::from_fn(&[di, n], |i| ((i % n + 1) as f64).ln()));
    store.insert(p("d"), Tensor::ones(&[di]));
    store.insert(p("out_proj.w"), fan_in_uniform(rng, &[di, d], di));
    store.insert(p("out_proj.b"), Tensor::zeros(&[d]));
}

/// Gated selective state-space layer on `[B, S, d]`, causal along `S`.
pub fn mamba_layer<'t>(x: Var<'t>, params: &BoundParams<'t>, prefix: &str, cfg: &MambaConfig) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::LengthMismatch(format!("mamba layer expects [B, S, d], got {shape:?}")));
    }
    let d = shape[2];
    let di = cfg.d_inner(d);
    let n = cfg.d_state;
    let r = cfg.dt_rank(d);
    let p = |s: &str| params.get(&format!("{prefix}.{s}"));

    let xz = x.linear(p("in_proj.w")?, Some(p("in_proj.b")?))?;
    let main = xz.slice(2, 0, di)?;
    let gate = xz.slice(2, di, di)?;
    let main = main.conv1d_depthwise(p("conv.w")?, Some(p("conv.b")?))?.silu();
    let proj = main.linear(p("x_proj.w")?, None)?;
    let dt_low = proj.slice(2, 0, r)?;
    let b = proj.slice(2, r, n)?;
    let c = proj.slice(2, r + n, n)?;
    let delta = dt_low.linear(p("dt_proj.w")?, Some(p("dt_proj.b")?))?.softplus();
    let a = p("a_log")?.exp().neg();
    let y = selective_scan_var(main, delta, a, b, c, p("d")?)?;
    Ok(y.mul(gate.silu())?.linear(p("out_proj.w")?, Some(p("out_proj.b")?))?)
}

/// Ablation switches for the bidirectional block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiMambaOptions {
    /// Reverse the sequence around the backward layer. Disabling it makes
    /// both layers read the sequence forward.
    pub flip: bool,
}

impl Default for BiMambaOptions {
    fn default() -> Self {
        Self { flip: true }
    }
}

/// Registers a forward layer, a backward layer, and the `2d -> d` mixer.
pub fn init_bi_mamba<R: Rng>(store: &mut ParamStore, prefix: &str, d: usize, cfg: &MambaConfig, rng: &mut R) {
    init_mamba_layer(store, &format!("{prefix}.fwd"), d, cfg, rng);
    init_mamba_layer(store, &format!("{prefix}.bwd"), d, cfg, rng);
    store.insert(format!("{prefix}.mix.w"), fan_in_uniform(rng, &[2 * d, d], 2 * d));
    store.insert(format!("{prefix}.mix.b"), Tensor::zeros(&[d]));
}

/// `x + mix([mamba_f(x), flip(mamba_b(flip(x)))])` on `[B, S, d]`.
pub fn bi_mamba_block<'t>(
    x: Var<'t>,
    params: &BoundParams<'t>,
    prefix: &str,
    cfg: &MambaConfig,
    opts: BiMambaOptions,
) -> Result<Var<'t>> {
    let fwd = mamba_layer(x, params, &format!("{prefix}.fwd"), cfg)?;
    let bwd = if opts.flip {
        mamba_layer(x.flip(1)?, params, &format!("{prefix}.bwd"), cfg)?.flip(1)?
    } else {
        mamba_layer(x, params, &format!("{prefix}.bwd"), cfg)?
    };
    let both = Var::concat(&[fwd, bwd], 2)?;
    let mixed = both.linear(
        params.get(&format!("{prefix}.mix.w"))?,
        Some(params.get(&format!("{prefix}.mix.b"))?),
    )?;
    Ok(mixed.add(x)?)
}

/// Registers the time block and, when `with_freq`, the frequency block.
pub fn init_tf_block<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    d: usize,
    cfg: &MambaConfig,
    with_freq: bool,
    rng: &mut R,
) {
    init_bi_mamba(store, &format!("{prefix}.time"), d, cfg, rng);
    if with_freq {
        init_bi_mamba(store, &format!("{prefix}.freq"), d, cfg, rng);
    }
}

/// Time block along `T` for every frequency row, then (if present) the
/// frequency block along `F` for every frame. Input and output `[T, F, d]`.
pub fn tf_bi_mamba<'t>(
    x: Var<'t>,
    params: &BoundParams<'t>,
    prefix: &str,
    cfg: &MambaConfig,
    with_freq: bool,
    opts: BiMambaOptions,
) -> Result<Var<'t>> {
    let by_freq = x.permute(&[1, 0, 2])?;
    let timed = bi_mamba_block(by_freq, params, &format!("{prefix}.time"), cfg, opts)?.permute(&[1, 0, 2])?;
    if with_freq {
        bi_mamba_block(timed, params, &format!("{prefix}.freq"), cfg, opts)
    } else {
        Ok(timed)
    }
}
