//! Minimal reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every forward operation; [`Tape::backward`] walks it in
//! reverse and accumulates gradients into the leaves. The primitive set is
//! the one a small convolutional / state-space denoiser needs; model code
//! can register further primitives through [`Tape::push_op`].

mod error;
pub mod gradcheck;
mod ops;
pub mod optim;
pub mod params;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, scalar_fn};
pub use ops::conv::Conv2dGeom;
pub use ops::elementwise::{sigmoid, softplus};
pub use ops::linalg::matmul_raw;
pub use optim::{adamw_step, exp_lr_step, AdamWConfig, ExponentialLr, OptimState};
pub use params::{BoundParams, ParamStore};
pub use tape::{BackwardFn, Gradients, Tape, Var};
pub use tensor::{strides, Tensor};
