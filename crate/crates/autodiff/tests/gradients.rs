//! Every primitive against central finite differences on seeded random shapes.

use ecg_autodiff::{finite_diff_check, Conv2dGeom, Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;
const H: f64 = 1e-6;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero, so kinks at the origin are never straddled.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn rand_positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(0.2..2.0))
}

fn rand_shape(rng: &mut ChaCha8Rng, nd: usize) -> Vec<usize> {
    (0..nd).map(|_| rng.gen_range(1..5)).collect()
}

/// Weighted sum so every output element gets a distinct adjoint.
fn weighted_sum<'t>(tape: &'t Tape, y: Var<'t>) -> Result<Var<'t>> {
    let shape = y.shape();
    let w = tape.constant(Tensor::from_fn(&shape, |i| ((i as f64) * 0.37).sin() + 0.5));
    Ok(y.mul(w)?.sum())
}

fn check<F>(name: &str, f: F, point: &[Tensor])
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let err = finite_diff_check(f, point, H).unwrap();
    assert!(err <= TOL, "{name}: max relative error {err:e}");
}

#[test]
fn unary_primitives() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = rand_shape(&mut rng, 2);
        let x = rand_away_from_zero(&mut rng, &shape);
        let p = rand_positive(&mut rng, &shape);
        check("exp", |t, v| weighted_sum(t, v[0].exp()), &[x.clone()]);
        check("sigmoid", |t, v| weighted_sum(t, v[0].sigmoid()), &[x.clone()]);
        check("silu", |t, v| weighted_sum(t, v[0].silu()), &[x.clone()]);
        check("softplus", |t, v| weighted_sum(t, v[0].softplus()), &[x.clone()]);
        check("abs", |t, v| weighted_sum(t, v[0].abs()), &[x.clone()]);
        check("sin", |t, v| weighted_sum(t, v[0].sin()), &[x.clone()]);
        check("cos", |t, v| weighted_sum(t, v[0].cos()), &[x.clone()]);
        check("sqr", |t, v| weighted_sum(t, v[0].sqr()), &[x.clone()]);
        check("scale", |t, v| weighted_sum(t, v[0].scale(-1.7)), &[x.clone()]);
        check("add_scalar", |t, v| weighted_sum(t, v[0].add_scalar(0.3)), &[x.clone()]);
        check("log", |t, v| weighted_sum(t, v[0].log()), &[p.clone()]);
        check("power(0.3)", |t, v| weighted_sum(t, v[0].power(0.3)), &[p.clone()]);
        check("power(1/0.3)", |t, v| weighted_sum(t, v[0].power(1.0 / 0.3)), &[p.clone()]);
    }
}

#[test]
fn binary_and_broadcast_primitives() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = rand_shape(&mut rng, 3);
        let a = rand_tensor(&mut rng, &shape);
        let b = rand_tensor(&mut rng, &shape);
        check("add", |t, v| weighted_sum(t, v[0].add(v[1])?), &[a.clone(), b.clone()]);
        check("sub", |t, v| weighted_sum(t, v[0].sub(v[1])?), &[a.clone(), b.clone()]);
        check("mul", |t, v| weighted_sum(t, v[0].mul(v[1])?), &[a.clone(), b.clone()]);
        check(
            "squared_error",
            |_, v| v[0].squared_error(v[1]),
            &[a.clone(), b.clone()],
        );
        for axis in 0..3 {
            let bias = rand_tensor(&mut rng, &[shape[axis]]);
            check(
                "add_bias",
                |t, v| weighted_sum(t, v[0].add_bias(v[1], axis)?),
                &[a.clone(), bias],
            );
        }
        let xa = rand_away_from_zero(&mut rng, &shape);
        let slope = rand_tensor(&mut rng, &[shape[0]]);
        check(
            "prelu",
            |t, v| weighted_sum(t, v[0].prelu(v[1], 0)?),
            &[xa, slope],
        );
    }
}

#[test]
fn matmul_and_linear() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let a = rand_tensor(&mut rng, &[m, k]);
        let b = rand_tensor(&mut rng, &[k, n]);
        check("matmul", |t, v| weighted_sum(t, v[0].matmul(v[1])?), &[a.clone(), b.clone()]);
        let x = rand_tensor(&mut rng, &[2, m, k]);
        let bias = rand_tensor(&mut rng, &[n]);
        check(
            "linear",
            |t, v| weighted_sum(t, v[0].linear(v[1], Some(v[2]))?),
            &[x, b, bias],
        );
    }
}

#[test]
fn sum_of_product_matches_finite_differences() {
    // y = sum(A * B) for 3x3: dY/dA == B.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = rand_tensor(&mut rng, &[3, 3]);
    let b = rand_tensor(&mut rng, &[3, 3]);
    let tape = Tape::new();
    let va = tape.param(a.clone());
    let vb = tape.param(b.clone());
    let y = va.mul(vb).unwrap().sum();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(va).unwrap(), &b);
    let err = finite_diff_check(|_, v| Ok(v[0].mul(v[1])?.sum()), &[a, b], 1e-5).unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn layout_primitives() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = vec![rng.gen_range(2..5), rng.gen_range(2..5), rng.gen_range(2..5)];
        let x = rand_tensor(&mut rng, &shape);
        for axis in 0..3 {
            check("flip", |t, v| weighted_sum(t, v[0].flip(axis)?), &[x.clone()]);
            check(
                "slice",
                |t, v| weighted_sum(t, v[0].slice(axis, 1, 1)?),
                &[x.clone()],
            );
        }
        check("permute", |t, v| weighted_sum(t, v[0].permute(&[2, 0, 1])?), &[x.clone()]);
        check("transpose", |t, v| weighted_sum(t, v[0].transpose(0, 2)?), &[x.clone()]);
        let n: usize = shape.iter().product();
        check("reshape", |t, v| weighted_sum(t, v[0].reshape(&[n])?), &[x.clone()]);
        let y = rand_tensor(&mut rng, &[shape[0], 3, shape[2]]);
        check(
            "concat",
            |t, v| weighted_sum(t, Var::concat(&[v[0], v[1]], 1)?),
            &[x.clone(), y],
        );
        check("mean", |_, v| Ok(v[0].mean()), &[x.clone()]);
        check("sum", |_, v| Ok(v[0].sum()), &[x]);
    }
}

#[test]
fn convolution_primitives() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = rng.gen_range(1..4);
        let cout = rng.gen_range(1..4);
        let h = rng.gen_range(5..8);
        let w = rng.gen_range(5..9);
        let x = rand_tensor(&mut rng, &[cin, h, w]);
        let geoms = [
            Conv2dGeom::default(),
            Conv2dGeom {
                stride: (1, 2),
                padding: (0, 1),
                ..Default::default()
            },
            Conv2dGeom {
                dilation: (2, 1),
                padding: (2, 1),
                ..Default::default()
            },
        ];
        for geom in geoms {
            let k = rand_tensor(&mut rng, &[cout, cin, 3, 3]);
            let b = rand_tensor(&mut rng, &[cout]);
            check(
                "conv2d",
                |t, v| weighted_sum(t, v[0].conv2d(v[1], Some(v[2]), geom)?),
                &[x.clone(), k, b],
            );
            let kt = rand_tensor(&mut rng, &[cin, cout, 1, 3]);
            let bt = rand_tensor(&mut rng, &[cout]);
            let op = if geom.stride.1 == 2 { (0, 1) } else { (0, 0) };
            check(
                "conv_transpose2d",
                |t, v| weighted_sum(t, v[0].conv_transpose2d(v[1], Some(v[2]), geom, op)?),
                &[x.clone(), kt, bt],
            );
        }
        let seq = rand_tensor(&mut rng, &[2, h, cin]);
        let dw = rand_tensor(&mut rng, &[cin, 4]);
        let db = rand_tensor(&mut rng, &[cin]);
        check(
            "conv1d_depthwise",
            |t, v| weighted_sum(t, v[0].conv1d_depthwise(v[1], Some(v[2]))?),
            &[seq, dw, db],
        );
    }
}

#[test]
fn instance_norm_primitive() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [rng.gen_range(1..4), rng.gen_range(2..5), rng.gen_range(2..5)];
        let x = rand_tensor(&mut rng, &shape);
        let g = rand_tensor(&mut rng, &[shape[0]]);
        let b = rand_tensor(&mut rng, &[shape[0]]);
        check(
            "instance_norm",
            |t, v| weighted_sum(t, v[0].instance_norm(v[1], v[2], 1e-5)?),
            &[x, g, b],
        );
    }
    // 2x4x4 with unit gain and zero shift
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = rand_tensor(&mut rng, &[2, 4, 4]);
    let err = finite_diff_check(
        |t, v| {
            let g = t.constant(Tensor::ones(&[2]));
            let b = t.constant(Tensor::zeros(&[2]));
            weighted_sum(t, v[0].instance_norm(g, b, 1e-5)?)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-5, "{err}");
}

#[test]
fn silu_chain_on_ten_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_tensor(&mut rng, &[10]);
    let err = finite_diff_check(|_, v| Ok(v[0].silu().silu().scale(2.0).silu().sum()), &[x], 1e-5).unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn gradients_accumulate_over_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = rand_tensor(&mut rng, &[6]);
    let grad_of = |f: &dyn for<'t> Fn(Var<'t>) -> Var<'t>| {
        let tape = Tape::new();
        let x = tape.param(x0.clone());
        let y = f(x);
        tape.backward(y).unwrap().get(x).unwrap().clone()
    };
    let g1 = grad_of(&|x| x.silu().sum());
    let g2 = grad_of(&|x| x.sqr().scale(0.5).sum());
    let both = grad_of(&|x| x.silu().sum().add(x.sqr().scale(0.5).sum()).unwrap());
    let expected = g1.zip_map(&g2, |a, b| a + b);
    assert!(both.max_abs_diff(&expected) < 1e-15);
}

proptest! {
    #[test]
    fn flip_twice_is_identity(rows in 1usize..6, cols in 1usize..6, axis in 0usize..2) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[rows, cols], |i| i as f64));
        let y = x.flip(axis).unwrap().flip(axis).unwrap();
        prop_assert_eq!(&*y.value(), &*x.value());
    }

    #[test]
    fn permute_then_inverse_is_identity(a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[a, b, c], |i| i as f64));
        let y = x.permute(&[1, 2, 0]).unwrap().permute(&[2, 0, 1]).unwrap();
        prop_assert_eq!(&*y.value(), &*x.value());
    }
}
