use std::f64::consts::PI;

use ecg_autodiff::{Tensor, Var};

use crate::error::Result;
use crate::tf::{check_exponent, ComplexSpectrogram, FeatureMode};

/// A spectrum with magnitudes raised to `c` and phases kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSpectrogram {
    /// `|X|^c`, row-major `frames x bins`.
    pub mag: Vec<f64>,
    /// Phase in `(-pi, pi]`; zero where `|X| = 0`.
    pub phase: Vec<f64>,
    /// Real part of the compressed spectrum.
    pub re: Vec<f64>,
    /// Imaginary part of the compressed spectrum.
    pub im: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub c: f64,
}

/// Network input planes, `[2, frames, bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub planes: Tensor,
    pub mode: FeatureMode,
    pub c: f64,
}

/// Maps `atan2`'s `-pi` onto `pi` so phases lie in `(-pi, pi]`.
pub(crate) fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Power-law compression of the magnitude, `|X| -> |X|^c`, keeping the phase.
pub fn compress(spec: &ComplexSpectrogram, c: f64) -> Result<CompressedSpectrogram> {
    check_exponent(c)?;
    let n = spec.re.len();
    let (mut mag, mut phase, mut re, mut im) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (&r, &i) in spec.re.iter().zip(&spec.im) {
        let m = r.hypot(i);
        if m == 0.0 {
            mag.push(0.0);
            phase.push(0.0);
            re.push(0.0);
            im.push(0.0);
        } else {
            let scale = m.powf(c - 1.0);
            mag.push(m.powf(c));
            phase.push(wrap_phase(i.atan2(r)));
            re.push(r * scale);
            im.push(i * scale);
        }
    }
    Ok(CompressedSpectrogram {
        mag,
        phase,
        re,
        im,
        frames: spec.frames,
        bins: spec.bins,
        c,
    })
}

/// Lays out the compressed spectrum as `(real, imag)` or `(magnitude, phase)`
/// planes of identical shape.
pub fn assemble_features(spec: &CompressedSpectrogram, mode: FeatureMode) -> FeatureTensor {
    let (a, b) = match mode {
        FeatureMode::Complex => (&spec.re, &spec.im),
        FeatureMode::MagPhase => (&spec.mag, &spec.phase),
    };
    let mut data = a.clone();
    data.extend_from_slice(b);
    FeatureTensor {
        planes: Tensor::new(&[2, spec.frames, spec.bins], data).expect("plane sizes match"),
        mode,
        c: spec.c,
    }
}

/// Stabilizer inside the magnitude of the loss-domain compression.
pub const LOSS_EPS: f64 = 1e-9;

/// Differentiable compression used by the training loss:
/// `(r, i) -> (r, i) * (r^2 + i^2 + eps)^((c - 1) / 2)` on `[2, T, F]`.
pub fn compress_var(spec: Var<'_>, c: f64) -> Result<Var<'_>> {
    check_exponent(c)?;
    let shape = spec.shape();
    let re = spec.slice(0, 0, 1)?;
    let im = spec.slice(0, 1, 1)?;
    let scale = re.sqr().add(im.sqr())?.add_scalar(LOSS_EPS).power((c - 1.0) / 2.0);
    let out = Var::concat(&[re.mul(scale)?, im.mul(scale)?], 0)?;
    debug_assert_eq!(out.shape(), shape);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf::{stft, StftConfig};
    use ecg_autodiff::{finite_diff_check, scalar_fn, Tape};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(re: f64, im: f64) -> ComplexSpectrogram {
        ComplexSpectrogram {
            re: vec![re],
            im: vec![im],
            frames: 1,
            bins: 1,
            config: StftConfig::default(),
            signal_len: 1,
        }
    }

    #[test]
    fn compression_examples() {
        let a = compress(&single(4.0, 0.0), 0.5).unwrap();
        assert_eq!((a.mag[0], a.phase[0]), (2.0, 0.0));
        for c in [0.1, 0.3, 0.77, 1.0] {
            let b = compress(&single(0.0, 1.0), c).unwrap();
            assert!((b.mag[0] - 1.0).abs() < 1e-15);
            assert_eq!(b.phase[0], PI / 2.0);
        }
        let z = compress(&single(0.0, 0.0), 0.3).unwrap();
        assert_eq!((z.mag[0], z.phase[0], z.re[0], z.im[0]), (0.0, 0.0, 0.0, 0.0));
        assert!(compress(&single(1.0, 1.0), 0.0).is_err());
        assert!(compress(&single(1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn unit_exponent_is_identity() {
        let s = stft(&(0..128).map(|n| (n as f64 * 0.3).sin()).collect::<Vec<_>>(), StftConfig::default()).unwrap();
        let c = compress(&s, 1.0).unwrap();
        assert_eq!(c.re, s.re);
        assert_eq!(c.im, s.im);
    }

    #[test]
    fn feature_layouts() {
        // magnitude 2, phase pi/2 after compression with c = 1
        let spec = compress(&single(0.0, 2.0), 1.0).unwrap();
        let cx = assemble_features(&spec, FeatureMode::Complex);
        let mp = assemble_features(&spec, FeatureMode::MagPhase);
        assert_eq!(cx.planes.data(), &[0.0, 2.0]);
        assert_eq!(mp.planes.data(), &[2.0, PI / 2.0]);
        assert_eq!(cx.planes.shape(), mp.planes.shape());
        let neg = assemble_features(&compress(&single(-3.0, 0.0), 1.0).unwrap(), FeatureMode::MagPhase);
        assert_eq!(neg.planes.data(), &[3.0, PI]);
        let negz = assemble_features(&compress(&single(-3.0, -0.0), 1.0).unwrap(), FeatureMode::MagPhase);
        assert_eq!(negz.planes.data(), &[3.0, PI]);
    }

    fn random_spec(seed: u64, n: usize) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexSpectrogram {
            re: (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            im: (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            frames: 1,
            bins: n,
            config: StftConfig::default(),
            signal_len: 1,
        }
    }

    proptest! {
        #[test]
        fn phase_preserved_and_powers_compose(seed in 0u64..1000, a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
            let s = random_spec(seed, 16);
            let once = compress(&s, a).unwrap();
            for k in 0..16 {
                prop_assert!((once.phase[k] - s.im[k].atan2(s.re[k])).abs() < 1e-12);
            }
            let as_spec = ComplexSpectrogram { re: once.re.clone(), im: once.im.clone(), ..s.clone() };
            let twice = compress(&as_spec, b).unwrap();
            for k in 0..16 {
                let want = s.re[k].hypot(s.im[k]).powf(a * b);
                prop_assert!((twice.mag[k] - want).abs() <= 1e-10 * want.max(1.0));
            }
        }
    }

    #[test]
    fn loss_compression_matches_pure_and_differentiates() {
        let s = random_spec(7, 12);
        let t = Tape::new();
        let v = t.constant(s.clone().to_tensor_1x());
        let out = compress_var(v, 0.3).unwrap();
        let pure = compress(&s, 0.3).unwrap();
        for k in 0..12 {
            assert!((out.value().data()[k] - pure.re[k]).abs() < 1e-8);
            assert!((out.value().data()[12 + k] - pure.im[k]).abs() < 1e-8);
        }
        let w = Tensor::from_fn(&[2, 1, 12], |i| (i as f64 * 0.37).sin());
        let f = scalar_fn(move |t, v| {
            let wc = t.constant(w.clone());
            compress_var(v[0], 0.3).unwrap().mul(wc).map(Var::sum)
        });
        assert!(finite_diff_check(f, &[s.to_tensor_1x()], 1e-6).unwrap() < 1e-5);
    }

    impl ComplexSpectrogram {
        fn to_tensor_1x(&self) -> Tensor {
            let mut d = self.re.clone();
            d.extend_from_slice(&self.im);
            Tensor::new(&[2, 1, self.re.len()], d).unwrap()
        }
    }
}
