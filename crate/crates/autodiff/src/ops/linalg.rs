use crate::error::{AutodiffError, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// `[m, k] x [k, n]`, row-major, i-k-j loop order.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a^T b` for `a: [k, m]`, `b: [k, n]`.
fn matmul_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a b^T` for `a: [m, k]`, `b: [n, k]`.
fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

impl<'t> Var<'t> {
    /// Matrix product of two 2-D tensors.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        if a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0) {
            return Err(AutodiffError::Shape(format!(
                "matmul: {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
        let out = Tensor::new(&[m, n], matmul_raw(a.data(), b.data(), m, k, n))?;
        let flops = 2 * (m * k * n) as u64;
        Ok(self.tape.push_op("matmul", &[self, other], out, flops, move |g, needs| {
            // dA = G B^T, dB = A^T G
            let ga = needs[0]
                .then(|| Tensor::new(&[m, k], matmul_nt(g.data(), b.data(), m, n, k)).unwrap());
            let gb = needs[1]
                .then(|| Tensor::new(&[k, n], matmul_tn(a.data(), g.data(), m, k, n)).unwrap());
            vec![ga, gb]
        }))
    }

    /// `x [.., in] @ w [in, out] + b [out]` over the flattened leading axes.
    pub fn linear(self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        let shape = self.shape();
        let d_in = *shape
            .last()
            .ok_or_else(|| AutodiffError::Shape("linear on a scalar".into()))?;
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let w_shape = weight.shape();
        if w_shape.len() != 2 || w_shape[0] != d_in {
            return Err(AutodiffError::Shape(format!(
                "linear: input {:?} against weight {:?}",
                shape, w_shape
            )));
        }
        let y = self.reshape(&[rows, d_in])?.matmul(weight)?;
        let y = match bias {
            Some(b) => y.add_bias(b, 1)?,
            None => y,
        };
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = w_shape[1];
        y.reshape(&out_shape)
    }
}
