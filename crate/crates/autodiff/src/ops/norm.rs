use crate::error::{AutodiffError, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t> Var<'t> {
    /// Per-channel normalization over the spatial extent of a `[c, h, w]`
    /// map, biased variance, with affine `gamma`/`beta` of shape `[c]`.
    pub fn instance_norm(self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let x = self.value();
        let gv = gamma.value();
        let bv = beta.value();
        let xs = x.shape().to_vec();
        if xs.len() != 3 || gv.shape() != [xs[0]] || bv.shape() != [xs[0]] {
            return Err(AutodiffError::Shape(format!(
                "instance_norm: input {:?} gamma {:?} beta {:?}",
                xs,
                gv.shape(),
                bv.shape()
            )));
        }
        let c = xs[0];
        let n = xs[1] * xs[2];
        let mut xhat = vec![0.0; c * n];
        let mut inv_std = vec![0.0; c];
        let mut y = vec![0.0; c * n];
        for ch in 0..c {
            let src = &x.data()[ch * n..(ch + 1) * n];
            let mean = src.iter().sum::<f64>() / n as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for i in 0..n {
                let h = (src[i] - mean) * is;
                xhat[ch * n + i] = h;
                y[ch * n + i] = gv.data()[ch] * h + bv.data()[ch];
            }
        }
        let out = Tensor::new(&xs, y)?;
        let flops = 8 * (c * n) as u64;
        Ok(self.tape.push_op(
            "instance_norm",
            &[self, gamma, beta],
            out,
            flops,
            move |g, needs| {
                let gd = g.data();
                let mut gx = needs[0].then(|| vec![0.0; c * n]);
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for ch in 0..c {
                    let gs = &gd[ch * n..(ch + 1) * n];
                    let hs = &xhat[ch * n..(ch + 1) * n];
                    let sum_g: f64 = gs.iter().sum();
                    let sum_gh: f64 = gs.iter().zip(hs).map(|(a, b)| a * b).sum();
                    ggamma[ch] = sum_gh;
                    gbeta[ch] = sum_g;
                    if let Some(gx) = gx.as_mut() {
                        let k = gv.data()[ch] * inv_std[ch] / n as f64;
                        for i in 0..n {
                            gx[ch * n + i] = k * (n as f64 * gs[i] - sum_g - hs[i] * sum_gh);
                        }
                    }
                }
                vec![
                    gx.map(|v| Tensor::new(&xs, v).unwrap()),
                    needs[1].then(|| Tensor::from_vec(ggamma)),
                    needs[2].then(|| Tensor::from_vec(gbeta)),
                ]
            },
        ))
    }
}
