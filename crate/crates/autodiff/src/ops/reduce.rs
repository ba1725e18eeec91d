use crate::error::Result;
use crate::tape::Var;
use crate::tensor::{same_shape, Tensor};

impl<'t> Var<'t> {
    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum());
        self.tape
            .push_op("sum", &[self], out, x.len() as u64, move |g, _| {
                vec![Some(Tensor::full(&shape, g.item()))]
            })
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let n = x.len().max(1) as f64;
        let out = Tensor::scalar(x.sum() / n);
        self.tape
            .push_op("mean", &[self], out, x.len() as u64, move |g, _| {
                vec![Some(Tensor::full(&shape, g.item() / n))]
            })
    }

    /// Mean squared difference `mean((self - target)^2)` as a scalar.
    pub fn squared_error(self, target: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = target.value();
        same_shape(&a, &b, "squared_error")?;
        let n = a.len().max(1) as f64;
        let diff = a.zip_map(&b, |x, y| x - y);
        let out = Tensor::scalar(diff.data().iter().map(|d| d * d).sum::<f64>() / n);
        Ok(self.tape.push_op(
            "squared_error",
            &[self, target],
            out,
            3 * a.len() as u64,
            move |g, needs| {
                let k = 2.0 * g.item() / n;
                let ga = needs[0].then(|| diff.map(|d| k * d));
                let gb = needs[1].then(|| diff.map(|d| -k * d));
                vec![ga, gb]
            },
        ))
    }
}
