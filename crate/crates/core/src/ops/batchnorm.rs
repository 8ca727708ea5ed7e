//! Per-channel batch normalization with affine `gamma`, `beta`.
//!
//! Statistics are reduced over `(batch, height, width)` sequentially in
//! memory order, and the output is computed as `(x − mean) / sqrt(var + eps)
//! · gamma + beta`.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Eval,
}

/// Statistics of one training batch, for folding into running averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (`m − 1`) variance.
    pub var: Vec<T>,
}

pub(crate) struct BnSaved<T> {
    xhat: Vec<T>,
    std: Vec<T>,
    shape: Shape,
    train: bool,
}

fn channel_vec<T: Element>(t: &Tensor<T>, c: usize, what: &'static str) -> Result<()> {
    if t.shape() != Shape::new(1, c, 1, 1) {
        return Err(Error::ChannelMismatch {
            op: what,
            expected: c,
            found: t.shape().c,
        });
    }
    Ok(())
}

/// Visits every element of channel `c`, in memory order.
#[inline]
fn for_channel<T: Copy>(data: &[T], s: Shape, c: usize, mut f: impl FnMut(usize, T)) {
    let plane = s.plane();
    for n in 0..s.n {
        let base = s.offset(n, c, 0, 0);
        for (i, &v) in data[base..base + plane].iter().enumerate() {
            f(base + i, v);
        }
    }
}

impl<T: Element> Graph<T> {
    /// Batch normalization using the statistics of `x` itself.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        let s = self.shape(x);
        channel_vec(self.value(gamma), s.c, "batch_norm gamma")?;
        channel_vec(self.value(beta), s.c, "batch_norm beta")?;
        let m = s.n * s.plane();
        if m < 2 {
            return Err(Error::DegenerateBatchNorm);
        }
        let mf = T::from_usize(m).expect("count fits in a float");
        let data = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); s.len()];
        let mut xhat = vec![T::zero(); s.len()];
        let mut std = Vec::with_capacity(s.c);
        let mut stats = BatchStats {
            mean: Vec::with_capacity(s.c),
            var: Vec::with_capacity(s.c),
        };
        for c in 0..s.c {
            let mut sum = T::zero();
            for_channel(data, s, c, |_, v| sum = sum + v);
            let mean = sum / mf;
            let mut sq = T::zero();
            for_channel(data, s, c, |_, v| sq = sq + (v - mean) * (v - mean));
            let var = sq / mf;
            let sd = (var + eps).sqrt();
            for_channel(data, s, c, |i, v| {
                let xh = (v - mean) / sd;
                xhat[i] = xh;
                out[i] = xh * g[c] + b[c];
            });
            std.push(sd);
            stats.mean.push(mean);
            stats.var.push(sq / (mf - T::one()));
        }
        let saved = BnSaved {
            xhat,
            std,
            shape: s,
            train: true,
        };
        let v = self.push(
            Tensor::new(s, out)?,
            Op::BatchNorm { x, gamma, beta, saved },
            "batch_norm",
        )?;
        Ok((v, stats))
    }

    /// Batch normalization using fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        eps: T,
    ) -> Result<Var> {
        let s = self.shape(x);
        channel_vec(self.value(gamma), s.c, "batch_norm gamma")?;
        channel_vec(self.value(beta), s.c, "batch_norm beta")?;
        channel_vec(running_mean, s.c, "batch_norm running mean")?;
        channel_vec(running_var, s.c, "batch_norm running var")?;
        let data = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); s.len()];
        let mut xhat = vec![T::zero(); s.len()];
        let mut std = Vec::with_capacity(s.c);
        for c in 0..s.c {
            let mean = running_mean.data()[c];
            let sd = (running_var.data()[c] + eps).sqrt();
            for_channel(data, s, c, |i, v| {
                let xh = (v - mean) / sd;
                xhat[i] = xh;
                out[i] = xh * g[c] + b[c];
            });
            std.push(sd);
        }
        let saved = BnSaved {
            xhat,
            std,
            shape: s,
            train: false,
        };
        self.push(
            Tensor::new(s, out)?,
            Op::BatchNorm { x, gamma, beta, saved },
            "batch_norm",
        )
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward<T: Element>(
    gamma: &Tensor<T>,
    saved: &BnSaved<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let s = saved.shape;
    let gd = g.data();
    let mf = T::from_usize(s.n * s.plane()).expect("count fits in a float");
    let mut dx = vec![T::zero(); s.len()];
    let mut dgamma = Vec::with_capacity(s.c);
    let mut dbeta = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let mut sg = T::zero();
        let mut sgx = T::zero();
        for_channel(gd, s, c, |i, v| {
            sg = sg + v;
            sgx = sgx + v * saved.xhat[i];
        });
        let k = gamma.data()[c] / saved.std[c];
        if saved.train {
            let (mg, mgx) = (sg / mf, sgx / mf);
            for_channel(gd, s, c, |i, v| dx[i] = k * (v - mg - saved.xhat[i] * mgx));
        } else {
            for_channel(gd, s, c, |i, v| dx[i] = k * v);
        }
        dgamma.push(sgx);
        dbeta.push(sg);
    }
    let cs = Shape::new(1, s.c, 1, 1);
    (
        Tensor::new(s, dx).expect("sized from saved shape"),
        Tensor::new(cs, dgamma).expect("one per channel"),
        Tensor::new(cs, dbeta).expect("one per channel"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leafs(g: &mut Graph<f64>, x: Tensor<f64>, gamma: f64, beta: f64) -> (Var, Var, Var) {
        let c = x.shape().c;
        let xv = g.leaf(x, false);
        let gv = g.leaf(Tensor::full(Shape::new(1, c, 1, 1), gamma), false);
        let bv = g.leaf(Tensor::full(Shape::new(1, c, 1, 1), beta), false);
        (xv, gv, bv)
    }

    #[test]
    fn zero_gamma_gives_constant_beta() {
        let x = Tensor::from_fn(Shape::new(3, 2, 2, 2), |n, c, h, w| (n * 7 + c * 3 + h + w * 5) as f64);
        let mut g = Graph::new();
        let (xv, gv, bv) = leafs(&mut g, x, 0.0, 5.0);
        let (y, _) = g.batch_norm_train(xv, gv, bv, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn standardized_input_passes_through() {
        // each channel holds ±1 in equal numbers: mean 0, biased variance 1
        let x = Tensor::from_fn(
            Shape::new(2, 3, 2, 2),
            |n, _, h, w| if (n + h + w) % 2 == 0 { 1.0 } else { -1.0 },
        );
        let mut g = Graph::new();
        let (xv, gv, bv) = leafs(&mut g, x.clone(), 1.0, 0.0);
        let (y, stats) = g.batch_norm_train(xv, gv, bv, 1e-5).unwrap();
        let expected = x.map(|v| v / (1.0f64 + 1e-5).sqrt());
        assert!(g.value(y).max_abs_diff(&expected).unwrap() < 1e-15);
        assert!(g.value(y).max_abs_diff(&x).unwrap() < 1e-5);
        assert_eq!(stats.mean, vec![0.0; 3]);
        assert!((stats.var[0] - 8.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn single_value_per_channel_is_degenerate_in_train_mode() {
        let mut g = Graph::new();
        let (xv, gv, bv) = leafs(&mut g, Tensor::zeros(Shape::new(1, 4, 1, 1)), 1.0, 0.0);
        assert!(matches!(
            g.batch_norm_train(xv, gv, bv, 1e-5),
            Err(Error::DegenerateBatchNorm)
        ));
        let rm = Tensor::zeros(Shape::new(1, 4, 1, 1));
        let rv = Tensor::ones(Shape::new(1, 4, 1, 1));
        assert!(g.batch_norm_eval(xv, gv, bv, &rm, &rv, 1e-5).is_ok());
    }

    #[test]
    fn channel_count_must_match() {
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::<f64>::zeros(Shape::new(2, 4, 2, 2)), false);
        let gv = g.leaf(Tensor::ones(Shape::new(1, 3, 1, 1)), false);
        let bv = g.leaf(Tensor::zeros(Shape::new(1, 4, 1, 1)), false);
        assert!(matches!(
            g.batch_norm_train(xv, gv, bv, 1e-5),
            Err(Error::ChannelMismatch { .. })
        ));
    }
}
