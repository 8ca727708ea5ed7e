//! Channel slicing and concatenation along the `C` axis.

use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

impl<T: Element> Graph<T> {
    /// Channels `start .. start + len` of `x`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x);
        if len == 0 || start + len > xs.c {
            return Err(Error::invalid(format!(
                "channel slice {start}..{} out of range for {} channels",
                start + len,
                xs.c
            )));
        }
        let out_shape = Shape::new(xs.n, len, xs.h, xs.w);
        let plane = xs.plane();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(out_shape.len());
        for n in 0..xs.n {
            let base = xs.offset(n, start, 0, 0);
            out.extend_from_slice(&src[base..base + len * plane]);
        }
        self.push(
            Tensor::new(out_shape, out)?,
            Op::SliceChannels { x, start },
            "slice_channels",
        )
    }

    /// `[a, b]` stacked along channels.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(sa.n, sb.c, sa.h, sa.w),
                found: sb,
            });
        }
        let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(out_shape.len());
        for n in 0..sa.n {
            out.extend_from_slice(&da[n * sa.sample()..(n + 1) * sa.sample()]);
            out.extend_from_slice(&db[n * sb.sample()..(n + 1) * sb.sample()]);
        }
        self.push(
            Tensor::new(out_shape, out)?,
            Op::ConcatChannels(a, b),
            "concat_channels",
        )
    }
}

pub(crate) fn slice_backward<T: Element>(x_shape: Shape, start: usize, g: &Tensor<T>) -> Tensor<T> {
    let gs = g.shape();
    let mut dx = Tensor::zeros(x_shape);
    let chunk = gs.sample();
    for n in 0..x_shape.n {
        let base = x_shape.offset(n, start, 0, 0);
        dx.data_mut()[base..base + chunk].copy_from_slice(&g.data()[n * chunk..(n + 1) * chunk]);
    }
    dx
}

pub(crate) fn concat_backward<T: Element>(a_shape: Shape, g: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let gs = g.shape();
    let b_shape = Shape::new(gs.n, gs.c - a_shape.c, gs.h, gs.w);
    let (ca, cb) = (a_shape.sample(), b_shape.sample());
    let mut da = Vec::with_capacity(a_shape.len());
    let mut db = Vec::with_capacity(b_shape.len());
    for sample in g.data().chunks(gs.sample()) {
        da.extend_from_slice(&sample[..ca]);
        db.extend_from_slice(&sample[ca..ca + cb]);
    }
    (
        Tensor::new(a_shape, da).expect("slice sizes follow shapes"),
        Tensor::new(b_shape, db).expect("slice sizes follow shapes"),
    )
}
