use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

impl<T: Element> Graph<T> {
    /// Affine map over channels: `y[n, o] = Σ_i x[n, i]·w[o, i] + b[o]`.
    ///
    /// `x` is `N×I×1×1`, `w` is `O×I×1×1` and `b` is `1×O×1×1`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.h != 1 || xs.w != 1 {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(xs.n, xs.c, 1, 1),
                found: xs,
            });
        }
        if ws != Shape::new(ws.n, xs.c, 1, 1) {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(ws.n, xs.c, 1, 1),
                found: ws,
            });
        }
        if bs != Shape::new(1, ws.n, 1, 1) {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(1, ws.n, 1, 1),
                found: bs,
            });
        }
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = Vec::with_capacity(xs.n * ws.n);
        for row in xd.chunks(xs.c) {
            for (o, wrow) in wd.chunks(xs.c).enumerate() {
                let mut acc = T::zero();
                for (&xi, &wi) in row.iter().zip(wrow) {
                    acc = acc + xi * wi;
                }
                out.push(acc + bd[o]);
            }
        }
        let out = Tensor::new(Shape::new(xs.n, ws.n, 1, 1), out)?;
        self.push(out, Op::Linear { x, w, b }, "linear")
    }
}

/// Returns `(dx, dw, db)`.
pub(crate) fn backward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, g: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (xs, ws) = (x.shape(), w.shape());
    let (i_n, o_n) = (xs.c, ws.n);
    let mut dx = vec![T::zero(); xs.len()];
    let mut dw = vec![T::zero(); ws.len()];
    let mut db = vec![T::zero(); o_n];
    for n in 0..xs.n {
        let xr = &x.data()[n * i_n..(n + 1) * i_n];
        let gr = &g.data()[n * o_n..(n + 1) * o_n];
        let dxr = &mut dx[n * i_n..(n + 1) * i_n];
        for (o, &go) in gr.iter().enumerate() {
            db[o] = db[o] + go;
            let wr = &w.data()[o * i_n..(o + 1) * i_n];
            let dwr = &mut dw[o * i_n..(o + 1) * i_n];
            for i in 0..i_n {
                dxr[i] = dxr[i] + go * wr[i];
                dwr[i] = dwr[i] + go * xr[i];
            }
        }
    }
    (
        Tensor::new(xs, dx).expect("matches input"),
        Tensor::new(ws, dw).expect("matches weights"),
        Tensor::new(Shape::new(1, o_n, 1, 1), db).expect("one per output"),
    )
}
