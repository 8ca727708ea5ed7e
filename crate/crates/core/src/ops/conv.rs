//! Stride-1 grouped 2-D convolution without bias.
//!
//! Each output element accumulates its products in `(in_channel, ky, kx)`
//! order starting from zero. Work is split over samples only, and weight
//! gradients are reduced over fixed-size sample chunks in index order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Samples per weight-gradient partial sum.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub out_c: usize,
    pub groups: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub h: usize,
    pub w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(x: Shape, w: Shape, groups: usize, padding: (usize, usize)) -> Result<Self> {
        if groups == 0 || x.c % groups != 0 {
            return Err(Error::invalid(format!(
                "groups {groups} does not divide {} input channels",
                x.c
            )));
        }
        if w.n % groups != 0 {
            return Err(Error::invalid(format!(
                "groups {groups} does not divide {} output channels",
                w.n
            )));
        }
        if w.c != x.c / groups {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: w.c * groups,
                found: x.c,
            });
        }
        let (ph, pw) = padding;
        if x.h + 2 * ph < w.h || x.w + 2 * pw < w.w {
            return Err(Error::invalid("kernel larger than padded input"));
        }
        Ok(Self {
            in_c: x.c,
            out_c: w.n,
            groups,
            kh: w.h,
            kw: w.w,
            pad_h: ph,
            pad_w: pw,
            h: x.h,
            w: x.w,
            out_h: x.h + 2 * ph - w.h + 1,
            out_w: x.w + 2 * pw - w.w + 1,
        })
    }

    fn cin_g(&self) -> usize {
        self.in_c / self.groups
    }

    fn cout_g(&self) -> usize {
        self.out_c / self.groups
    }

    /// Rows of the unfolded input for one group.
    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1×1 unpadded kernel reads the input planes directly.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad_h == 0 && self.pad_w == 0
    }

    fn out_shape(&self, n: usize) -> Shape {
        Shape::new(n, self.out_c, self.out_h, self.out_w)
    }
}

impl<T: Element> Graph<T> {
    /// Convolves `x` with kernel `w` shaped `(out, in/groups, kh, kw)`.
    pub fn conv2d(&mut self, x: Var, w: Var, groups: usize, padding: (usize, usize)) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(w), groups, padding)?;
        let out = forward(self.value(x), self.value(w), &geom);
        self.push(out, Op::Conv2d { x, w, geom }, "conv2d")
    }
}

/// Unfolds channels `c0 .. c0 + cin_g` of one sample into a `K × P` matrix.
fn im2col<T: Element>(x: &[T], geom: &ConvGeometry, c0: usize, col: &mut [T]) {
    let (h, w, oh, ow) = (geom.h, geom.w, geom.out_h, geom.out_w);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..geom.cin_g() {
        let plane = &x[(c0 + ci) * h * w..(c0 + ci + 1) * h * w];
        for ky in 0..geom.kh {
            for kx in 0..geom.kw {
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - geom.pad_h as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - geom.pad_w as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a `K × P` matrix back onto channels `c0 ..` of one sample.
fn col2im<T: Element>(col: &[T], geom: &ConvGeometry, c0: usize, dx: &mut [T]) {
    let (h, w, oh, ow) = (geom.h, geom.w, geom.out_h, geom.out_w);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..geom.cin_g() {
        let plane = &mut dx[(c0 + ci) * h * w..(c0 + ci + 1) * h * w];
        for ky in 0..geom.kh {
            for kx in 0..geom.kw {
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - geom.pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - geom.pad_w as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] = line[ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[inline]
fn axpy<T: Element>(a: T, x: &[T], y: &mut [T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y = *y + a * x;
    }
}

/// Dot product with eight fixed interleaved partial sums.
#[inline]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut s = T::zero();
    for v in acc {
        s = s + v;
    }
    for (&x, &y) in ra.iter().zip(rb) {
        s = s + x * y;
    }
    s
}

fn forward_sample<T: Element>(x: &[T], w: &[T], geom: &ConvGeometry, out: &mut [T], col: &mut Vec<T>) {
    let (k, p) = (geom.k(), geom.p());
    out.fill(T::zero());
    for g in 0..geom.groups {
        let c0 = g * geom.cin_g();
        let cols: &[T] = if geom.is_pointwise() {
            &x[c0 * p..(c0 + geom.cin_g()) * p]
        } else {
            col.resize(k * p, T::zero());
            im2col(x, geom, c0, col);
            col
        };
        for co in g * geom.cout_g()..(g + 1) * geom.cout_g() {
            let o = &mut out[co * p..(co + 1) * p];
            let wrow = &w[co * k..(co + 1) * k];
            for (kk, &wv) in wrow.iter().enumerate() {
                axpy(wv, &cols[kk * p..(kk + 1) * p], o);
            }
        }
    }
}

pub(crate) fn forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, geom: &ConvGeometry) -> Tensor<T> {
    let n = x.shape().n;
    let out_shape = geom.out_shape(n);
    let mut out = vec![T::zero(); out_shape.len()];
    let in_sample = x.shape().sample();
    let out_sample = out_shape.sample();
    if out_sample > 0 {
        out.par_chunks_mut(out_sample)
            .zip(x.data().par_chunks(in_sample.max(1)))
            .for_each_init(Vec::new, |col, (o, xs)| forward_sample(xs, w.data(), geom, o, col));
    }
    Tensor::new(out_shape, out).expect("conv output sized from geometry")
}

/// Returns `(dx, dw)`, each computed only when requested.
pub(crate) fn backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    geom: &ConvGeometry,
    dy: &Tensor<T>,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    if !want_dx && !want_dw {
        return (None, None);
    }
    let xs = x.shape();
    let (k, p) = (geom.k(), geom.p());
    let in_sample = xs.sample();
    let out_sample = dy.shape().sample();
    let mut dx = vec![T::zero(); if want_dx { xs.len() } else { 0 }];
    let wlen = w.len();

    let chunk_job = |xc: &[T], dyc: &[T], dxc: Option<&mut [T]>| -> Vec<T> {
        let mut dw = vec![T::zero(); if want_dw { wlen } else { 0 }];
        let mut col = vec![T::zero(); if geom.is_pointwise() { 0 } else { k * p }];
        let mut dcol = vec![T::zero(); k * p];
        let mut dxc = dxc;
        for s in 0..xc.len() / in_sample {
            let xs_ = &xc[s * in_sample..(s + 1) * in_sample];
            let dys = &dyc[s * out_sample..(s + 1) * out_sample];
            for g in 0..geom.groups {
                let c0 = g * geom.cin_g();
                let cols: &[T] = if geom.is_pointwise() {
                    &xs_[c0 * p..(c0 + geom.cin_g()) * p]
                } else {
                    im2col(xs_, geom, c0, &mut col);
                    &col
                };
                let cos = g * geom.cout_g()..(g + 1) * geom.cout_g();
                if want_dw {
                    for co in cos.clone() {
                        let d = &dys[co * p..(co + 1) * p];
                        for kk in 0..k {
                            dw[co * k + kk] = dw[co * k + kk] + dot(d, &cols[kk * p..(kk + 1) * p]);
                        }
                    }
                }
                if let Some(dxs) = dxc.as_deref_mut() {
                    let dxs = &mut dxs[s * in_sample..(s + 1) * in_sample];
                    dcol.fill(T::zero());
                    for co in cos {
                        let d = &dys[co * p..(co + 1) * p];
                        for kk in 0..k {
                            axpy(w.data()[co * k + kk], d, &mut dcol[kk * p..(kk + 1) * p]);
                        }
                    }
                    if geom.is_pointwise() {
                        for (a, &b) in dxs[c0 * p..(c0 + geom.cin_g()) * p].iter_mut().zip(&dcol) {
                            *a = *a + b;
                        }
                    } else {
                        col2im(&dcol, geom, c0, dxs);
                    }
                }
            }
        }
        dw
    };

    let xchunks = x.data().par_chunks(GRAD_CHUNK * in_sample);
    let dychunks = dy.data().par_chunks(GRAD_CHUNK * out_sample);
    let partials: Vec<Vec<T>> = if want_dx {
        xchunks
            .zip(dychunks)
            .zip(dx.par_chunks_mut(GRAD_CHUNK * in_sample))
            .map(|((xc, dyc), dxc)| chunk_job(xc, dyc, Some(dxc)))
            .collect()
    } else {
        xchunks
            .zip(dychunks)
            .map(|(xc, dyc)| chunk_job(xc, dyc, None))
            .collect()
    };

    let dw = want_dw.then(|| {
        let mut acc = vec![T::zero(); wlen];
        for part in &partials {
            for (a, &b) in acc.iter_mut().zip(part) {
                *a = *a + b;
            }
        }
        Tensor::new(w.shape(), acc).expect("weight gradient matches weight shape")
    });
    let dx = want_dx.then(|| Tensor::new(xs, dx).expect("input gradient matches input shape"));
    (dx, dw)
}
