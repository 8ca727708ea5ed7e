//! Fractional rescaling by bilinear interpolation on a uniform sampling grid.
//!
//! Interpolation is evaluated as two nested lerps, `a + fx·(b − a)` per row
//! and then across rows, so constant planes are reproduced exactly and a
//! zero fraction selects its sample exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// How output pixels map onto input coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridAlignment {
    /// `src = (i + 0.5)·(in/out) − 0.5`, clamped to `[0, in − 1]`.
    #[default]
    HalfPixel,
    /// `src = i·(in − 1)/(out − 1)`; first and last pixels coincide.
    Corners,
}

/// One output coordinate along an axis: the two neighbouring input indices
/// and the weight of the upper one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSample {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResizeGrid {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub alignment: GridAlignment,
    pub rows: Vec<AxisSample>,
    pub cols: Vec<AxisSample>,
}

/// Continuous source coordinate of output index `i`, before clamping.
pub fn source_coordinate(i: usize, in_len: usize, out_len: usize, alignment: GridAlignment) -> f64 {
    match alignment {
        GridAlignment::HalfPixel => (i as f64 + 0.5) * (in_len as f64 / out_len as f64) - 0.5,
        GridAlignment::Corners if out_len == 1 => 0.0,
        GridAlignment::Corners => (i * (in_len - 1)) as f64 / (out_len - 1) as f64,
    }
}

fn axis(in_len: usize, out_len: usize, alignment: GridAlignment) -> Vec<AxisSample> {
    let last = (in_len - 1) as f64;
    (0..out_len)
        .map(|i| {
            let src = source_coordinate(i, in_len, out_len, alignment).clamp(0.0, last);
            let lo = src.floor() as usize;
            AxisSample {
                lo,
                hi: (lo + 1).min(in_len - 1),
                frac: src - lo as f64,
            }
        })
        .collect()
}

impl ResizeGrid {
    pub fn new(in_hw: (usize, usize), out_hw: (usize, usize), alignment: GridAlignment) -> Result<Self> {
        let ((in_h, in_w), (out_h, out_w)) = (in_hw, out_hw);
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::invalid(format!(
                "resize extents must be positive: {in_h}x{in_w} -> {out_h}x{out_w}"
            )));
        }
        Ok(Self {
            in_h,
            in_w,
            out_h,
            out_w,
            alignment,
            rows: axis(in_h, out_h, alignment),
            cols: axis(in_w, out_w, alignment),
        })
    }

    /// Bilinear weights of `(lo,lo), (lo,hi), (hi,lo), (hi,hi)` at an output pixel.
    pub fn weights(&self, oy: usize, ox: usize) -> [f64; 4] {
        let (fy, fx) = (self.rows[oy].frac, self.cols[ox].frac);
        [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx]
    }
}

impl<T: Element> Graph<T> {
    pub fn resize(&mut self, x: Var, out_hw: (usize, usize), alignment: GridAlignment) -> Result<Var> {
        let s = self.shape(x);
        let grid = Arc::new(ResizeGrid::new((s.h, s.w), out_hw, alignment)?);
        let out = forward(self.value(x), &grid);
        self.push(out, Op::Resize { x, grid }, "bilinear_resize")
    }
}

fn forward<T: Element>(x: &Tensor<T>, grid: &ResizeGrid) -> Tensor<T> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, grid.out_h, grid.out_w);
    let fx: Vec<T> = grid.cols.iter().map(|a| T::from_f64_lossy(a.frac)).collect();
    let mut out = Vec::with_capacity(out_shape.len());
    for plane in x.data().chunks(s.plane()) {
        for r in &grid.rows {
            let fy = T::from_f64_lossy(r.frac);
            let top = &plane[r.lo * s.w..(r.lo + 1) * s.w];
            let bot = &plane[r.hi * s.w..(r.hi + 1) * s.w];
            for (c, &fx) in grid.cols.iter().zip(&fx) {
                let t = top[c.lo] + fx * (top[c.hi] - top[c.lo]);
                let b = bot[c.lo] + fx * (bot[c.hi] - bot[c.lo]);
                out.push(t + fy * (b - t));
            }
        }
    }
    Tensor::new(out_shape, out).expect("resize output sized from grid")
}

pub(crate) fn backward<T: Element>(grid: &ResizeGrid, x_shape: Shape, g: &Tensor<T>) -> Tensor<T> {
    let one = T::one();
    let fx: Vec<T> = grid.cols.iter().map(|a| T::from_f64_lossy(a.frac)).collect();
    let mut dx = Tensor::zeros(x_shape);
    let w = x_shape.w;
    let out_plane = grid.out_h * grid.out_w;
    for (dplane, gplane) in dx
        .data_mut()
        .chunks_mut(x_shape.plane())
        .zip(g.data().chunks(out_plane))
    {
        for (oy, r) in grid.rows.iter().enumerate() {
            let fy = T::from_f64_lossy(r.frac);
            for (ox, (c, &fx)) in grid.cols.iter().zip(&fx).enumerate() {
                let go = gplane[oy * grid.out_w + ox];
                let (gt, gb) = ((one - fy) * go, fy * go);
                dplane[r.lo * w + c.lo] = dplane[r.lo * w + c.lo] + (one - fx) * gt;
                dplane[r.lo * w + c.hi] = dplane[r.lo * w + c.hi] + fx * gt;
                dplane[r.hi * w + c.lo] = dplane[r.hi * w + c.lo] + (one - fx) * gb;
                dplane[r.hi * w + c.hi] = dplane[r.hi * w + c.hi] + fx * gb;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(x: Tensor<f64>, out: (usize, usize), a: GridAlignment) -> Tensor<f64> {
        let mut g = Graph::new();
        let v = g.leaf(x, false);
        let y = g.resize(v, out, a).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn same_extents_is_identity() {
        let x = Tensor::from_fn(Shape::new(2, 3, 5, 7), |n, c, h, w| {
            ((n * 31 + c * 17 + h * 5 + w) as f64).sin()
        });
        for a in [GridAlignment::HalfPixel, GridAlignment::Corners] {
            assert_eq!(run(x.clone(), (5, 7), a), x);
        }
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert!(ResizeGrid::new((4, 4), (0, 2), GridAlignment::HalfPixel).is_err());
    }

    #[test]
    fn corner_alignment_keeps_endpoints() {
        let x = Tensor::from_fn(Shape::new(1, 1, 1, 5), |_, _, _, w| (w * w) as f64);
        let y = run(x, (1, 3), GridAlignment::Corners);
        assert_eq!(y.data(), &[0.0, 4.0, 16.0]);
    }

    proptest! {
        #[test]
        fn weights_are_a_partition_of_unity(
            ih in 1usize..20, iw in 1usize..20, oh in 1usize..20, ow in 1usize..20, corners: bool,
        ) {
            let a = if corners { GridAlignment::Corners } else { GridAlignment::HalfPixel };
            let grid = ResizeGrid::new((ih, iw), (oh, ow), a).unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    let w = grid.weights(oy, ox);
                    prop_assert!(w.iter().all(|&v| v >= 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            for axis in [&grid.rows, &grid.cols] {
                for pair in axis.windows(2) {
                    prop_assert!(pair[0].lo as f64 + pair[0].frac <= pair[1].lo as f64 + pair[1].frac);
                }
            }
        }

        #[test]
        fn constants_are_fixed_points(
            ih in 1usize..12, iw in 1usize..12, oh in 1usize..12, ow in 1usize..12, v in -1e3f64..1e3,
        ) {
            let y = run(Tensor::full(Shape::new(1, 2, ih, iw), v), (oh, ow), GridAlignment::HalfPixel);
            prop_assert!(y.data().iter().all(|&o| o == v));
        }

        #[test]
        fn backward_conserves_mass(ih in 1usize..10, iw in 1usize..10, oh in 1usize..10, ow in 1usize..10) {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(Tensor::zeros(Shape::new(1, 1, ih, iw)), true);
            let y = g.resize(x, (oh, ow), GridAlignment::HalfPixel).unwrap();
            let s = g.sum(y).unwrap();
            let grads = g.backward(s).unwrap();
            let mass = grads.get(x).unwrap().sum();
            prop_assert!((mass - (oh * ow) as f64).abs() < 1e-9);
        }
    }
}
