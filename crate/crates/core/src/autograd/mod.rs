//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every differentiable operation in execution order.
//! Because an operation can only consume values that already exist, node
//! indices are a topological order by construction and [`Graph::backward`]
//! is a single reverse sweep over the tape.

mod gradcheck;

use std::collections::HashMap;
use std::sync::Arc;

pub use gradcheck::{gradcheck, GradcheckReport};

use crate::error::{Error, Result};
use crate::ops::{self, batchnorm::BnSaved, conv::ConvGeometry, resize::ResizeGrid};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Element, Shape, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    Scale(Var, T),
    Relu(Var),
    Sum(Var),
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    Resize {
        x: Var,
        grid: Arc<ResizeGrid>,
    },
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    SliceChannels {
        x: Var,
        start: usize,
    },
    ConcatChannels(Var, Var),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::ConcatChannels(a, b) => vec![*a, *b],
            Op::AddScalar(a) | Op::Scale(a, _) | Op::Relu(a) | Op::Sum(a) | Op::GlobalAvgPool(a) => vec![*a],
            Op::Conv2d { x, w, .. } => vec![*x, *w],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Resize { x, .. } | Op::Dropout { x, .. } | Op::SliceChannels { x, .. } => vec![*x],
            Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of executed operations. Confined to the thread that built it.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    bound: HashMap<ParamId, Var>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Records a trainable parameter as a leaf. Binding the same parameter
    /// twice returns the same node, so every use of a shared kernel feeds one
    /// gradient accumulator.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.leaf(store.value(id).clone(), store.is_trainable(id));
        self.bound.insert(id, v);
        v
    }

    /// Makes `var` stand in for parameter `id` on this graph, so a checker can
    /// perturb parameters through ordinary leaves.
    pub fn bind_param(&mut self, id: ParamId, var: Var) {
        self.bound.insert(id, var);
    }

    /// Smallest |input| over every ReLU on the tape, or `None` without ReLUs.
    pub fn relu_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.data().iter().map(|v| v.to_f64_lossy().abs()))
            .reduce(f64::min)
    }

    pub(crate) fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().map(|(&p, &v)| (p, v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        let inputs = op.inputs();
        let next = self.nodes.len();
        if let Some(bad) = inputs.iter().find(|v| v.0 >= next) {
            return Err(Error::GraphOrder(bad.0));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(next))
    }

    /// Propagates gradients from a scalar loss to every leaf that requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut sink = GradSink {
            grads: (0..self.nodes.len()).map(|_| None).collect(),
            wants: self.nodes.iter().map(|n| n.requires_grad).collect(),
        };
        let mut visited = 0;
        if self.nodes[loss.0].requires_grad {
            sink.grads[loss.0] = Some(Tensor::ones(shape));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(grad) = sink.grads[i].take() else {
                continue;
            };
            if node.op.inputs().iter().any(|v| v.0 >= i) {
                return Err(Error::GraphOrder(i));
            }
            visited += 1;
            self.backward_node(node, &grad, &mut sink)?;
        }
        Ok(Gradients {
            grads: sink.grads,
            visited,
        })
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, sink: &mut GradSink<T>) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                sink.add(*a, g.clone())?;
                sink.add(*b, g.clone())?;
            }
            Op::Mul(a, b) => {
                if sink.wants(*a) {
                    sink.add(*a, g.zip_map(val(*b), |g, y| g * y)?)?;
                }
                if sink.wants(*b) {
                    sink.add(*b, g.zip_map(val(*a), |g, x| g * x)?)?;
                }
            }
            Op::AddScalar(a) => sink.add(*a, g.clone())?,
            Op::Scale(a, s) => {
                let s = *s;
                sink.add(*a, g.map(|g| g * s))?;
            }
            Op::Relu(a) => {
                let x = val(*a);
                let zero = T::zero();
                sink.add(*a, g.zip_map(x, |g, x| if x > zero { g } else { zero })?)?;
            }
            Op::Sum(a) => {
                let g0 = g.data()[0];
                sink.add(*a, Tensor::full(val(*a).shape(), g0))?;
            }
            Op::Conv2d { x, w, geom } => {
                let (dx, dw) = ops::conv::backward(val(*x), val(*w), geom, g, sink.wants(*x), sink.wants(*w));
                if let Some(dx) = dx {
                    sink.add(*x, dx)?;
                }
                if let Some(dw) = dw {
                    sink.add(*w, dw)?;
                }
            }
            Op::BatchNorm { x, gamma, beta, saved } => {
                let (dx, dgamma, dbeta) = ops::batchnorm::backward(val(*gamma), saved, g);
                sink.add(*x, dx)?;
                sink.add(*gamma, dgamma)?;
                sink.add(*beta, dbeta)?;
            }
            Op::Resize { x, grid } => {
                sink.add(*x, ops::resize::backward(grid, val(*x).shape(), g))?;
            }
            Op::GlobalAvgPool(a) => sink.add(*a, ops::pool::backward(val(*a).shape(), g))?,
            Op::Linear { x, w, b } => {
                let (dx, dw, db) = ops::linear::backward(val(*x), val(*w), g);
                sink.add(*x, dx)?;
                sink.add(*w, dw)?;
                sink.add(*b, db)?;
            }
            Op::SoftmaxCrossEntropy { logits, probs, labels } => {
                let d = ops::loss::backward(val(*logits).shape(), probs, labels, g.data()[0]);
                sink.add(*logits, d)?;
            }
            Op::Dropout { x, mask } => {
                let mut d = g.clone();
                for (v, &m) in d.data_mut().iter_mut().zip(mask) {
                    *v = *v * m;
                }
                sink.add(*x, d)?;
            }
            Op::SliceChannels { x, start } => {
                sink.add(*x, ops::channels::slice_backward(val(*x).shape(), *start, g))?;
            }
            Op::ConcatChannels(a, b) => {
                let (da, db) = ops::channels::concat_backward(val(*a).shape(), g);
                sink.add(*a, da)?;
                sink.add(*b, db)?;
            }
        }
        Ok(())
    }
}

struct GradSink<T> {
    grads: Vec<Option<Tensor<T>>>,
    wants: Vec<bool>,
}

impl<T: Element> GradSink<T> {
    fn wants(&self, v: Var) -> bool {
        self.wants[v.0]
    }

    fn add(&mut self, v: Var, g: Tensor<T>) -> Result<()> {
        if !self.wants[v.0] {
            return Ok(());
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
}

/// Leaf gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    visited: usize,
}

impl<T: Element> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if `v` is a leaf reached by
    /// the sweep.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of recorded operations whose backward rule ran.
    pub fn visited(&self) -> usize {
        self.visited
    }
}
