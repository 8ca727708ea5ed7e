//! Named parameters and buffers with explicitly zeroed gradient accumulators.

use crate::autograd::{Gradients, Graph};
use crate::error::Result;
use crate::tensor::{Element, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the optimizer treats an entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Trainable and subject to weight decay (convolution and linear weights).
    Weight,
    /// Trainable, excluded from weight decay (batch-norm affine, linear bias).
    NoDecay,
    /// Not trainable (batch-norm running statistics).
    Buffer,
}

impl ParamKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamKind::Buffer)
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Owns every parameter and buffer of a model, in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<Parameter<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Parameter {
            name: name.into(),
            kind,
            value,
            grad,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].kind.is_trainable()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.entries.iter_mut()
    }

    /// Count of trainable scalars, walking every instantiated tensor.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.kind.is_trainable())
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(T::zero());
        }
    }

    /// Adds the gradients of every parameter bound on `graph` into the
    /// accumulators. Gradients are never cleared implicitly.
    pub fn accumulate(&mut self, graph: &Graph<T>, grads: &Gradients<T>) -> Result<()> {
        let mut bound: Vec<_> = graph.bound_params().collect();
        bound.sort();
        for (id, var) in bound {
            if let Some(g) = grads.get(var) {
                self.entries[id.0].grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    /// Replaces a value, checking the shape is unchanged.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        value.expect_shape(self.entries[id.0].value.shape())?;
        self.entries[id.0].value = value;
        Ok(())
    }

    pub fn shape(&self, id: ParamId) -> Shape {
        self.entries[id.0].value.shape()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_are_not_counted() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", ParamKind::Weight, Tensor::zeros(Shape::new(4, 3, 3, 3)));
        s.add("g", ParamKind::NoDecay, Tensor::zeros(Shape::new(1, 4, 1, 1)));
        s.add("rm", ParamKind::Buffer, Tensor::zeros(Shape::new(1, 4, 1, 1)));
        assert_eq!(s.trainable_count(), 108 + 4);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("w", ParamKind::Weight, Tensor::full(Shape::new(1, 1, 1, 2), 2.0));
        for _ in 0..2 {
            let mut g = Graph::new();
            let w = g.param(&s, id);
            let l = g.sum(w).unwrap();
            let grads = g.backward(l).unwrap();
            s.accumulate(&g, &grads).unwrap();
        }
        assert_eq!(s.grad(id).data(), &[2.0, 2.0]);
        s.zero_grads();
        assert_eq!(s.grad(id).data(), &[0.0, 0.0]);
    }
}
