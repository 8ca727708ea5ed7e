use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

impl<T: Element> Graph<T> {
    /// Spatial mean of every plane, giving `N×C×1×1`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.plane() == 0 {
            return Err(Error::invalid("global average pooling over an empty plane"));
        }
        let area = T::from_usize(s.plane()).expect("area fits in a float");
        let out: Vec<T> = self
            .value(x)
            .data()
            .chunks(s.plane())
            .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) / area)
            .collect();
        let out = Tensor::new(Shape::new(s.n, s.c, 1, 1), out)?;
        self.push(out, Op::GlobalAvgPool(x), "global_avg_pool")
    }
}

pub(crate) fn backward<T: Element>(x_shape: Shape, g: &Tensor<T>) -> Tensor<T> {
    let area = T::from_usize(x_shape.plane()).expect("area fits in a float");
    let mut dx = Vec::with_capacity(x_shape.len());
    for &gv in g.data() {
        let v = gv / area;
        dx.extend(std::iter::repeat_n(v, x_shape.plane()));
    }
    Tensor::new(x_shape, dx).expect("one gradient per input element")
}
