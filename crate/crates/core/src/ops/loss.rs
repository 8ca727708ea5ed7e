use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

impl<T: Element> Graph<T> {
    /// Mean over the batch of `−log softmax(logits)[label]`, with the row
    /// maximum subtracted before exponentiating.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.h != 1 || s.w != 1 || labels.len() != s.n {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(labels.len(), s.c, 1, 1),
                found: s,
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= s.c) {
            return Err(Error::LabelOutOfRange { label, classes: s.c });
        }
        let mut probs = Vec::with_capacity(s.len());
        let mut total = T::zero();
        for (row, &label) in self.value(logits).data().chunks(s.c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
            let denom: T = exps.iter().copied().sum();
            total = total + (denom.ln() + max - row[label]);
            probs.extend(exps.iter().map(|&e| e / denom));
        }
        let n = T::from_usize(s.n).expect("batch fits in a float");
        let out = Tensor::scalar(total / n);
        self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            "softmax_cross_entropy",
        )
    }
}

pub(crate) fn backward<T: Element>(shape: Shape, probs: &[T], labels: &[usize], g: T) -> Tensor<T> {
    let scale = g / T::from_usize(shape.n).expect("batch fits in a float");
    let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
    for (n, &label) in labels.iter().enumerate() {
        let i = n * shape.c + label;
        d[i] = d[i] - scale;
    }
    Tensor::new(shape, d).expect("one gradient per logit")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(logits: Tensor<f64>, labels: &[usize]) -> f64 {
        let mut g = Graph::new();
        let v = g.leaf(logits, false);
        let l = g.softmax_cross_entropy(v, labels).unwrap();
        g.value(l).data()[0]
    }

    #[test]
    fn uniform_logits_cost_log_classes() {
        for c in [2, 10, 100] {
            let l = loss(Tensor::full(Shape::new(3, c, 1, 1), 0.7), &[0, 1, c - 1]);
            assert!((l - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_shrinks_monotonically_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 2.0, 5.0, 10.0, 30.0] {
            let t = Tensor::from_fn(Shape::new(1, 4, 1, 1), |_, c, _, _| if c == 2 { margin } else { 0.0 });
            let l = loss(t, &[2]);
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let t = Tensor::new(Shape::new(1, 3, 1, 1), vec![1000.0, -1000.0, 999.0]).unwrap();
        assert!((loss(t, &[0]) - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_fails() {
        let mut g = Graph::<f32>::new();
        let v = g.leaf(Tensor::zeros(Shape::new(2, 3, 1, 1)), false);
        assert!(matches!(
            g.softmax_cross_entropy(v, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }
}
