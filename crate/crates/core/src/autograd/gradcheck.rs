use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Worst-case agreement between analytic and central-difference gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckReport {
    /// max over elements of |analytic − numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    /// Which input and element produced the maximum.
    pub worst: Option<(usize, usize)>,
    pub elements: usize,
}

/// Compares the gradients of a scalar-valued `f` against central differences
/// with step `eps`, probing every element of every input.
///
/// `f` receives a fresh graph and one leaf per input and must return a
/// 1×1×1×1 loss. Runs in 64-bit precision only.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("gradcheck step must be positive"));
    }
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if !v.shape().is_scalar() {
            return Err(Error::NonScalarLoss(v.shape()));
        }
        Ok(v.data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: None,
        elements: 0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for e in 0..inputs[i].len() {
            let x0 = inputs[i].data()[e];
            probe[i].data_mut()[e] = x0 + eps;
            let plus = eval(&probe)?;
            probe[i].data_mut()[e] = x0 - eps;
            let minus = eval(&probe)?;
            probe[i].data_mut()[e] = x0;
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::NonFinite {
                    op: "gradcheck",
                    index: e,
                });
            }
            let a = analytic.data()[e];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.elements += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, e));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn identity_has_zero_error() {
        let x = Tensor::from_fn(Shape::new(1, 2, 2, 2), |_, c, h, w| (c + h * 2 + w) as f64 * 0.3);
        let r = gradcheck(|g, v| g.sum(v[0]), &[x], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.elements, 8);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu at exactly zero: analytic subgradient 0, numeric 0.5
        let x = Tensor::new(Shape::new(1, 1, 1, 1), vec![0.0]).unwrap();
        let r = gradcheck(
            |g, v| {
                let r = g.relu(v[0])?;
                g.sum(r)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-9);
    }
}
