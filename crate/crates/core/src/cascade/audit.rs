use super::plan::NetworkPlan;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Element;

/// Trainable scalars per component, counted from instantiated tensors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub stem: usize,
    pub layers: Vec<usize>,
    pub head: usize,
    pub total: usize,
}

fn component_of(name: &str, depth: usize) -> Option<usize> {
    // 0 = stem, 1..=depth = layers, depth + 1 = head
    if name.starts_with("stem.") {
        return Some(0);
    }
    if name.starts_with("head.") {
        return Some(depth + 1);
    }
    let rest = name.strip_prefix("layers.")?;
    let (idx, _) = rest.split_once('.')?;
    idx.parse().ok().filter(|i| (1..=depth).contains(i))
}

fn component_name(i: usize, depth: usize) -> String {
    match i {
        0 => "stem".into(),
        i if i == depth + 1 => "head".into(),
        i => format!("layer {i}"),
    }
}

/// Counts every trainable element of `store` by component and compares the
/// counts with the plan's closed forms, reporting the first disagreement.
pub fn audit_params<T: Element>(plan: &NetworkPlan, store: &ParamStore<T>) -> Result<AuditReport> {
    let depth = plan.depth();
    let mut found = vec![0usize; depth + 2];
    for (_, p) in store.iter().filter(|(_, p)| p.kind.is_trainable()) {
        let Some(i) = component_of(&p.name, depth) else {
            return Err(Error::AuditMismatch {
                component: format!("unassigned parameter {}", p.name),
                expected: 0,
                found: p.value.len(),
            });
        };
        found[i] += p.value.len();
    }
    let expected: Vec<usize> = std::iter::once(plan.stem.params)
        .chain(plan.layers.iter().map(|l| l.params))
        .chain(std::iter::once(plan.head.params()))
        .collect();
    if let Some(i) = (0..expected.len()).find(|&i| expected[i] != found[i]) {
        return Err(Error::AuditMismatch {
            component: component_name(i, depth),
            expected: expected[i],
            found: found[i],
        });
    }
    let total: usize = found.iter().sum();
    if total != plan.total_params || total != store.trainable_count() {
        return Err(Error::AuditMismatch {
            component: "total".into(),
            expected: plan.total_params,
            found: total,
        });
    }
    Ok(AuditReport {
        stem: found[0],
        layers: found[1..=depth].to_vec(),
        head: found[depth + 1],
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{plan_network, CascadeConfig, Ecn};
    use super::*;
    use crate::blocks::BlockKind;
    use crate::params::ParamKind;
    use crate::tensor::{Shape, Tensor};

    fn model() -> Ecn<f32> {
        let cfg = CascadeConfig::new(BlockKind::Double, 16, "1/2".parse().unwrap(), 10);
        Ecn::new(plan_network(&cfg).unwrap(), 0).unwrap()
    }

    #[test]
    fn counts_each_component() {
        let m = model();
        let r = audit_params(&m.plan, &m.store).unwrap();
        assert_eq!(r.stem, 432);
        assert_eq!(r.layers, [13920, 34720, 64736]);
        assert_eq!(r.head, 778);
        assert_eq!(r.total, 114586);
    }

    #[test]
    fn names_the_first_divergent_component() {
        let mut m = model();
        m.store.add(
            "layers.2.block.extra",
            ParamKind::NoDecay,
            Tensor::zeros(Shape::new(1, 3, 1, 1)),
        );
        m.store
            .add("head.extra", ParamKind::NoDecay, Tensor::zeros(Shape::new(1, 1, 1, 1)));
        match audit_params(&m.plan, &m.store) {
            Err(Error::AuditMismatch {
                component,
                expected,
                found,
            }) => assert_eq!((component.as_str(), expected, found), ("layer 2", 34720, 34723)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn buffers_are_ignored_and_strays_reported() {
        let mut m = model();
        m.store.add(
            "head.extra_stat",
            ParamKind::Buffer,
            Tensor::zeros(Shape::new(1, 9, 1, 1)),
        );
        assert!(audit_params(&m.plan, &m.store).is_ok());
        m.store
            .add("orphan", ParamKind::Weight, Tensor::zeros(Shape::new(1, 1, 1, 1)));
        assert!(matches!(
            audit_params(&m.plan, &m.store),
            Err(Error::AuditMismatch { .. })
        ));
    }
}
