//! Momentum SGD with decoupled handling of non-decayed parameters.

use ecn_core::{Element, ParamKind, ParamStore, Tensor};

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One velocity per trainable entry of the store, indexed like the store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub velocities: Vec<Option<Tensor<T>>>,
}

impl<T: Element> OptimState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Self {
            velocities: store
                .iter()
                .map(|(_, p)| p.kind.is_trainable().then(|| Tensor::zeros(p.value.shape())))
                .collect(),
        }
    }
}

/// `v ← momentum·v + g + decay·p`, `p ← p − lr·v`. Batch-norm affine terms
/// and biases take no decay. Nothing changes if any gradient is non-finite.
pub fn sgd_step<T: Element>(store: &mut ParamStore<T>, state: &mut OptimState<T>, cfg: SgdConfig) -> Result<()> {
    if let Some((_, p)) = store.iter().find(|(_, p)| p.kind.is_trainable() && !p.grad.is_finite()) {
        return Err(TrainError::NonFiniteGradient { param: p.name.clone() });
    }
    let lr = T::from_f64_lossy(cfg.lr);
    let m = T::from_f64_lossy(cfg.momentum);
    for (p, v) in store.iter_mut().zip(&mut state.velocities) {
        let Some(v) = v.as_mut() else { continue };
        let wd = T::from_f64_lossy(if p.kind == ParamKind::Weight {
            cfg.weight_decay
        } else {
            0.0
        });
        for ((w, vel), &g) in p.value.data_mut().iter_mut().zip(v.data_mut()).zip(p.grad.data()) {
            *vel = m * *vel + g + wd * *w;
            *w = *w - lr * *vel;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecn_core::{ParamId, Shape};

    fn store(grad: f64) -> (ParamStore<f64>, ParamId, ParamId, ParamId) {
        let mut s = ParamStore::new();
        let s1 = Shape::new(1, 3, 1, 1);
        let w = s.add("w", ParamKind::Weight, Tensor::full(s1, 2.0));
        let b = s.add("b", ParamKind::NoDecay, Tensor::full(s1, 2.0));
        let r = s.add("r", ParamKind::Buffer, Tensor::full(s1, 2.0));
        for p in s.iter_mut() {
            p.grad.fill(grad);
        }
        (s, w, b, r)
    }

    fn cfg(lr: f64, momentum: f64, weight_decay: f64) -> SgdConfig {
        SgdConfig {
            lr,
            momentum,
            weight_decay,
        }
    }

    #[test]
    fn vanilla_step_subtracts_lr_times_grad() {
        let (mut s, w, b, r) = store(0.5);
        let mut st = OptimState::new(&s);
        sgd_step(&mut s, &mut st, cfg(0.1, 0.0, 0.0)).unwrap();
        assert_eq!(s.value(w).data()[0], 2.0 - 0.1 * 0.5);
        assert_eq!(s.value(b).data()[0], 2.0 - 0.1 * 0.5);
        assert_eq!(s.value(r).data()[0], 2.0);
    }

    #[test]
    fn zero_grads_leave_params_and_decay_velocity() {
        let (mut s, w, _, _) = store(1.0);
        let mut st = OptimState::new(&s);
        sgd_step(&mut s, &mut st, cfg(0.1, 0.9, 0.0)).unwrap();
        let after = s.clone();
        s.zero_grads();
        sgd_step(&mut s, &mut st, cfg(0.0, 0.9, 0.0)).unwrap();
        assert_eq!(s.value(w), after.value(w));
        assert_eq!(st.velocities[w.index()].as_ref().unwrap().data()[0], 0.9);
        sgd_step(&mut s, &mut st, cfg(0.0, 0.9, 0.0)).unwrap();
        assert_eq!(st.velocities[w.index()].as_ref().unwrap().data()[0], 0.9 * 0.9);
    }

    #[test]
    fn two_momentum_steps_move_by_two_point_nine() {
        let g = 0.25;
        let (mut s, w, _, _) = store(g);
        let mut st = OptimState::new(&s);
        for _ in 0..2 {
            sgd_step(&mut s, &mut st, cfg(0.1, 0.9, 0.0)).unwrap();
        }
        let moved = 2.0 - s.value(w).data()[0];
        assert!((moved - 0.1 * g * (1.0 + 1.9)).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let (mut s, ..) = store(3.0);
        let before = s.clone();
        let mut st = OptimState::new(&s);
        sgd_step(&mut s, &mut st, cfg(0.0, 0.9, 1e-4)).unwrap();
        for ((_, a), (_, b)) in s.iter().zip(before.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn decay_touches_only_weights() {
        let run = |wd| {
            let (mut s, w, b, _) = store(0.5);
            let mut st = OptimState::new(&s);
            sgd_step(&mut s, &mut st, cfg(0.1, 0.9, wd)).unwrap();
            (s.value(w).data()[0], s.value(b).data()[0])
        };
        let (w0, b0) = run(0.0);
        let (w1, b1) = run(0.5);
        assert_eq!(b0, b1);
        assert!((w0 - w1 - 0.1 * 0.5 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_the_step() {
        let (mut s, _, b, _) = store(1.0);
        s.get_mut(b).grad.data_mut()[1] = f64::NAN;
        let before = s.clone();
        let mut st = OptimState::new(&s);
        let err = sgd_step(&mut s, &mut st, cfg(0.1, 0.9, 0.0)).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { ref param } if param == "b"));
        for ((_, a), (_, b)) in s.iter().zip(before.iter()) {
            assert_eq!(a.value, b.value);
        }
        assert_eq!(st, OptimState::new(&before));
    }
}
