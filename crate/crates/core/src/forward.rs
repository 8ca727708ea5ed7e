//! Per-pass state shared by blocks and layers: the graph being recorded, the
//! parameter store, the train/eval switch and the dropout generator.
//!
//! Batch-norm running statistics are not touched during the pass. Train-mode
//! sites record their batch statistics here and [`Forward::finish`] hands them
//! back for [`apply_stat_updates`] once the step is complete.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::ops::BatchStats;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter handles of one batch-norm site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BnSite {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BnSite {
    /// Registers `{prefix}.gamma`, `.beta`, `.running_mean`, `.running_var`.
    pub fn register<T: Element>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Self {
        let s = Shape::new(1, channels, 1, 1);
        Self {
            gamma: store.add(format!("{prefix}.gamma"), ParamKind::NoDecay, Tensor::ones(s)),
            beta: store.add(format!("{prefix}.beta"), ParamKind::NoDecay, Tensor::zeros(s)),
            running_mean: store.add(format!("{prefix}.running_mean"), ParamKind::Buffer, Tensor::zeros(s)),
            running_var: store.add(format!("{prefix}.running_var"), ParamKind::Buffer, Tensor::ones(s)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StatUpdate<T> {
    pub site: BnSite,
    pub stats: BatchStats<T>,
}

pub struct Forward<'a, T: Element> {
    pub graph: Graph<T>,
    pub params: &'a ParamStore<T>,
    pub mode: Mode,
    pub eps: T,
    rng: Option<&'a mut dyn RngCore>,
    updates: Vec<StatUpdate<T>>,
}

impl<'a, T: Element> Forward<'a, T> {
    pub fn new(params: &'a ParamStore<T>, mode: Mode, eps: f64) -> Self {
        Self {
            graph: Graph::new(),
            params,
            mode,
            eps: T::from_f64_lossy(eps),
            rng: None,
            updates: Vec::new(),
        }
    }

    /// Continues recording on an existing graph.
    pub fn with_graph(mut self, graph: Graph<T>) -> Self {
        self.graph = graph;
        self
    }

    /// Supplies the generator used by train-mode dropout.
    pub fn with_rng(mut self, rng: &'a mut dyn RngCore) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.graph.param(self.params, id)
    }

    pub fn batch_norm(&mut self, x: Var, site: &BnSite) -> Result<Var> {
        let gamma = self.param(site.gamma);
        let beta = self.param(site.beta);
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.graph.batch_norm_train(x, gamma, beta, self.eps)?;
                self.updates.push(StatUpdate { site: *site, stats });
                Ok(y)
            }
            Mode::Eval => self.graph.batch_norm_eval(
                x,
                gamma,
                beta,
                self.params.value(site.running_mean),
                self.params.value(site.running_var),
                self.eps,
            ),
        }
    }

    /// Identity in eval mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let rng = self
            .rng
            .as_deref_mut()
            .ok_or_else(|| Error::invalid("train-mode dropout needs a random generator"))?;
        self.graph.dropout(x, rate, rng)
    }

    /// Ends the pass, returning the graph and the pending running-stat updates.
    pub fn finish(self) -> (Graph<T>, Vec<StatUpdate<T>>) {
        (self.graph, self.updates)
    }
}

/// Folds batch statistics into running averages:
/// `running ← (1 − momentum)·running + momentum·batch`.
pub fn apply_stat_updates<T: Element>(store: &mut ParamStore<T>, updates: &[StatUpdate<T>], momentum: f64) {
    let m = T::from_f64_lossy(momentum);
    let keep = T::one() - m;
    for u in updates {
        for (id, batch) in [(u.site.running_mean, &u.stats.mean), (u.site.running_var, &u.stats.var)] {
            for (r, &b) in store.value_mut(id).data_mut().iter_mut().zip(batch) {
                *r = keep * *r + m * b;
            }
        }
    }
}
