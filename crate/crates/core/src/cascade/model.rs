use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{LayerPlan, NetworkPlan};
use crate::autograd::Var;
use crate::blocks::{kaiming_normal, Block};
use crate::error::{Error, Result};
use crate::forward::{BnSite, Forward, Mode};
use crate::ops::GridAlignment;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::{Element, Shape, Tensor};

/// Features of one hidden layer plus the channel index where each level ends.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureState {
    pub features: Var,
    pub level_ends: Vec<usize>,
}

/// A detached copy of a [`FeatureState`] for export.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps<T> {
    pub tensor: Tensor<T>,
    pub level_ends: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Head {
    pub bn: BnSite,
    pub weight: ParamId,
    pub bias: ParamId,
}

/// An instantiated network: a plan plus its parameters.
#[derive(Clone, Debug)]
pub struct Ecn<T> {
    pub plan: NetworkPlan,
    pub store: ParamStore<T>,
    pub stem: ParamId,
    pub blocks: Vec<Block>,
    pub head: Head,
}

/// Resize, apply the block, add its first `in_ch` channels to the resized
/// input and append the remaining `growth` channels as a new level.
pub fn cascade_layer_forward<T: Element>(
    f: &mut Forward<'_, T>,
    layer: &LayerPlan,
    block: &Block,
    alignment: GridAlignment,
    x: &FeatureState,
) -> Result<FeatureState> {
    let s = f.graph.shape(x.features);
    if s.c != layer.in_ch || (s.h, s.w) != layer.in_hw {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(s.n, layer.in_ch, layer.in_hw.0, layer.in_hw.1),
            found: s,
        });
    }
    let d = f.graph.resize(x.features, layer.out_hw, alignment)?;
    let y = block.forward(f, d)?;
    let modulation = f.graph.slice_channels(y, 0, layer.in_ch)?;
    let fresh = f.graph.slice_channels(y, layer.in_ch, layer.growth())?;
    let low = f.graph.add(d, modulation)?;
    let features = f.graph.concat_channels(low, fresh)?;
    let mut level_ends = x.level_ends.clone();
    level_ends.push(layer.out_ch);
    Ok(FeatureState { features, level_ends })
}

impl<T: Element> Ecn<T> {
    /// Convolutions draw from a Kaiming normal, the linear weight from
    /// `N(0, 1/fan_in)`; batch norms start at identity and the bias at zero.
    pub fn new(plan: NetworkPlan, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let init = plan.stem.out_ch;
        let stem = store.add(
            "stem.weight",
            ParamKind::Weight,
            kaiming_normal(Shape::new(init, 3, 3, 3), &mut rng),
        );
        let blocks = plan
            .layers
            .iter()
            .map(|l| Block::new(l.block, &format!("layers.{}.block", l.index), &mut store, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let (c, k) = (plan.head.channels, plan.head.classes);
        let head = Head {
            bn: BnSite::register(&mut store, "head.bn", c),
            weight: store.add(
                "head.linear.weight",
                ParamKind::Weight,
                Tensor::randn(Shape::new(k, c, 1, 1), (1.0 / c as f64).sqrt(), &mut rng),
            ),
            bias: store.add(
                "head.linear.bias",
                ParamKind::NoDecay,
                Tensor::zeros(Shape::new(1, k, 1, 1)),
            ),
        };
        Ok(Self {
            plan,
            store,
            stem,
            blocks,
            head,
        })
    }

    pub fn forward(&self, f: &mut Forward<'_, T>, images: Var) -> Result<Var> {
        Ok(self.forward_states(f, images)?.0)
    }

    /// Logits plus the state after the stem and after every cascading layer.
    pub fn forward_states(&self, f: &mut Forward<'_, T>, images: Var) -> Result<(Var, Vec<FeatureState>)> {
        let s = f.graph.shape(images);
        let (h, w) = self.plan.config.input_hw;
        if s.c != 3 || (s.h, s.w) != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(s.n, 3, h, w),
                found: s,
            });
        }
        let stem = f.param(self.stem);
        let x = f.graph.conv2d(images, stem, 1, (1, 1))?;
        let mut states = vec![FeatureState {
            features: x,
            level_ends: vec![self.plan.stem.out_ch],
        }];
        for (layer, block) in self.plan.layers.iter().zip(&self.blocks) {
            let next = cascade_layer_forward(f, layer, block, self.plan.config.alignment, states.last().unwrap())?;
            states.push(next);
        }
        let last = states.last().unwrap().features;
        let h = f.batch_norm(last, &self.head.bn)?;
        let h = f.graph.relu(h)?;
        let pooled = f.graph.global_avg_pool(h)?;
        let (wv, bv) = (f.param(self.head.weight), f.param(self.head.bias));
        let logits = f.graph.linear(pooled, wv, bv)?;
        Ok((logits, states))
    }

    fn eval_pass(&self) -> Forward<'_, T> {
        Forward::new(&self.store, Mode::Eval, self.plan.config.bn_eps)
    }

    /// Eval-mode logits.
    pub fn infer(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut f = self.eval_pass();
        let x = f.graph.constant(images.clone());
        let y = self.forward(&mut f, x)?;
        Ok(f.graph.value(y).clone())
    }

    /// Eval-mode hidden states for export, stem output first.
    pub fn feature_maps(&self, images: &Tensor<T>) -> Result<Vec<FeatureMaps<T>>> {
        let mut f = self.eval_pass();
        let x = f.graph.constant(images.clone());
        let (_, states) = self.forward_states(&mut f, x)?;
        Ok(states
            .into_iter()
            .map(|s| FeatureMaps {
                tensor: f.graph.value(s.features).clone(),
                level_ends: s.level_ends,
            })
            .collect())
    }
}
