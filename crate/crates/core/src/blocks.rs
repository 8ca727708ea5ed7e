//! The six convolution block designs.
//!
//! Every stage is `BN → ReLU → (dropout) → conv`. Kinds 3–6 run their body
//! `iterations` times with one set of convolution kernels and a fresh set of
//! batch-norm sites per iteration. Iteration `k ≥ 2` reads the first `in_ch`
//! channels of the recurrence state and its result is added to the running
//! output.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::forward::{BnSite, Forward};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BlockKind {
    Single = 1,
    Double = 2,
    Recurrent = 3,
    RecurrentDouble = 4,
    RecursiveSep = 5,
    RecursiveQuad = 6,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::Single,
        BlockKind::Double,
        BlockKind::Recurrent,
        BlockKind::RecurrentDouble,
        BlockKind::RecursiveSep,
        BlockKind::RecursiveQuad,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Whether the iteration count applies (kinds 3–6).
    pub fn is_iterative(self) -> bool {
        self.number() >= 3
    }

    fn stages(self, c: usize, o: usize) -> Vec<Stage> {
        use Stage::*;
        match self {
            BlockKind::Single | BlockKind::Recurrent => vec![Full(c, o)],
            BlockKind::Double | BlockKind::RecurrentDouble => vec![Full(c, o), Full(o, o)],
            BlockKind::RecursiveSep => vec![Pointwise(c, o), Depthwise(o)],
            BlockKind::RecursiveQuad => vec![Pointwise(c, o), Depthwise(o), Pointwise(o, o), Depthwise(o)],
        }
    }
}

impl TryFrom<u8> for BlockKind {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        BlockKind::ALL
            .get((n as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::invalid(format!("block kind must be 1..=6, got {n}")))
    }
}

impl From<BlockKind> for u8 {
    fn from(k: BlockKind) -> u8 {
        k.number()
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// What iteration `k ≥ 2` slices its input from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recurrence {
    /// The running sum of all iteration outputs so far.
    #[default]
    Accumulated,
    /// The raw output of the previous iteration.
    Previous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutPlacement {
    /// After every ReLU in every iteration.
    #[default]
    EveryRelu,
    /// After the first ReLU of the first iteration only.
    OncePerBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub iterations: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub recurrence: Recurrence,
    #[serde(default)]
    pub dropout_placement: DropoutPlacement,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, in_ch: usize, out_ch: usize) -> Self {
        Self {
            kind,
            in_ch,
            out_ch,
            iterations: 3,
            dropout_rate: 0.0,
            recurrence: Recurrence::default(),
            dropout_placement: DropoutPlacement::default(),
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    /// Number of body applications: `iterations` for kinds 3–6, else 1.
    pub fn effective_iterations(&self) -> usize {
        if self.kind.is_iterative() {
            self.iterations
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_ch == 0 {
            return Err(Error::invalid("block input channels must be positive"));
        }
        if self.out_ch < self.in_ch {
            return Err(Error::invalid(format!(
                "block output channels ({}) below input channels ({})",
                self.out_ch, self.in_ch
            )));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("block iterations must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Trainable scalars of one block: biasless convolutions counted once, plus
/// `2·channels` per batch-norm site per iteration.
pub fn block_param_count(spec: &BlockSpec) -> usize {
    let (c, o, it) = (spec.in_ch, spec.out_ch, spec.effective_iterations());
    match spec.kind {
        BlockKind::Single | BlockKind::Recurrent => 9 * c * o + it * 2 * c,
        BlockKind::Double | BlockKind::RecurrentDouble => 9 * c * o + 9 * o * o + it * (2 * c + 2 * o),
        BlockKind::RecursiveSep => c * o + 9 * o + it * (2 * c + 2 * o),
        BlockKind::RecursiveQuad => c * o + 9 * o + o * o + 9 * o + it * (2 * c + 6 * o),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    /// 3×3, in → out.
    Full(usize, usize),
    /// 1×1, in → out.
    Pointwise(usize, usize),
    /// Channel-wise 3×3.
    Depthwise(usize),
}

impl Stage {
    fn in_channels(self) -> usize {
        match self {
            Stage::Full(c, _) | Stage::Pointwise(c, _) | Stage::Depthwise(c) => c,
        }
    }

    fn kernel_shape(self) -> Shape {
        match self {
            Stage::Full(c, o) => Shape::new(o, c, 3, 3),
            Stage::Pointwise(c, o) => Shape::new(o, c, 1, 1),
            Stage::Depthwise(c) => Shape::new(c, 1, 3, 3),
        }
    }

    fn groups(self) -> usize {
        match self {
            Stage::Depthwise(c) => c,
            _ => 1,
        }
    }

    fn padding(self) -> usize {
        match self {
            Stage::Pointwise(..) => 0,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParam {
    pub weight: ParamId,
    pub groups: usize,
    pub padding: usize,
}

/// Zero-mean normal with standard deviation `sqrt(2 / fan_in)`.
pub fn kaiming_normal<T: Element, R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Tensor<T> {
    let fan_in = shape.c * shape.h * shape.w;
    Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
}

/// An instantiated block: parameter handles into a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Block {
    pub spec: BlockSpec,
    /// One kernel per stage, shared by every iteration.
    pub convs: Vec<ConvParam>,
    /// `bns[k][s]` normalizes the input of stage `s` in iteration `k`.
    pub bns: Vec<Vec<BnSite>>,
}

impl Block {
    /// Registers parameters under `{prefix}.conv{s}.weight` and
    /// `{prefix}.iter{k}.bn{s}.*`, both 1-based.
    pub fn new<T: Element, R: Rng + ?Sized>(
        spec: BlockSpec,
        prefix: &str,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let stages = spec.kind.stages(spec.in_ch, spec.out_ch);
        let convs = stages
            .iter()
            .enumerate()
            .map(|(s, st)| ConvParam {
                weight: store.add(
                    format!("{prefix}.conv{}.weight", s + 1),
                    ParamKind::Weight,
                    kaiming_normal(st.kernel_shape(), rng),
                ),
                groups: st.groups(),
                padding: st.padding(),
            })
            .collect();
        let bns = (0..spec.effective_iterations())
            .map(|k| {
                stages
                    .iter()
                    .enumerate()
                    .map(|(s, st)| {
                        BnSite::register(store, &format!("{prefix}.iter{}.bn{}", k + 1, s + 1), st.in_channels())
                    })
                    .collect()
            })
            .collect();
        Ok(Self { spec, convs, bns })
    }

    pub fn forward<T: Element>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        Ok(*self.iteration_outputs(f, x)?.last().expect("at least one iteration"))
    }

    /// Raw output of every iteration followed by the block output.
    pub fn iteration_outputs<T: Element>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Vec<Var>> {
        let c = f.graph.shape(x).c;
        if c != self.spec.in_ch {
            return Err(Error::ChannelMismatch {
                op: "block input",
                expected: self.spec.in_ch,
                found: c,
            });
        }
        let mut raw: Vec<Var> = Vec::with_capacity(self.bns.len());
        let mut acc: Option<Var> = None;
        for (k, sites) in self.bns.iter().enumerate() {
            let input = match (acc, raw.last()) {
                (Some(a), Some(&p)) => {
                    let src = match self.spec.recurrence {
                        Recurrence::Accumulated => a,
                        Recurrence::Previous => p,
                    };
                    f.graph.slice_channels(src, 0, self.spec.in_ch)?
                }
                _ => x,
            };
            let y = self.body(f, input, sites, k)?;
            acc = Some(match acc {
                None => y,
                Some(a) => f.graph.add(a, y)?,
            });
            raw.push(y);
        }
        raw.push(acc.expect("at least one iteration"));
        Ok(raw)
    }

    fn body<T: Element>(&self, f: &mut Forward<'_, T>, x: Var, sites: &[BnSite], iteration: usize) -> Result<Var> {
        let mut h = x;
        for (s, (conv, site)) in self.convs.iter().zip(sites).enumerate() {
            h = f.batch_norm(h, site)?;
            h = f.graph.relu(h)?;
            let drop = match self.spec.dropout_placement {
                DropoutPlacement::EveryRelu => true,
                DropoutPlacement::OncePerBlock => iteration == 0 && s == 0,
            };
            if drop {
                h = f.dropout(h, self.spec.dropout_rate)?;
            }
            let w = f.param(conv.weight);
            h = f.graph.conv2d(h, w, conv.groups, (conv.padding, conv.padding))?;
        }
        Ok(h)
    }

    /// Every parameter and buffer handle, convolutions first.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.convs.iter().map(|c| c.weight).collect();
        for site in self.bns.iter().flatten() {
            ids.extend([site.gamma, site.beta, site.running_mean, site.running_var]);
        }
        ids
    }
}
