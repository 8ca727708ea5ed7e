use std::fmt;

use serde::{Deserialize, Serialize};

use super::scale::Scale;
use crate::blocks::{block_param_count, BlockKind, BlockSpec, DropoutPlacement, Recurrence};
use crate::error::{Error, Result};
use crate::ops::GridAlignment;

fn default_threshold() -> usize {
    4
}

fn default_iterations() -> usize {
    3
}

fn default_eps() -> f64 {
    1e-5
}

fn default_momentum() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub block: BlockKind,
    pub init_channels: usize,
    pub scale: Scale,
    /// Channels appended per layer; `None` derives it from the scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<usize>,
    #[serde(default = "default_threshold")]
    pub stop_threshold_px: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub class_count: usize,
    pub input_hw: (usize, usize),
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub recurrence: Recurrence,
    #[serde(default)]
    pub dropout_placement: DropoutPlacement,
    #[serde(default)]
    pub alignment: GridAlignment,
    #[serde(default = "default_eps")]
    pub bn_eps: f64,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f64,
}

impl CascadeConfig {
    /// A 32×32 configuration with every other field at its default.
    pub fn new(block: BlockKind, init_channels: usize, scale: Scale, class_count: usize) -> Self {
        Self {
            block,
            init_channels,
            scale,
            growth: None,
            stop_threshold_px: default_threshold(),
            iterations: default_iterations(),
            class_count,
            input_hw: (32, 32),
            dropout_rate: 0.0,
            recurrence: Recurrence::default(),
            dropout_placement: DropoutPlacement::default(),
            alignment: GridAlignment::default(),
            bn_eps: default_eps(),
            bn_momentum: default_momentum(),
        }
    }

    pub fn growth(&self) -> usize {
        self.growth
            .unwrap_or_else(|| self.scale.default_growth(self.init_channels))
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("init_channels", self.init_channels),
            ("class_count", self.class_count),
            ("stop_threshold_px", self.stop_threshold_px),
            ("iterations", self.iterations),
            ("growth", self.growth()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::invalid(
                "batch-norm eps must be positive and momentum inside (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemPlan {
    pub in_ch: usize,
    pub out_ch: usize,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    /// 1-based position in the cascade.
    pub index: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    pub block: BlockSpec,
    pub params: usize,
}

impl LayerPlan {
    pub fn growth(&self) -> usize {
        self.out_ch - self.in_ch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadPlan {
    pub channels: usize,
    pub classes: usize,
    pub bn_params: usize,
    pub linear_params: usize,
}

impl HeadPlan {
    pub fn params(&self) -> usize {
        self.bn_params + self.linear_params
    }
}

/// Fully resolved architecture with closed-form parameter counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub config: CascadeConfig,
    pub growth: usize,
    pub stem: StemPlan,
    pub layers: Vec<LayerPlan>,
    pub head: HeadPlan,
    pub total_params: usize,
}

/// Spatial extents of successive layers: the longest chain of floor-scaled
/// extents that stays at or above the threshold on both axes.
pub fn spatial_chain(input_hw: (usize, usize), scale: Scale, threshold: usize) -> Vec<(usize, usize)> {
    let mut chain = Vec::new();
    let mut hw = input_hw;
    loop {
        let next = (scale.apply(hw.0), scale.apply(hw.1));
        if next.0 < threshold || next.1 < threshold {
            return chain;
        }
        chain.push(next);
        hw = next;
    }
}

pub fn plan_network(cfg: &CascadeConfig) -> Result<NetworkPlan> {
    cfg.validate()?;
    let (h, w) = cfg.input_hw;
    let threshold = cfg.stop_threshold_px;
    let chain = spatial_chain(cfg.input_hw, cfg.scale, threshold);
    if chain.is_empty() {
        return Err(Error::EmptyPlan {
            input: h.min(w),
            threshold,
        });
    }
    let growth = cfg.growth();
    let stem = StemPlan {
        in_ch: 3,
        out_ch: cfg.init_channels,
        params: 3 * 9 * cfg.init_channels,
    };
    let mut layers = Vec::with_capacity(chain.len());
    let (mut ch, mut hw) = (cfg.init_channels, cfg.input_hw);
    for (i, &out_hw) in chain.iter().enumerate() {
        let block = BlockSpec {
            kind: cfg.block,
            in_ch: ch,
            out_ch: ch + growth,
            iterations: cfg.iterations,
            dropout_rate: cfg.dropout_rate,
            recurrence: cfg.recurrence,
            dropout_placement: cfg.dropout_placement,
        };
        layers.push(LayerPlan {
            index: i + 1,
            in_ch: ch,
            out_ch: ch + growth,
            in_hw: hw,
            out_hw,
            block,
            params: block_param_count(&block),
        });
        ch += growth;
        hw = out_hw;
    }
    let head = HeadPlan {
        channels: ch,
        classes: cfg.class_count,
        bn_params: 2 * ch,
        linear_params: ch * cfg.class_count + cfg.class_count,
    };
    let total_params = stem.params + layers.iter().map(|l| l.params).sum::<usize>() + head.params();
    Ok(NetworkPlan {
        config: cfg.clone(),
        growth,
        stem,
        layers,
        head,
        total_params,
    })
}

impl NetworkPlan {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn final_channels(&self) -> usize {
        self.head.channels
    }

    /// Channel index where each feature level ends, starting with the stem's.
    pub fn level_ends(&self) -> Vec<usize> {
        std::iter::once(self.stem.out_ch)
            .chain(self.layers.iter().map(|l| l.out_ch))
            .collect()
    }

    pub fn to_manifest(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Parses a manifest and checks it against a fresh plan of its own config.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let stored: NetworkPlan = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        let fresh = plan_network(&stored.config)?;
        if fresh != stored {
            return Err(Error::Manifest(
                "stored plan disagrees with its own configuration".into(),
            ));
        }
        Ok(fresh)
    }
}

impl fmt::Display for NetworkPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "block {}  init {}  scale {}  growth {}  classes {}  input {}x{}",
            c.block, c.init_channels, c.scale, self.growth, c.class_count, c.input_hw.0, c.input_hw.1
        )?;
        writeln!(f, "{:<7} {:>13} {:>13} {:>12}", "layer", "channels", "extent", "params")?;
        let hw = |(h, w): (usize, usize)| format!("{h}x{w}");
        writeln!(
            f,
            "{:<7} {:>13} {:>13} {:>12}",
            "stem",
            format!("{}->{}", self.stem.in_ch, self.stem.out_ch),
            format!("{0}->{0}", hw(c.input_hw)),
            self.stem.params
        )?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<7} {:>13} {:>13} {:>12}",
                l.index,
                format!("{}->{}", l.in_ch, l.out_ch),
                format!("{}->{}", hw(l.in_hw), hw(l.out_hw)),
                l.params
            )?;
        }
        writeln!(
            f,
            "{:<7} {:>13} {:>13} {:>12}",
            "head",
            format!("{}->{}", self.head.channels, self.head.classes),
            format!("{}->1x1", hw(self.layers.last().map_or(c.input_hw, |l| l.out_hw))),
            self.head.params()
        )?;
        write!(f, "total {}", self.total_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(block: u8, init: usize, scale: &str, classes: usize) -> CascadeConfig {
        CascadeConfig::new(block.try_into().unwrap(), init, scale.parse().unwrap(), classes)
    }

    #[test]
    fn depth_follows_the_floor_chain() {
        let extents = |s| {
            plan_network(&cfg(1, 16, s, 10))
                .unwrap()
                .layers
                .iter()
                .map(|l| l.out_hw.0)
                .collect::<Vec<_>>()
        };
        assert_eq!(extents("1/2"), [16, 8, 4]);
        assert_eq!(extents("3/4"), [24, 18, 13, 9, 6, 4]);
        assert_eq!(extents("7/8").len(), 12);
    }

    #[test]
    fn component_split_of_a_double_block_network() {
        let p = plan_network(&cfg(2, 16, "1/2", 10)).unwrap();
        assert_eq!(p.stem.params, 432);
        assert_eq!(
            p.layers.iter().map(|l| l.params).collect::<Vec<_>>(),
            [13920, 34720, 64736]
        );
        assert_eq!((p.head.bn_params, p.head.linear_params), (128, 650));
        assert_eq!(p.total_params, 114586);
    }

    #[test]
    fn channels_grow_by_exactly_growth() {
        for s in ["1/2", "3/4", "7/8"] {
            let p = plan_network(&cfg(1, 16, s, 10)).unwrap();
            assert_eq!(p.final_channels(), 16 + p.depth() * p.growth);
            assert_eq!(p.final_channels(), 64);
            assert!(p.layers.iter().all(|l| l.growth() == p.growth));
        }
    }

    #[test]
    fn tiny_inputs_are_rejected() {
        let mut c = cfg(1, 16, "1/2", 10);
        c.input_hw = (3, 3);
        assert!(matches!(plan_network(&c), Err(Error::EmptyPlan { .. })));
        c.input_hw = (7, 7);
        assert!(matches!(plan_network(&c), Err(Error::EmptyPlan { .. })));
        c.input_hw = (8, 8);
        assert_eq!(plan_network(&c).unwrap().depth(), 1);
    }

    #[test]
    fn explicit_growth_overrides_the_formula() {
        let mut c = cfg(1, 8, "3/4", 10);
        c.growth = Some(8);
        let p = plan_network(&c).unwrap();
        assert_eq!(p.level_ends()[..6], [8, 16, 24, 32, 40, 48]);
    }

    #[test]
    fn manifest_round_trips() {
        let mut c = cfg(6, 16, "3/4", 100);
        c.input_hw = (32, 30);
        c.dropout_rate = 0.1;
        let p = plan_network(&c).unwrap();
        let text = p.to_manifest().unwrap();
        assert_eq!(NetworkPlan::from_manifest(&text).unwrap(), p);
        let tampered = text.replacen(&format!("total_params = {}", p.total_params), "total_params = 1", 1);
        assert!(NetworkPlan::from_manifest(&tampered).is_err());
    }
}
