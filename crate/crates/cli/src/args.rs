use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ecn_core::blocks::{DropoutPlacement, Recurrence};
use ecn_core::ops::GridAlignment;
use ecn_core::{BlockKind, CascadeConfig, Scale};
use ecn_train::data::{DatasetKind, DatasetSpec, Split, SyntheticSpec};
use ecn_train::{Schedule, TrainConfig};
use serde::de::{value, IntoDeserializer};
use serde::Deserialize;

/// Parses a flag value with the same spelling the manifests use.
fn named<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    T::deserialize(IntoDeserializer::<value::Error>::into_deserializer(s)).map_err(|e| e.to_string())
}

fn block(s: &str) -> Result<BlockKind, String> {
    let n: u8 = s.parse().map_err(|_| format!("{s:?} is not a block number"))?;
    BlockKind::try_from(n).map_err(|e| e.to_string())
}

fn scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: ecn_core::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ecn", version, about = "Evenly cascaded convolutional networks")]
pub struct Cli {
    /// Worker threads for kernels and evaluation; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the layer table and parameter count of a configuration.
    Plan(PlanArgs),
    /// Instantiate every bundled reference configuration and compare counts.
    Audit(AuditArgs),
    /// Train a network and write manifest, metrics and checkpoints.
    Train(TrainArgs),
    /// Report loss and accuracy of a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Check every operator and block against central differences.
    Gradcheck(GradcheckArgs),
    /// Export one grid image per hidden layer for a single input.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Block kind, 1 to 6.
    #[arg(long, value_parser = block)]
    pub block: Option<BlockKind>,
    #[arg(long)]
    pub init_channels: Option<usize>,
    /// Spatial scaling factor per layer, written p/q.
    #[arg(long, value_parser = scale)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Square input side in pixels.
    #[arg(long, default_value_t = 32)]
    pub input: usize,
    /// Channels appended per layer (default from the scale).
    #[arg(long)]
    pub growth: Option<usize>,
    /// Stop adding layers once the side would drop below this.
    #[arg(long, default_value_t = 4)]
    pub threshold: usize,
    /// Iterations of blocks 3 to 6.
    #[arg(long, default_value_t = 3)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// half-pixel or corners.
    #[arg(long, value_parser = named::<GridAlignment>, default_value = "half-pixel")]
    pub alignment: GridAlignment,
    /// accumulated or previous.
    #[arg(long, value_parser = named::<Recurrence>, default_value = "accumulated")]
    pub recurrence: Recurrence,
    /// every-relu or once-per-block.
    #[arg(long, value_parser = named::<DropoutPlacement>, default_value = "every-relu")]
    pub dropout_placement: DropoutPlacement,
}

impl NetworkArgs {
    /// `classes` falls back to `default_classes` when the flag is absent.
    pub fn config(&self, default_classes: Option<usize>) -> anyhow::Result<CascadeConfig> {
        let missing = |f: &str| anyhow::anyhow!("--{f} is required");
        let mut c = CascadeConfig::new(
            self.block.ok_or_else(|| missing("block"))?,
            self.init_channels.ok_or_else(|| missing("init-channels"))?,
            self.scale.ok_or_else(|| missing("scale"))?,
            self.classes.or(default_classes).ok_or_else(|| missing("classes"))?,
        );
        c.input_hw = (self.input, self.input);
        c.growth = self.growth;
        c.stop_threshold_px = self.threshold;
        c.iterations = self.iterations;
        c.dropout_rate = self.dropout;
        c.alignment = self.alignment;
        c.recurrence = self.recurrence;
        c.dropout_placement = self.dropout_placement;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Re-plan from a written manifest instead of flags.
    #[arg(long, conflicts_with_all = ["block", "init_channels", "scale", "classes"])]
    pub manifest: Option<PathBuf>,
    /// Directory to write manifest.toml into.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Only cells of these groups (blocks-10, blocks-100, headline-10, headline-100).
    #[arg(long)]
    pub group: Vec<String>,
    /// Print only failures and the summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// cifar10, cifar100, imagenet32 or synthetic.
    #[arg(long, value_parser = named::<DatasetKind>)]
    pub dataset: Option<DatasetKind>,
    /// Directory with the binary files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub synthetic_samples: usize,
    #[arg(long, default_value_t = 4)]
    pub synthetic_classes: usize,
    /// Seed of the synthetic images (default: the run seed, else 0).
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
}

impl DatasetArgs {
    pub fn spec(&self, run_seed: Option<u64>) -> anyhow::Result<Option<DatasetSpec>> {
        let Some(kind) = self.dataset else { return Ok(None) };
        Ok(Some(match kind {
            DatasetKind::Synthetic => DatasetSpec::synthetic(SyntheticSpec::new(
                self.synthetic_samples,
                self.synthetic_classes,
                self.synthetic_seed.or(run_seed).unwrap_or(0),
            )),
            _ => DatasetSpec::files(
                kind,
                self.data_dir
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("--data-dir is required for {kind:?}"))?,
            ),
        }))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// cosine or three-stage.
    #[arg(long, value_parser = named::<Schedule>, default_value = "cosine")]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate on the test split every this many epochs; 0 disables.
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    #[arg(long)]
    pub no_augment: bool,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    #[arg(long, default_value_t = 1)]
    pub checkpoint_every: usize,
    /// Rerun exactly what a previous manifest describes.
    #[arg(long, conflicts_with_all = ["block", "init_channels", "scale", "dataset"])]
    pub manifest: Option<PathBuf>,
    /// Output directory; must not already hold a run.
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            base_lr: self.lr,
            schedule: self.schedule,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            dropout_rate: self.network.dropout,
            eval_every: self.eval_every,
            augment: !self.no_augment,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Run manifest to take the dataset from (default: found next to the checkpoint).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = named::<Split>, default_value = "test")]
    pub split: Split,
    /// Batch size (default: the training batch size).
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of seeds, starting at 1.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Print every case rather than one line per operator.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw 3072-byte image: 1024 red, 1024 green, then 1024 blue bytes.
    #[arg(long, conflicts_with = "index")]
    pub image: Option<PathBuf>,
    /// Sample of the dataset split to use instead of a raw file.
    #[arg(long)]
    pub index: Option<usize>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = named::<Split>, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
}
