use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ecn_core::CascadeConfig;
use ecn_train::data::{DatasetSpec, Normalizer, Split};
use ecn_train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const FILE: &str = "manifest.toml";

pub fn tool_version() -> String {
    format!("ecn {}", env!("CARGO_PKG_VERSION"))
}

/// Everything needed to repeat a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    pub checkpoint_every: usize,
    pub dataset: DatasetSpec,
    pub network: CascadeConfig,
    pub train: TrainConfig,
    /// Fitted on the training split when the run started.
    pub normalizer: Normalizer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ImageSource {
    Raw {
        path: PathBuf,
    },
    Dataset {
        dataset: DatasetSpec,
        split: Split,
        index: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualizeManifest {
    pub tool_version: String,
    pub checkpoint: PathBuf,
    pub image: ImageSource,
    pub network: CascadeConfig,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanManifest {
    pub tool_version: String,
    pub network: CascadeConfig,
    pub total_params: usize,
}

pub fn write<T: Serialize>(dir: &Path, value: &T) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(FILE);
    fs::write(&path, toml::to_string(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The run manifest beside a checkpoint, or one directory up.
pub fn find_for_checkpoint(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint
        .ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join(FILE))
        .find(|p| p.is_file())
}
