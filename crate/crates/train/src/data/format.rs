//! Fixed-geometry binary records: label bytes followed by a 3×32×32
//! channel-planar image (1024 red, 1024 green, 1024 blue bytes).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticSpec;
use super::Dataset;
use crate::error::{Result, TrainError};

pub const SIDE: usize = 32;
pub const PIXELS: usize = 3 * SIDE * SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Imagenet32,
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// How the label is stored in front of each image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelField {
    /// One byte.
    Byte,
    /// A discarded coarse byte, then the fine label byte.
    CoarseFine,
    /// Two bytes, little endian.
    U16,
}

impl LabelField {
    pub fn bytes(self) -> usize {
        match self {
            LabelField::Byte => 1,
            LabelField::CoarseFine | LabelField::U16 => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordLayout {
    pub label: LabelField,
    pub classes: usize,
    /// Exact record count of every file, when the format fixes it.
    pub records_per_file: Option<usize>,
}

impl RecordLayout {
    pub fn record_bytes(&self) -> usize {
        self.label.bytes() + PIXELS
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetKind,
    /// Directory holding the binary files; unused for synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetSpec {
    pub fn files(name: DatasetKind, root: impl Into<PathBuf>) -> Self {
        Self {
            name,
            root: Some(root.into()),
            synthetic: None,
        }
    }

    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: DatasetKind::Synthetic,
            root: None,
            synthetic: Some(spec),
        }
    }

    pub fn class_count(&self) -> Result<usize> {
        match self.name {
            DatasetKind::Synthetic => Ok(self.synthetic_spec()?.classes),
            _ => Ok(self.layout().expect("file-backed layout").classes),
        }
    }

    /// `None` for synthetic data, which has no file layout.
    pub fn layout(&self) -> Option<RecordLayout> {
        let (label, classes, records_per_file) = match self.name {
            DatasetKind::Cifar10 => (LabelField::Byte, 10, Some(10_000)),
            DatasetKind::Cifar100 => (LabelField::CoarseFine, 100, None),
            DatasetKind::Imagenet32 => (LabelField::U16, 1000, None),
            DatasetKind::Synthetic => return None,
        };
        Some(RecordLayout {
            label,
            classes,
            records_per_file,
        })
    }

    /// File names of a split, relative to the root, with the exact record
    /// count each must hold when the format fixes one.
    pub fn split_files(&self, split: Split) -> Vec<(&'static str, Option<usize>)> {
        match (self.name, split) {
            (DatasetKind::Cifar10, Split::Train) => [
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ]
            .into_iter()
            .map(|f| (f, Some(10_000)))
            .collect(),
            (DatasetKind::Cifar10, Split::Test) => vec![("test_batch.bin", Some(10_000))],
            (DatasetKind::Cifar100, Split::Train) => vec![("train.bin", Some(50_000))],
            (DatasetKind::Cifar100, Split::Test) => vec![("test.bin", Some(10_000))],
            (DatasetKind::Imagenet32, Split::Train) => vec![("train.bin", None)],
            (DatasetKind::Imagenet32, Split::Test) => vec![("val.bin", None)],
            (DatasetKind::Synthetic, _) => Vec::new(),
        }
    }

    fn synthetic_spec(&self) -> Result<&SyntheticSpec> {
        self.synthetic
            .as_ref()
            .ok_or_else(|| TrainError::Config("synthetic dataset without a synthetic section".into()))
    }

    pub fn load(&self, split: Split) -> Result<Dataset> {
        let Some(layout) = self.layout() else {
            return self.synthetic_spec()?.generate(split);
        };
        let root = self
            .root
            .as_deref()
            .ok_or_else(|| TrainError::Config(format!("{:?} needs a data directory", self.name)))?;
        let mut parts = Vec::new();
        for (name, count) in self.split_files(split) {
            let path = root.join(name);
            let bytes = fs::read(&path).map_err(|e| TrainError::file(&path, e))?;
            parts.push(decode(
                &bytes,
                &RecordLayout {
                    records_per_file: count,
                    ..layout
                },
                &path,
            )?);
        }
        Ok(Dataset::concat(parts))
    }
}

/// Decodes a whole file. The size must be an exact multiple of the record
/// size, and exactly the fixed record count when the layout has one.
pub fn decode(bytes: &[u8], layout: &RecordLayout, path: &Path) -> Result<Dataset> {
    let rec = layout.record_bytes();
    let len = bytes.len() as u64;
    let bad_size = |expected: String| TrainError::FileSize {
        path: path.to_path_buf(),
        len,
        expected,
    };
    match layout.records_per_file {
        Some(n) if bytes.len() != n * rec => return Err(bad_size(format!("{n} records of {rec} bytes"))),
        None if bytes.is_empty() || bytes.len() % rec != 0 => {
            return Err(bad_size(format!("a positive multiple of {rec}")))
        }
        _ => {}
    }
    let n = bytes.len() / rec;
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    let mut coarse = Vec::new();
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let label = match layout.label {
            LabelField::Byte => r[0] as usize,
            LabelField::CoarseFine => {
                coarse.push(r[0]);
                r[1] as usize
            }
            LabelField::U16 => u16::from_le_bytes([r[0], r[1]]) as usize,
        };
        if label >= layout.classes {
            return Err(TrainError::BadLabel {
                path: path.to_path_buf(),
                record: i,
                label,
                classes: layout.classes,
            });
        }
        labels.push(label);
        images.extend_from_slice(&r[layout.label.bytes()..]);
    }
    Ok(Dataset {
        classes: layout.classes,
        images,
        labels,
        coarse_labels: (layout.label == LabelField::CoarseFine).then_some(coarse),
    })
}

/// Inverse of [`decode`].
pub fn encode(data: &Dataset, layout: &RecordLayout) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * layout.record_bytes());
    for i in 0..data.len() {
        let label = data.labels[i];
        match layout.label {
            LabelField::Byte => out.push(byte_label(label)?),
            LabelField::CoarseFine => {
                let coarse = data
                    .coarse_labels
                    .as_ref()
                    .and_then(|c| c.get(i))
                    .ok_or_else(|| TrainError::Config("coarse labels missing".into()))?;
                out.extend([*coarse, byte_label(label)?]);
            }
            LabelField::U16 => {
                let l =
                    u16::try_from(label).map_err(|_| TrainError::Config(format!("label {label} exceeds 16 bits")))?;
                out.extend(l.to_le_bytes());
            }
        }
        out.extend_from_slice(data.image(i));
    }
    Ok(out)
}

fn byte_label(label: usize) -> Result<u8> {
    u8::try_from(label).map_err(|_| TrainError::Config(format!("label {label} does not fit in a byte")))
}
