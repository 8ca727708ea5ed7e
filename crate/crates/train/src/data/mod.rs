//! Datasets of 3×32×32 byte images, their normalization, augmentation and
//! deterministic batching.

mod augment;
mod batches;
mod format;
mod normalize;
mod synthetic;

pub use augment::{Augmentation, MAX_OFFSET, PAD};
pub use batches::{epoch_order, Batch, Batches};
pub use format::{decode, encode, DatasetKind, DatasetSpec, LabelField, RecordLayout, Split, PIXELS, SIDE};
pub use normalize::Normalizer;
pub use synthetic::SyntheticSpec;

/// An in-memory split. Images are stored back to back, each already in
/// channel-planar order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub images: Vec<u8>,
    pub labels: Vec<usize>,
    /// Kept only so CIFAR-100 files re-encode byte for byte.
    pub coarse_labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Joins parts in order. All parts must share a class count.
    pub fn concat(parts: Vec<Dataset>) -> Dataset {
        let classes = parts.first().map_or(0, |p| p.classes);
        let keep_coarse = parts.iter().all(|p| p.coarse_labels.is_some()) && !parts.is_empty();
        let mut out = Dataset {
            classes,
            images: Vec::new(),
            labels: Vec::new(),
            coarse_labels: keep_coarse.then(Vec::new),
        };
        for p in parts {
            debug_assert_eq!(p.classes, classes);
            out.images.extend(p.images);
            out.labels.extend(p.labels);
            if let (Some(all), Some(c)) = (out.coarse_labels.as_mut(), p.coarse_labels) {
                all.extend(c);
            }
        }
        out
    }
}
