use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split, PIXELS};
use crate::error::{Result, TrainError};

const LEVELS: [i32; 3] = [48, 128, 208];
const NOISE: i32 = 32;

/// Class `k` colours channel `c` with the `c`-th base-3 digit of `k` picked
/// from three intensity levels, plus uniform per-pixel noise. Channel means
/// alone separate the classes, so the set is linearly separable after
/// global pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub classes: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const MAX_CLASSES: usize = 27;

    pub fn new(samples: usize, classes: usize, seed: u64) -> Self {
        Self { samples, classes, seed }
    }

    pub fn class_means(class: usize) -> [i32; 3] {
        [LEVELS[class % 3], LEVELS[class / 3 % 3], LEVELS[class / 9 % 3]]
    }

    /// Train and test splits use independent streams of the same seed.
    pub fn generate(&self, split: Split) -> Result<Dataset> {
        if self.classes == 0 || self.classes > Self::MAX_CLASSES || self.samples == 0 {
            return Err(TrainError::Config(format!(
                "synthetic data needs 1..={} classes and at least one sample",
                Self::MAX_CLASSES
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(split as u64);
        let mut images = Vec::with_capacity(self.samples * PIXELS);
        let labels: Vec<usize> = (0..self.samples).map(|i| i % self.classes).collect();
        for &label in &labels {
            let means = Self::class_means(label);
            for m in means {
                for _ in 0..PIXELS / 3 {
                    images.push((m + rng.random_range(-NOISE..=NOISE)) as u8);
                }
            }
        }
        Ok(Dataset {
            classes: self.classes,
            images,
            labels,
            coarse_labels: None,
        })
    }
}
