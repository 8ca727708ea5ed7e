use ecn_core::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{Augmentation, Dataset, Normalizer, PIXELS, SIDE};
use crate::rng::{epoch_rng, Stream};

/// The visiting order of one training epoch.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut epoch_rng(seed, epoch, Stream::Shuffle));
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Normalized batches in a fixed order. The final batch keeps whatever
/// samples remain.
pub struct Batches<'a> {
    data: &'a Dataset,
    table: [[f32; 256]; 3],
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Option<ChaCha8Rng>,
    scratch: Vec<u8>,
}

impl<'a> Batches<'a> {
    /// Shuffled by `(seed, epoch)`, with one augmentation draw per sample.
    pub fn train(
        data: &'a Dataset,
        norm: &Normalizer,
        batch_size: usize,
        seed: u64,
        epoch: usize,
        augment: bool,
    ) -> Self {
        let mut b = Self::sequential(data, norm, batch_size);
        b.order = epoch_order(data.len(), seed, epoch);
        b.augment = augment.then(|| epoch_rng(seed, epoch, Stream::Augment));
        b
    }

    /// Dataset order, no augmentation.
    pub fn sequential(data: &'a Dataset, norm: &Normalizer, batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        Self {
            data,
            table: norm.table(),
            order: (0..data.len()).collect(),
            pos: 0,
            batch_size,
            augment: None,
            scratch: vec![0; PIXELS],
        }
    }

    pub fn count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in &indices {
            let mut img = self.data.image(i);
            if let Some(rng) = self.augment.as_mut() {
                Augmentation::draw(rng).apply(img, &mut self.scratch);
                img = &self.scratch;
            }
            for (c, plane) in img.chunks_exact(SIDE * SIDE).enumerate() {
                data.extend(plane.iter().map(|&p| self.table[c][p as usize]));
            }
        }
        let labels = indices.iter().map(|&i| self.data.labels[i]).collect();
        let images = Tensor::new(Shape::new(indices.len(), 3, SIDE, SIDE), data).expect("batch geometry");
        Some(Batch {
            images,
            labels,
            indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Split, SyntheticSpec};

    fn fixture(n: usize) -> (Dataset, Normalizer) {
        let d = SyntheticSpec::new(n, 3, 2).generate(Split::Train).unwrap();
        let norm = Normalizer::fit(&d);
        (d, norm)
    }

    #[test]
    fn same_seed_and_epoch_give_the_same_batches() {
        let (d, n) = fixture(50);
        let a: Vec<_> = Batches::train(&d, &n, 8, 3, 1, true).collect();
        let b: Vec<_> = Batches::train(&d, &n, 8, 3, 1, true).collect();
        assert_eq!(a, b);
        let c: Vec<_> = Batches::train(&d, &n, 8, 3, 2, true).collect();
        assert_ne!(a[0].indices, c[0].indices);
    }

    #[test]
    fn every_index_appears_once() {
        for epoch in 0..4 {
            let mut seen = epoch_order(1000, 9, epoch);
            seen.sort();
            assert_eq!(seen, (0..1000).collect::<Vec<_>>());
        }
        let (d, n) = fixture(50);
        let mut all: Vec<usize> = Batches::train(&d, &n, 7, 1, 0, false).flat_map(|b| b.indices).collect();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn final_partial_batch_is_kept() {
        let d = Dataset {
            classes: 1,
            images: Vec::new(),
            labels: vec![0; 50_000],
            coarse_labels: None,
        };
        let order = epoch_order(d.len(), 0, 0);
        let sizes: Vec<usize> = order.chunks(512).map(<[usize]>::len).collect();
        assert_eq!((sizes.len(), *sizes.last().unwrap()), (98, 336));
        let (small, n) = fixture(20);
        let b: Vec<_> = Batches::train(&small, &n, 6, 0, 0, true).collect();
        assert_eq!(b.iter().map(|b| b.labels.len()).collect::<Vec<_>>(), [6, 6, 6, 2]);
        assert_eq!(b.last().unwrap().images.shape(), Shape::new(2, 3, 32, 32));
    }

    #[test]
    fn augmentation_keeps_labels() {
        let (d, n) = fixture(30);
        for b in Batches::train(&d, &n, 4, 5, 0, true) {
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.labels[k], d.labels[i]);
            }
        }
    }

    #[test]
    fn sequential_batches_normalize_without_augmenting() {
        let (d, n) = fixture(5);
        let b = Batches::sequential(&d, &n, 5).next().unwrap();
        assert_eq!(b.indices, [0, 1, 2, 3, 4]);
        assert_eq!(b.images.get(2, 1, 7, 9), n.apply(1, d.image(2)[1024 + 7 * 32 + 9]));
    }
}
