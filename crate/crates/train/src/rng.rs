//! Every random draw of a run comes from a ChaCha8 stream keyed by the run
//! seed, the epoch and the purpose, so an epoch can be replayed from
//! `(seed, epoch)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Shuffle = 0,
    Augment = 1,
    Dropout = 2,
}

pub fn epoch_rng(seed: u64, epoch: usize, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(epoch as u64 * 4 + stream as u64);
    r
}
