use rand::Rng;

use super::{PIXELS, SIDE};

/// Zero border added on every side before cropping.
pub const PAD: usize = 4;
/// Crop offsets run over `0..=MAX_OFFSET` on each axis, 81 windows in all.
pub const MAX_OFFSET: usize = 2 * PAD;

/// One draw of the training augmentation: an optional horizontal flip, then
/// a 32×32 window of the zero-padded image whose top-left corner sits at
/// `(dy, dx)` in padded coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Augmentation {
    pub flip: bool,
    pub dy: usize,
    pub dx: usize,
}

impl Augmentation {
    pub const IDENTITY: Self = Self {
        flip: false,
        dy: PAD,
        dx: PAD,
    };

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let flip = rng.random_bool(0.5);
        let dy = rng.random_range(0..=MAX_OFFSET);
        let dx = rng.random_range(0..=MAX_OFFSET);
        Self { flip, dy, dx }
    }

    /// Writes the augmented copy of a channel-planar image into `out`.
    pub fn apply(&self, image: &[u8], out: &mut [u8]) {
        debug_assert_eq!((image.len(), out.len()), (PIXELS, PIXELS));
        let plane = SIDE * SIDE;
        for c in 0..3 {
            let src = &image[c * plane..(c + 1) * plane];
            let dst = &mut out[c * plane..(c + 1) * plane];
            for y in 0..SIDE {
                let sy = (y + self.dy).wrapping_sub(PAD);
                for x in 0..SIDE {
                    let sx = (x + self.dx).wrapping_sub(PAD);
                    dst[y * SIDE + x] = if sy < SIDE && sx < SIDE {
                        let sx = if self.flip { SIDE - 1 - sx } else { sx };
                        src[sy * SIDE + sx]
                    } else {
                        0
                    };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp() -> Vec<u8> {
        (0..PIXELS).map(|i| (i % 251 + 1) as u8).collect()
    }

    fn run(a: Augmentation, img: &[u8]) -> Vec<u8> {
        let mut out = vec![0; PIXELS];
        a.apply(img, &mut out);
        out
    }

    #[test]
    fn centre_window_without_flip_is_identity() {
        let img = ramp();
        assert_eq!(run(Augmentation::IDENTITY, &img), img);
    }

    #[test]
    fn origin_window_shifts_down_right_with_zero_border() {
        let img = ramp();
        let out = run(
            Augmentation {
                flip: false,
                dy: 0,
                dx: 0,
            },
            &img,
        );
        for c in 0..3 {
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let o = out[c * 1024 + y * SIDE + x];
                    if y < PAD || x < PAD {
                        assert_eq!(o, 0);
                    } else {
                        assert_eq!(o, img[c * 1024 + (y - PAD) * SIDE + x - PAD]);
                    }
                }
            }
        }
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = ramp();
        let flip = Augmentation {
            flip: true,
            ..Augmentation::IDENTITY
        };
        let once = run(flip, &img);
        assert_ne!(once, img);
        assert_eq!(once[0], img[SIDE - 1]);
        assert_eq!(run(flip, &once), img);
    }

    #[test]
    fn offsets_are_uniform() {
        let n = 100_000;
        let mut counts = [[0usize; MAX_OFFSET + 1]; MAX_OFFSET + 1];
        let mut flips = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..n {
            let a = Augmentation::draw(&mut rng);
            counts[a.dy][a.dx] += 1;
            flips += a.flip as usize;
        }
        let p = 1.0 / 81.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for row in counts {
            for k in row {
                assert!((k as f64 - n as f64 * p).abs() <= 3.0 * sigma, "count {k}");
            }
        }
        assert!((flips as f64 - n as f64 / 2.0).abs() <= 3.0 * (n as f64 / 4.0).sqrt());
    }
}
