use serde::{Deserialize, Serialize};

use super::{Dataset, PIXELS};

/// Per-channel standardization fitted once on a training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalizer {
    /// Population mean and standard deviation of each channel. A channel
    /// with no spread keeps a unit deviation.
    pub fn fit(data: &Dataset) -> Self {
        let plane = PIXELS / 3;
        let mut hist = [[0u64; 256]; 3];
        for i in 0..data.len() {
            for (c, h) in hist.iter_mut().enumerate() {
                for &p in &data.image(i)[c * plane..(c + 1) * plane] {
                    h[p as usize] += 1;
                }
            }
        }
        let mut mean = [0.0; 3];
        let mut std = [1.0; 3];
        for c in 0..3 {
            let n: u64 = hist[c].iter().sum();
            if n == 0 {
                continue;
            }
            let sum: u64 = hist[c].iter().enumerate().map(|(v, &k)| v as u64 * k).sum();
            mean[c] = sum as f64 / n as f64;
            let var = hist[c]
                .iter()
                .enumerate()
                .map(|(v, &k)| k as f64 * (v as f64 - mean[c]).powi(2))
                .sum::<f64>()
                / n as f64;
            if var > 0.0 {
                std[c] = var.sqrt();
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, channel: usize, pixel: u8) -> f32 {
        ((pixel as f64 - self.mean[channel]) / self.std[channel]) as f32
    }

    /// Lowest normalized value of a channel, reached by pixel 0.
    pub fn min(&self, channel: usize) -> f32 {
        self.apply(channel, 0)
    }

    /// Highest normalized value of a channel, reached by pixel 255.
    pub fn max(&self, channel: usize) -> f32 {
        self.apply(channel, 255)
    }

    pub fn table(&self) -> [[f32; 256]; 3] {
        let mut t = [[0.0; 256]; 3];
        for (c, row) in t.iter_mut().enumerate() {
            for (p, v) in row.iter_mut().enumerate() {
                *v = self.apply(c, p as u8);
            }
        }
        t
    }
}
