//! Grayscale grids of hidden feature maps: one row per feature level, the
//! level's channels left to right, each map min-max rescaled on its own.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use super::model::FeatureMaps;
use crate::error::{Error, Result};
use crate::tensor::Element;

/// Pixel value of a map whose values are all equal.
pub const FLAT_GRAY: u8 = 128;
pub const SEPARATOR: u8 = 255;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(io::Error::other)?;
        w.write_image_data(&self.pixels).map_err(io::Error::other)?;
        w.finish().map_err(io::Error::other)?;
        Ok(())
    }
}

fn rescale(plane: &[f64]) -> Vec<u8> {
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![FLAT_GRAY; plane.len()];
    }
    plane
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Grid for one sample of a hidden state, cells separated by one pixel.
pub fn render_grid<T: Element>(maps: &FeatureMaps<T>, sample: usize) -> Result<GrayImage> {
    let s = maps.tensor.shape();
    if sample >= s.n {
        return Err(Error::invalid(format!(
            "sample {sample} out of range for batch {}",
            s.n
        )));
    }
    let mut starts = vec![0];
    starts.extend(&maps.level_ends);
    if *starts.last().unwrap() != s.c || starts.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid("level boundaries do not partition the channels"));
    }
    let rows = maps.level_ends.len();
    let cols = starts.windows(2).map(|p| p[1] - p[0]).max().unwrap();
    let width = cols * s.w + cols - 1;
    let height = rows * s.h + rows - 1;
    let mut pixels = vec![SEPARATOR; width * height];
    for (r, level) in starts.windows(2).enumerate() {
        for (col, c) in (level[0]..level[1]).enumerate() {
            let plane: Vec<f64> = maps.tensor.plane(sample, c).iter().map(|v| v.to_f64_lossy()).collect();
            let cell = rescale(&plane);
            let (x0, y0) = (col * (s.w + 1), r * (s.h + 1));
            for y in 0..s.h {
                let dst = (y0 + y) * width + x0;
                pixels[dst..dst + s.w].copy_from_slice(&cell[y * s.w..(y + 1) * s.w]);
            }
        }
    }
    Ok(GrayImage { width, height, pixels })
}

/// Writes `layer01.png`, `layer02.png`, … (stem output first) into `dir`.
pub fn export_feature_maps<T: Element>(states: &[FeatureMaps<T>], sample: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let path = dir.join(format!("layer{:02}.png", i + 1));
            render_grid(st, sample)?.save_png(&path)?;
            Ok(path)
        })
        .collect()
}
