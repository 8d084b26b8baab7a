//! Synthetic corpus in which the color cast depends on scene content.
//!
//! Each image is a background region plus one to three rectangles, every
//! region a flat color with its own class label. Region colors are drawn
//! independently of the label, so the pixels alone say little about the cast;
//! the cast gains are looked up from the dominant class instead.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{source_rng, DistortionModel, Source};
use crate::error::{Error, Result};
use crate::imaging::{LinearImage, SemanticMask};

/// Largest supported class count.
pub const MAX_CLASSES: usize = 16;

/// Per-class cast gains `[r, g, b]` along a warm-to-cool axis: class 0 is
/// the warmest cast, class `K - 1` the coolest. Every gain lies in
/// `[0.75, 1.25]`.
pub fn class_gains(class_count: usize) -> Vec<[f64; 3]> {
    let span = (class_count.max(2) - 1) as f64;
    (0..class_count)
        .map(|c| {
            let t = c as f64 / span;
            [1.25 - 0.5 * t, 0.9 + 0.2 * (t - 0.5).abs(), 0.75 + 0.5 * t]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub train_sources: usize,
    pub test_sources: usize,
    /// Side length of the square source images.
    pub size: usize,
    pub class_count: usize,
    /// Half-width of the uniform noise added to the class gains.
    pub gain_noise: f64,
    /// Largest fraction of the image any one rectangle may cover.
    pub max_rect_fraction: f64,
    /// Region colors are drawn per channel from this range.
    pub albedo_range: [f64; 2],
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            train_sources: 200,
            test_sources: 50,
            size: 32,
            class_count: 5,
            gain_noise: 0.03,
            max_rect_fraction: 0.12,
            albedo_range: [0.15, 0.85],
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.class_count) {
            return Err(Error::Config(format!(
                "benchmark class_count must be in 2..={MAX_CLASSES}, got {}",
                self.class_count
            )));
        }
        if self.size < 8 {
            return Err(Error::Config(format!(
                "benchmark size must be at least 8, got {}",
                self.size
            )));
        }
        if self.train_sources == 0 || self.test_sources == 0 {
            return Err(Error::Config(
                "benchmark needs train and test sources".into(),
            ));
        }
        if !(self.max_rect_fraction > 0.0 && self.max_rect_fraction <= 0.2) {
            return Err(Error::Config(format!(
                "max_rect_fraction must be in (0, 0.2], got {}",
                self.max_rect_fraction
            )));
        }
        let [lo, hi] = self.albedo_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "invalid albedo_range {:?}",
                self.albedo_range
            )));
        }
        Ok(())
    }

    /// The cast model matching this corpus.
    pub fn distortion_model(&self) -> DistortionModel {
        DistortionModel::ClassConditioned {
            gains: class_gains(self.class_count),
            noise: self.gain_noise,
        }
    }

    /// Train sources `train_000..` followed by test sources `test_000..`.
    pub fn sources(&self, seed: u64) -> Result<(Vec<Source>, Vec<Source>)> {
        self.validate()?;
        let make = |prefix: &str, n: usize| {
            (0..n)
                .map(|i| generate_source(&format!("{prefix}_{i:03}"), seed, self))
                .collect::<Result<Vec<_>>>()
        };
        Ok((
            make("train", self.train_sources)?,
            make("test", self.test_sources)?,
        ))
    }
}

/// Draws one source image. Colors are multiples of 1/255 so the image
/// survives an 8-bit round trip unchanged.
pub fn generate_source(id: &str, seed: u64, cfg: &BenchmarkConfig) -> Result<Source> {
    let mut rng = source_rng(seed, &format!("benchmark/{id}"));
    let size = cfg.size;
    let k = cfg.class_count as u8;
    let [alo, ahi] = cfg.albedo_range;
    let albedo = |rng: &mut rand_chacha::ChaCha8Rng| {
        [0; 3].map(|_| (rng.random_range(alo..=ahi) * 255.0).round() / 255.0)
    };

    let background = rng.random_range(0..k);
    let mut labels = vec![background; size * size];
    let mut colors = vec![albedo(&mut rng)];
    let mut region = vec![0usize; size * size];

    let others: Vec<u8> = (0..k).filter(|&l| l != background).collect();
    let rect_count = rng.random_range(1..=3usize.min(others.len()));
    let max_area = (cfg.max_rect_fraction * (size * size) as f64).floor() as usize;
    let min_side = (size / 5).max(1);
    let mut used = Vec::new();
    for r in 0..rect_count {
        let label = loop {
            let l = others[rng.random_range(0..others.len())];
            if !used.contains(&l) {
                break l;
            }
        };
        used.push(label);
        let w = rng.random_range(min_side..=(max_area / min_side).min(size / 2));
        let h = rng.random_range(min_side..=(max_area / w).min(size / 2));
        let x0 = rng.random_range(0..=size - w);
        let y0 = rng.random_range(0..=size - h);
        colors.push(albedo(&mut rng));
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                labels[y * size + x] = label;
                region[y * size + x] = r + 1;
            }
        }
    }

    let image = LinearImage::from_fn(size, size, |x, y| colors[region[y * size + x]])?;
    let mask = SemanticMask::new(size, size, labels)?;
    Source::new(id, image, mask)
}
