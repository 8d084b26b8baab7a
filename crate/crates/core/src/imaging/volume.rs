use serde::{Deserialize, Serialize};

use super::{check_class_count, check_same_dims, LinearImage, SemanticMask};
use crate::error::{Error, Result};

/// Smallest standard deviation used when normalizing; constant channels would
/// otherwise divide by zero.
const MIN_STD: f64 = 1e-8;

/// How RGB statistics are gathered from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// One mean and standard deviation per color channel.
    #[default]
    PerChannel,
    /// Per-pixel mean image subtraction at the network input size.
    MeanImage,
}

/// RGB normalization applied before the network. The mask plane is never
/// normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormalizationStats {
    PerChannel {
        mean: [f64; 3],
        std: [f64; 3],
    },
    MeanImage {
        width: usize,
        height: usize,
        /// Planar `3 x height x width`.
        mean: Vec<f64>,
    },
}

impl NormalizationStats {
    pub fn identity() -> Self {
        NormalizationStats::PerChannel {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    /// Per-channel mean and population standard deviation over every pixel of
    /// every image.
    pub fn per_channel<'a>(images: impl IntoIterator<Item = &'a LinearImage>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        let images: Vec<&LinearImage> = images.into_iter().collect();
        for img in &images {
            for px in img.pixels() {
                for c in 0..3 {
                    sum[c] += px[c];
                }
            }
            count += img.pixel_count();
        }
        if count == 0 {
            return Err(Error::Config(
                "normalization needs at least one training image".into(),
            ));
        }
        let n = count as f64;
        let mean = sum.map(|s| s / n);
        // Two passes for a stable variance.
        for img in &images {
            for px in img.pixels() {
                for c in 0..3 {
                    let d = px[c] - mean[c];
                    sum_sq[c] += d * d;
                }
            }
        }
        let std = sum_sq.map(|s| (s / n).sqrt().max(MIN_STD));
        Ok(NormalizationStats::PerChannel { mean, std })
    }

    /// Mean image over images that already share the given size.
    pub fn mean_image<'a>(
        images: impl IntoIterator<Item = &'a LinearImage>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let mut mean = vec![0.0; 3 * width * height];
        let mut count = 0usize;
        for img in images {
            if img.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    left: img.dims(),
                    right: (width, height),
                });
            }
            for (i, px) in img.pixels().enumerate() {
                for c in 0..3 {
                    mean[c * width * height + i] += px[c];
                }
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Config(
                "normalization needs at least one training image".into(),
            ));
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        Ok(NormalizationStats::MeanImage {
            width,
            height,
            mean,
        })
    }

    /// `(mean, std)` for channel `c` at pixel index `i`.
    fn params(&self, c: usize, i: usize) -> (f64, f64) {
        match self {
            NormalizationStats::PerChannel { mean, std } => (mean[c], std[c]),
            NormalizationStats::MeanImage {
                width,
                height,
                mean,
            } => (mean[c * width * height + i], 1.0),
        }
    }

    fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        match self {
            NormalizationStats::MeanImage { width, height, .. } if (*width, *height) != dims => {
                Err(Error::DimensionMismatch {
                    left: dims,
                    right: (*width, *height),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Four planar channels: normalized R, G, B and the encoded mask.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVolume {
    width: usize,
    height: usize,
    /// Planar `4 x height x width`.
    data: Vec<f64>,
}

impl InputVolume {
    pub const CHANNELS: usize = 4;

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// The first `channels` planes, contiguous; `3` drops the mask.
    pub fn leading_planes(&self, channels: usize) -> &[f64] {
        &self.data[..channels.min(Self::CHANNELS) * self.width * self.height]
    }

    /// Undoes the RGB normalization.
    pub fn recover_rgb(&self, norm: &NormalizationStats) -> Result<LinearImage> {
        norm.check_dims((self.width, self.height))?;
        let n = self.width * self.height;
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                let (mean, std) = norm.params(c, i);
                data.push((self.data[c * n + i] * std + mean).max(0.0));
            }
        }
        LinearImage::new(self.width, self.height, data)
    }
}

/// Scalar mask plane: `label / max(K - 1, 1)`.
pub fn encode_mask_channel(mask: &SemanticMask, class_count: usize) -> Result<Vec<f64>> {
    check_class_count(class_count)?;
    mask.validate(class_count)?;
    let denom = (class_count.max(2) - 1) as f64;
    Ok(mask
        .labels()
        .iter()
        .map(|&l| f64::from(l) / denom)
        .collect())
}

/// Stacks normalized RGB planes with the encoded mask plane.
pub fn assemble_input(
    img: &LinearImage,
    mask: &SemanticMask,
    norm: &NormalizationStats,
    class_count: usize,
) -> Result<InputVolume> {
    check_same_dims(img, mask)?;
    norm.check_dims(img.dims())?;
    let n = img.pixel_count();
    let mut data = vec![0.0; 4 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            let (mean, std) = norm.params(c, i);
            data[c * n + i] = (px[c] - mean) / std;
        }
    }
    data[3 * n..].copy_from_slice(&encode_mask_channel(mask, class_count)?);
    Ok(InputVolume {
        width: img.width(),
        height: img.height(),
        data,
    })
}
