use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::NormalizationMode;
use crate::nn::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

/// Convolution followed by ReLU and an optional max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pool: Option<PoolSpec>,
}

impl ConvBlock {
    pub fn same3x3(filters: usize) -> Self {
        Self {
            filters,
            kernel: 3,
            stride: 1,
            pad: 1,
            pool: Some(PoolSpec {
                kernel: 2,
                stride: 2,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with standard deviation `sqrt(2 / fan_in)`.
    HeNormal,
}

/// Initial value of the first-layer weights that read the mask plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSliceInit {
    Constant {
        value: f64,
    },
    /// `1 / kernel^2`: a normalized box filter.
    KernelArea,
}

impl Default for MaskSliceInit {
    fn default() -> Self {
        MaskSliceInit::Constant { value: 1.0 / 11.0 }
    }
}

impl MaskSliceInit {
    pub fn value(&self, kernel: usize) -> f64 {
        match *self {
            MaskSliceInit::Constant { value } => value,
            MaskSliceInit::KernelArea => 1.0 / (kernel * kernel) as f64,
        }
    }
}

/// Architecture of the correction regressor.
///
/// The 3- and 4-channel variants of a spec differ only in `input_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub input_channels: usize,
    pub conv_stack: Vec<ConvBlock>,
    /// Hidden fully connected widths; a final 4-output layer is appended.
    /// Every head layer trains at the raised new-layer learning rate.
    pub head: Vec<usize>,
    pub init: InitScheme,
    #[serde(default)]
    pub mask_slice_init: MaskSliceInit,
}

pub const OUTPUTS: usize = 4;

impl NetworkSpec {
    /// 64x64 input, three conv+pool blocks of 16/32/64 filters, head
    /// 128-64-32-4.
    pub fn desk(input_channels: usize) -> Self {
        Self {
            input_size: 64,
            input_channels,
            conv_stack: vec![
                ConvBlock::same3x3(16),
                ConvBlock::same3x3(32),
                ConvBlock::same3x3(64),
            ],
            head: vec![128, 64, 32],
            init: InitScheme::Gaussian { std: 0.01 },
            mask_slice_init: MaskSliceInit::default(),
        }
    }

    /// 227x227 input with the five-layer AlexNet convolution stack (96 11x11
    /// stride-4 filters first). Head widths are a free choice kept small.
    pub fn full_scale(input_channels: usize) -> Self {
        let pool = Some(PoolSpec {
            kernel: 3,
            stride: 2,
        });
        let conv = |filters, kernel, stride, pad, pool| ConvBlock {
            filters,
            kernel,
            stride,
            pad,
            pool,
        };
        Self {
            input_size: 227,
            input_channels,
            conv_stack: vec![
                conv(96, 11, 4, 0, pool),
                conv(256, 5, 1, 2, pool),
                conv(384, 3, 1, 1, None),
                conv(384, 3, 1, 1, None),
                conv(256, 3, 1, 1, pool),
            ],
            head: vec![256, 128, 64],
            init: InitScheme::Gaussian { std: 0.01 },
            mask_slice_init: MaskSliceInit::default(),
        }
    }

    /// Small network for the synthetic semantic benchmark: 16x16 input,
    /// 8/16/32 filters, head 64-32-16-4, fan-in scaled init.
    pub fn benchmark(input_channels: usize) -> Self {
        Self {
            input_size: 16,
            input_channels,
            conv_stack: vec![
                ConvBlock::same3x3(8),
                ConvBlock::same3x3(16),
                ConvBlock::same3x3(32),
            ],
            head: vec![64, 32, 16],
            init: InitScheme::HeNormal,
            mask_slice_init: MaskSliceInit::default(),
        }
    }

    /// Same spec with a different input channel count.
    pub fn with_channels(&self, input_channels: usize) -> Self {
        Self {
            input_channels,
            ..self.clone()
        }
    }

    pub fn uses_mask(&self) -> bool {
        self.input_channels == 4
    }

    /// Spatial size and channel count after the conv stack.
    pub fn feature_shape(&self) -> Result<(usize, usize)> {
        let mut side = self.input_size;
        let mut channels = self.input_channels;
        for (i, block) in self.conv_stack.iter().enumerate() {
            if block.kernel == 0 || block.stride == 0 || block.filters == 0 {
                return Err(Error::Config(format!("conv block {i} has a zero size")));
            }
            if side + 2 * block.pad < block.kernel {
                return Err(Error::Config(format!(
                    "conv block {i}: input {side} smaller than kernel {}",
                    block.kernel
                )));
            }
            side = (side + 2 * block.pad - block.kernel) / block.stride + 1;
            if let Some(pool) = block.pool {
                if pool.kernel == 0 || pool.stride == 0 || side < pool.kernel {
                    return Err(Error::Config(format!(
                        "conv block {i}: cannot pool {side} with kernel {}",
                        pool.kernel
                    )));
                }
                side = (side - pool.kernel) / pool.stride + 1;
            }
            channels = block.filters;
        }
        Ok((side, channels))
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.input_channels, 3 | 4) {
            return Err(Error::Config(format!(
                "input_channels must be 3 or 4, got {}",
                self.input_channels
            )));
        }
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        if self.head.contains(&0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        if let InitScheme::Gaussian { std } = self.init {
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::Config(format!("invalid init std {std}")));
            }
        }
        self.feature_shape().map(|_| ())
    }
}

/// Training loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub normalization: NormalizationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            optimizer: OptimizerConfig::default(),
            batch_size: 16,
            seed: 0,
            normalization: NormalizationMode::PerChannel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_shapes() {
        assert_eq!(NetworkSpec::desk(4).feature_shape().unwrap(), (8, 64));
        assert_eq!(NetworkSpec::benchmark(3).feature_shape().unwrap(), (2, 32));
        // 227 -> 55 -> 27 -> 27 -> 13 -> 13 -> 13 -> 13 -> 6
        assert_eq!(
            NetworkSpec::full_scale(4).feature_shape().unwrap(),
            (6, 256)
        );
    }

    #[test]
    fn rejects_bad_channel_count() {
        assert!(NetworkSpec::desk(5).validate().is_err());
        assert!(NetworkSpec::desk(3).validate().is_ok());
        let tiny = NetworkSpec {
            input_size: 4,
            ..NetworkSpec::desk(4)
        };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn mask_slice_values() {
        assert_eq!(MaskSliceInit::default().value(11), 1.0 / 11.0);
        assert_eq!(MaskSliceInit::KernelArea.value(11), 1.0 / 121.0);
    }
}
