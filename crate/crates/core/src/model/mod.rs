//! The correction regressor: an image (plus, optionally, its semantic mask
//! plane) goes in, four positive correction parameters `(r, g, b, gamma)`
//! come out.
//!
//! Prediction runs at the network's fixed input size; the predicted global
//! correction is then applied to the full-resolution image.

mod checkpoint;
mod spec;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use spec::{ConvBlock, InitScheme, MaskSliceInit, NetworkSpec, PoolSpec, TrainConfig, OUTPUTS};
pub use train::{fit_normalization, prepare_examples, train, Example, Trainer};

use rand_distr::{Distribution, Normal};

use crate::augment::source_rng;
use crate::colorcast::{apply_correction, CorrectionParams};
use crate::error::{Error, Result};
use crate::imaging::{
    assemble_input, check_same_dims, resize_bilinear, resize_nearest, InputVolume, LinearImage,
    NormalizationStats, SemanticMask,
};
use crate::nn::{Conv2d, Flatten, Layer, Linear, MaxPool2d, Relu, Sequential, Softplus, Tensor};

/// Added to the softplus output so every prediction is strictly positive.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticWbNet {
    spec: NetworkSpec,
    body: Sequential,
}

impl SemanticWbNet {
    /// Builds the network with every weight and bias at zero.
    pub fn build(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut channels = spec.input_channels;
        for (i, block) in spec.conv_stack.iter().enumerate() {
            layers.push(Layer::Conv2d(Conv2d::new(
                &format!("conv{}", i + 1),
                channels,
                block.filters,
                block.kernel,
                block.stride,
                block.pad,
                false,
            )));
            layers.push(Layer::Relu(Relu::default()));
            if let Some(pool) = block.pool {
                layers.push(Layer::MaxPool2d(MaxPool2d::new(pool.kernel, pool.stride)));
            }
            channels = block.filters;
        }
        layers.push(Layer::Flatten(Flatten::default()));
        let (side, feat_channels) = spec.feature_shape()?;
        let mut width = side * side * feat_channels;
        let widths: Vec<usize> = spec.head.iter().copied().chain([OUTPUTS]).collect();
        for (i, &out) in widths.iter().enumerate() {
            layers.push(Layer::Linear(Linear::new(
                &format!("fc{}", 6 + i),
                width,
                out,
                true,
            )));
            if i + 1 < widths.len() {
                layers.push(Layer::Relu(Relu::default()));
            }
            width = out;
        }
        layers.push(Layer::Softplus(Softplus::new(POSITIVITY_FLOOR)));
        Ok(Self {
            spec: spec.clone(),
            body: Sequential::new(layers),
        })
    }

    /// Gaussian weights and zero biases. Each weight tensor draws from its own
    /// stream keyed by `(seed, parameter name)`, in `[out][in][ky][kx]` order,
    /// and the first layer never draws for the mask plane: a 3-channel and a
    /// 4-channel net built from the same seed share every random weight.
    /// In 4-channel specs the mask slice is the constant from
    /// `mask_slice_init`, and He fan-in counts only the RGB planes.
    pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::build(spec)?;
        let mut first_conv = true;
        for layer in &mut net.body.layers {
            let (weight, in_channels, k2, mask_value) = match layer {
                Layer::Conv2d(c) => {
                    let mask_value = (first_conv && spec.uses_mask())
                        .then(|| spec.mask_slice_init.value(c.kernel));
                    first_conv = false;
                    (
                        &mut c.weight,
                        c.in_channels,
                        c.kernel * c.kernel,
                        mask_value,
                    )
                }
                Layer::Linear(l) => (&mut l.weight, l.in_features, 1, None),
                _ => continue,
            };
            let drawn_channels = if mask_value.is_some() { 3 } else { in_channels };
            let std = match spec.init {
                InitScheme::Gaussian { std } => std,
                InitScheme::HeNormal => (2.0 / (drawn_channels * k2) as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = source_rng(seed, &weight.name);
            for (i, w) in weight.value.data_mut().iter_mut().enumerate() {
                let channel = (i / k2) % in_channels;
                *w = match mask_value {
                    Some(v) if channel == 3 => v,
                    _ => normal.sample(&mut rng),
                };
            }
        }
        Ok(net)
    }

    /// A zero-weight network whose output is always `params`, up to softplus
    /// rounding.
    pub fn constant(spec: &NetworkSpec, params: &CorrectionParams) -> Result<Self> {
        params.validate()?;
        let mut net = Self::build(spec)?;
        let last = net
            .body
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match l {
                Layer::Linear(lin) => Some(lin),
                _ => None,
            })
            .expect("head has a final linear layer");
        for (b, target) in last.bias.value.data_mut().iter_mut().zip(params.to_array()) {
            *b = inverse_softplus(target - POSITIVITY_FLOOR)?;
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn body(&self) -> &Sequential {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut Sequential {
        &mut self.body
    }

    pub fn first_conv(&self) -> &Conv2d {
        match &self.body.layers[0] {
            Layer::Conv2d(c) => c,
            _ => unreachable!("network starts with a convolution"),
        }
    }

    fn first_conv_mut(&mut self) -> &mut Conv2d {
        match &mut self.body.layers[0] {
            Layer::Conv2d(c) => c,
            _ => unreachable!("network starts with a convolution"),
        }
    }

    /// First-layer weights that read the mask plane, filter by filter. Empty
    /// for 3-channel networks.
    pub fn mask_slice(&self) -> Vec<f64> {
        if !self.spec.uses_mask() {
            return Vec::new();
        }
        let conv = self.first_conv();
        let k2 = conv.kernel * conv.kernel;
        let w = conv.weight.value.data();
        (0..conv.out_channels)
            .flat_map(|o| {
                let start = (o * conv.in_channels + 3) * k2;
                w[start..start + k2].iter().copied()
            })
            .collect()
    }

    /// Overwrites every mask-plane weight of the first layer.
    pub fn fill_mask_slice(&mut self, value: f64) -> Result<()> {
        if !self.spec.uses_mask() {
            return Err(Error::NoMaskChannel);
        }
        set_mask_slice(self.first_conv_mut(), value);
        Ok(())
    }

    /// Runs the network on a batch of `[B, C, S, S]` inputs, returning `[B, 4]`.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let s = self.spec.input_size;
        let expected = [input.shape()[0], self.spec.input_channels, s, s];
        if input.shape() != expected {
            return Err(Error::shape("network input", input.shape(), &expected));
        }
        self.body.forward(input)
    }

    /// Packs volumes into a batch tensor, keeping the planes this network reads.
    pub fn batch_tensor(&self, volumes: &[&InputVolume]) -> Result<Tensor> {
        let s = self.spec.input_size;
        let c = self.spec.input_channels;
        let mut data = Vec::with_capacity(volumes.len() * c * s * s);
        for v in volumes {
            if (v.width(), v.height()) != (s, s) {
                return Err(Error::shape(
                    "input volume",
                    &[InputVolume::CHANNELS, v.height(), v.width()],
                    &[InputVolume::CHANNELS, s, s],
                ));
            }
            data.extend_from_slice(v.leading_planes(c));
        }
        Tensor::new(vec![volumes.len(), c, s, s], data)
    }

    pub fn predict_batch(&mut self, volumes: &[&InputVolume]) -> Result<Vec<CorrectionParams>> {
        let input = self.batch_tensor(volumes)?;
        let out = self.forward(&input)?;
        out.data()
            .chunks_exact(OUTPUTS)
            .map(|row| CorrectionParams::from_array([row[0], row[1], row[2], row[3]]))
            .collect()
    }

    pub fn predict(&mut self, volume: &InputVolume) -> Result<CorrectionParams> {
        Ok(self.predict_batch(&[volume])?[0])
    }

    /// Resizes image and mask to the network input and assembles the volume.
    pub fn prepare_volume(
        &self,
        img: &LinearImage,
        mask: &SemanticMask,
        norm: &NormalizationStats,
        class_count: usize,
    ) -> Result<InputVolume> {
        check_same_dims(img, mask)?;
        let s = self.spec.input_size;
        let small = resize_bilinear(img, s, s)?;
        let small_mask = resize_nearest(mask, s, s)?;
        assemble_input(&small, &small_mask, norm, class_count)
    }

    /// Predicts the correction from a reduced copy and applies it to the full
    /// image. The result is unclamped.
    pub fn correct_image(
        &mut self,
        img: &LinearImage,
        mask: &SemanticMask,
        norm: &NormalizationStats,
        class_count: usize,
    ) -> Result<(LinearImage, CorrectionParams)> {
        let volume = self.prepare_volume(img, mask, norm, class_count)?;
        let params = self.predict(&volume)?;
        Ok((apply_correction(img, &params)?, params))
    }
}

fn set_mask_slice(conv: &mut Conv2d, value: f64) {
    let k2 = conv.kernel * conv.kernel;
    let cin = conv.in_channels;
    let w = conv.weight.value.data_mut();
    for o in 0..conv.out_channels {
        let start = (o * cin + 3) * k2;
        w[start..start + k2].iter_mut().for_each(|v| *v = value);
    }
}

fn inverse_softplus(y: f64) -> Result<f64> {
    if y.is_nan() || y <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "cannot produce output {y} through softplus"
        )));
    }
    // ln(e^y - 1), stable for large y.
    Ok(if y > 30.0 { y } else { y.exp_m1().ln() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorcast::{apply_distortion, inverse_params, rmse, DistortionParams};

    fn test_image(w: usize, h: usize) -> (LinearImage, SemanticMask) {
        let img = LinearImage::from_fn(w, h, |x, y| {
            [
                0.1 + 0.8 * x as f64 / w as f64,
                0.2 + 0.6 * y as f64 / h as f64,
                0.5,
            ]
        })
        .unwrap();
        let mask = SemanticMask::from_fn(w, h, |x, y| ((x / 4 + y / 4) % 3) as u8).unwrap();
        (img, mask)
    }

    #[test]
    fn zero_head_gives_ln2() {
        let mut net = SemanticWbNet::build(&NetworkSpec::benchmark(4)).unwrap();
        let (img, mask) = test_image(32, 32);
        let vol = net
            .prepare_volume(&img, &mask, &NormalizationStats::identity(), 3)
            .unwrap();
        let p = net.predict(&vol).unwrap();
        for v in p.to_array() {
            assert!((v - (std::f64::consts::LN_2 + POSITIVITY_FLOOR)).abs() < 1e-15);
        }
    }

    #[test]
    fn full_scale_mask_slice_is_one_eleventh() {
        let net = SemanticWbNet::init_weights(&NetworkSpec::full_scale(4), 1).unwrap();
        let conv = net.first_conv();
        assert_eq!(
            (conv.out_channels, conv.in_channels, conv.kernel),
            (96, 4, 11)
        );
        let slice = net.mask_slice();
        assert_eq!(slice.len(), 96 * 121);
        assert!(slice.iter().all(|&v| v == 1.0 / 11.0));
    }

    #[test]
    fn three_channel_has_no_mask_slice() {
        let net = SemanticWbNet::init_weights(&NetworkSpec::desk(3), 1).unwrap();
        assert!(net.mask_slice().is_empty());
        assert_eq!(net.first_conv().in_channels, 3);
        let w = net.first_conv().weight.value.data();
        assert!(w.iter().all(|&v| v != 1.0 / 11.0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = SemanticWbNet::init_weights(&NetworkSpec::desk(4), 9).unwrap();
        let b = SemanticWbNet::init_weights(&NetworkSpec::desk(4), 9).unwrap();
        let c = SemanticWbNet::init_weights(&NetworkSpec::desk(4), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_zero_and_gaussian_spread() {
        let net = SemanticWbNet::init_weights(&NetworkSpec::desk(3), 4).unwrap();
        for p in net.body().params() {
            if p.name.ends_with(".bias") {
                assert!(p.value.data().iter().all(|&v| v == 0.0));
            } else if p.value.len() > 1000 {
                let n = p.value.len() as f64;
                let mean = p.value.data().iter().sum::<f64>() / n;
                let var = p
                    .value
                    .data()
                    .iter()
                    .map(|v| (v - mean).powi(2))
                    .sum::<f64>()
                    / n;
                assert!(mean.abs() < 1e-3, "{} mean {mean}", p.name);
                assert!(
                    (var.sqrt() - 0.01).abs() < 1e-3,
                    "{} std {}",
                    p.name,
                    var.sqrt()
                );
            }
        }
    }

    #[test]
    fn head_is_flagged_and_conv_is_not() {
        let net = SemanticWbNet::build(&NetworkSpec::desk(4)).unwrap();
        let fc: Vec<_> = net
            .body()
            .params()
            .into_iter()
            .filter(|p| p.name.starts_with("fc"))
            .collect();
        assert_eq!(fc.len(), 8);
        assert!(fc.iter().all(|p| p.new_layer));
        assert_eq!(fc[6].name, "fc9.weight");
        assert!(net
            .body()
            .params()
            .iter()
            .filter(|p| p.name.starts_with("conv"))
            .all(|p| !p.new_layer));
    }

    #[test]
    fn ablation_arms_differ_only_in_first_layer_channels() {
        let a = SemanticWbNet::build(&NetworkSpec::desk(3)).unwrap();
        let b = SemanticWbNet::build(&NetworkSpec::desk(4)).unwrap();
        let pa = a.body().params();
        let pb = b.body().params();
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.name, y.name);
            if x.name == "conv1.weight" {
                let (sx, sy) = (x.value.shape(), y.value.shape());
                assert_eq!((sx[0], sx[2], sx[3]), (sy[0], sy[2], sy[3]));
                assert_eq!((sx[1], sy[1]), (3, 4));
            } else {
                assert_eq!(x.value.shape(), y.value.shape());
            }
        }
    }

    #[test]
    fn paired_init_shares_rgb_weights() {
        let a = SemanticWbNet::init_weights(&NetworkSpec::benchmark(3), 6).unwrap();
        let b = SemanticWbNet::init_weights(&NetworkSpec::benchmark(4), 6).unwrap();
        for (x, y) in a.body().params().iter().zip(b.body().params()) {
            if x.name != "conv1.weight" {
                assert_eq!(x.value, y.value, "{}", x.name);
            }
        }
        let (ca, cb) = (a.first_conv(), b.first_conv());
        for o in 0..ca.out_channels {
            let rgb_a = &ca.weight.value.data()[o * 27..(o + 1) * 27];
            let rgb_b = &cb.weight.value.data()[o * 36..o * 36 + 27];
            assert_eq!(rgb_a, rgb_b);
        }
        assert!(b.mask_slice().iter().all(|&v| v == 1.0 / 11.0));
    }

    #[test]
    fn identity_net_is_identity() {
        let spec = NetworkSpec::benchmark(4);
        let mut net = SemanticWbNet::constant(&spec, &CorrectionParams::IDENTITY).unwrap();
        let (img, mask) = test_image(40, 24);
        let (out, p) = net
            .correct_image(&img, &mask, &NormalizationStats::identity(), 3)
            .unwrap();
        for v in p.to_array() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rigged_inverse_recovers_source() {
        let spec = NetworkSpec::benchmark(4);
        let d = DistortionParams::new(1.2, 0.8, 1.1, 0.9).unwrap();
        let mut net = SemanticWbNet::constant(&spec, &inverse_params(&d)).unwrap();
        let (img, mask) = test_image(48, 36);
        let cast = apply_distortion(&img, &d).unwrap();
        let (out, _) = net
            .correct_image(&cast, &mask, &NormalizationStats::identity(), 3)
            .unwrap();
        assert!(rmse(&out, &img).unwrap() < 1e-6);
    }

    #[test]
    fn mask_changes_prediction_iff_mask_weights_nonzero() {
        let spec = NetworkSpec::benchmark(4);
        let mut net = SemanticWbNet::init_weights(&spec, 3).unwrap();
        let (img, _) = test_image(32, 32);
        let zeros = SemanticMask::filled(32, 32, 0).unwrap();
        let ones = SemanticMask::filled(32, 32, 1).unwrap();
        let norm = NormalizationStats::identity();
        let a = net.prepare_volume(&img, &zeros, &norm, 2).unwrap();
        let b = net.prepare_volume(&img, &ones, &norm, 2).unwrap();
        assert_ne!(net.predict(&a).unwrap(), net.predict(&b).unwrap());

        net.fill_mask_slice(0.0).unwrap();
        assert_eq!(net.predict(&a).unwrap(), net.predict(&b).unwrap());
    }

    #[test]
    fn predictions_always_positive() {
        let spec = NetworkSpec {
            init: InitScheme::Gaussian { std: 3.0 },
            ..NetworkSpec::benchmark(4)
        };
        let mut net = SemanticWbNet::init_weights(&spec, 8).unwrap();
        let (img, mask) = test_image(32, 32);
        let vol = net
            .prepare_volume(&img, &mask, &NormalizationStats::identity(), 3)
            .unwrap();
        let p = net.predict(&vol).unwrap();
        assert!(p.to_array().iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut net = SemanticWbNet::build(&NetworkSpec::benchmark(3)).unwrap();
        assert!(net.forward(&Tensor::zeros(&[1, 4, 16, 16])).is_err());
        assert!(net.forward(&Tensor::zeros(&[1, 3, 32, 32])).is_err());
        assert!(net.forward(&Tensor::zeros(&[1, 3, 16, 16])).is_ok());
    }

    #[test]
    fn large_outputs_follow_softplus_asymptote() {
        let spec = NetworkSpec::benchmark(3);
        let target = CorrectionParams::new(40.0, 35.0, 50.0, 45.0).unwrap();
        let mut net = SemanticWbNet::constant(&spec, &target).unwrap();
        let x = Tensor::zeros(&[1, 3, 16, 16]);
        let out = net.forward(&x).unwrap();
        for (o, t) in out.data().iter().zip(target.to_array()) {
            assert!((o - t).abs() < 1e-12);
        }
    }
}
