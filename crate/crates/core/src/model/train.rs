use rand::seq::SliceRandom;

use super::{SemanticWbNet, TrainConfig};
use crate::augment::{source_rng, DatasetManifest, Sample};
use crate::colorcast::CorrectionParams;
use crate::error::{Error, Result};
use crate::imaging::{
    resize_bilinear, InputVolume, LinearImage, NormalizationMode, NormalizationStats,
};
use crate::nn::{mse_loss, Sgd, Tensor};

/// A prepared network input with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub volume: InputVolume,
    pub target: CorrectionParams,
}

/// RGB statistics of the training images. Per-channel statistics use the
/// full-resolution images; the mean image is taken at the network input size.
pub fn fit_normalization(
    mode: NormalizationMode,
    images: &[&LinearImage],
    input_size: usize,
) -> Result<NormalizationStats> {
    match mode {
        NormalizationMode::PerChannel => NormalizationStats::per_channel(images.iter().copied()),
        NormalizationMode::MeanImage => {
            let resized = images
                .iter()
                .map(|img| resize_bilinear(img, input_size, input_size))
                .collect::<Result<Vec<_>>>()?;
            NormalizationStats::mean_image(&resized, input_size, input_size)
        }
    }
}

/// Builds network inputs for `samples`, targeting each record's `truth`.
pub fn prepare_examples(
    net: &SemanticWbNet,
    manifest: &DatasetManifest,
    samples: &[Sample],
    norm: &NormalizationStats,
) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| {
            let record = manifest
                .records
                .get(s.record)
                .ok_or_else(|| Error::Malformed {
                    what: "manifest",
                    message: format!("sample refers to missing record {}", s.record),
                })?;
            Ok(Example {
                volume: net.prepare_volume(&s.image, &s.mask, norm, manifest.class_count)?,
                target: record.truth,
            })
        })
        .collect()
}

/// Mini-batch SGD over prepared examples, with optimizer state kept between
/// epochs so training can be checkpointed and resumed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: SemanticWbNet,
    pub sgd: Sgd,
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub loss_history: Vec<f64>,
}

impl Trainer {
    pub fn new(net: SemanticWbNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let sgd = Sgd::new(config.optimizer.clone(), net.body().params());
        Ok(Self {
            net,
            sgd,
            config,
            epoch: 0,
            loss_history: Vec::new(),
        })
    }

    /// Example order for an epoch: a shuffle seeded by `(seed, epoch)`.
    pub fn epoch_order(&self, len: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        let mut rng = source_rng(self.config.seed, &format!("epoch-{epoch}"));
        order.shuffle(&mut rng);
        order
    }

    /// Trains one epoch and returns its mean per-example loss.
    pub fn run_epoch(&mut self, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Config("no training examples".into()));
        }
        let order = self.epoch_order(data.len(), self.epoch);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let volumes: Vec<&InputVolume> = chunk.iter().map(|&i| &data[i].volume).collect();
            let input = self.net.batch_tensor(&volumes)?;
            let targets: Vec<f64> = chunk
                .iter()
                .flat_map(|&i| data[i].target.to_array())
                .collect();
            let target = Tensor::new(vec![chunk.len(), super::OUTPUTS], targets)?;

            self.net.body_mut().zero_grad();
            let pred = self.net.forward(&input)?;
            let (loss, grad) = mse_loss(&pred, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    value: loss,
                    context: format!("epoch {} batch {b}", self.epoch),
                });
            }
            self.net.body_mut().backward(&grad)?;
            let mut params = self.net.body_mut().params_mut();
            self.sgd.step(&mut params, self.epoch)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        self.loss_history.push(mean);
        self.epoch += 1;
        Ok(mean)
    }

    /// Runs epochs until `config.epochs` have completed.
    pub fn fit(&mut self, data: &[Example]) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch(data)?;
        }
        Ok(())
    }
}

/// Trains `net` for `cfg.epochs` and returns it with the per-epoch losses.
pub fn train(
    net: SemanticWbNet,
    data: &[Example],
    cfg: &TrainConfig,
) -> Result<(SemanticWbNet, Vec<f64>)> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    trainer.fit(data)?;
    Ok((trainer.net, trainer.loss_history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::SemanticMask;
    use crate::model::NetworkSpec;
    use crate::nn::OptimizerConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Targets are a smooth function of mean brightness, learnable from RGB.
    fn toy_task(n: usize, spec: &NetworkSpec) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = SemanticWbNet::build(spec).unwrap();
        let s = spec.input_size;
        (0..n)
            .map(|_| {
                let level: f64 = rng.random_range(0.2..0.8);
                let img = LinearImage::from_fn(s, s, |_, _| {
                    [
                        level + rng.random_range(-0.05..0.05),
                        level * 0.8,
                        level * 0.6,
                    ]
                })
                .unwrap();
                let mask = SemanticMask::filled(s, s, 0).unwrap();
                let volume = net
                    .prepare_volume(&img, &mask, &NormalizationStats::identity(), 1)
                    .unwrap();
                let target =
                    CorrectionParams::new(0.7 + level, 1.0, 1.3 - 0.5 * level, 1.0).unwrap();
                Example { volume, target }
            })
            .collect()
    }

    fn weights(net: &SemanticWbNet) -> crate::nn::ParamStore {
        crate::nn::ParamStore::from_params(net.body().params())
    }

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input_size: 16,
            ..NetworkSpec::benchmark(4)
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let spec = small_spec();
        let data = toy_task(8, &spec);
        let net = SemanticWbNet::init_weights(&spec, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            optimizer: OptimizerConfig {
                base_lr: 0.0,
                ..OptimizerConfig::default()
            },
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (trained, history) = train(net.clone(), &data, &cfg).unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(weights(&trained), weights(&net));
    }

    #[test]
    fn loss_decreases_on_learnable_task() {
        let spec = small_spec();
        let data = toy_task(48, &spec);
        let net = SemanticWbNet::init_weights(&spec, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            optimizer: OptimizerConfig {
                base_lr: 1e-3,
                momentum: 0.9,
                ..OptimizerConfig::default()
            },
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, history) = train(net, &data, &cfg).unwrap();
        assert_eq!(history.len(), 30);
        assert!(
            history[29] < history[0],
            "first {} last {}",
            history[0],
            history[29]
        );
    }

    #[test]
    fn same_seed_same_history() {
        let spec = small_spec();
        let data = toy_task(16, &spec);
        let cfg = TrainConfig {
            epochs: 3,
            optimizer: OptimizerConfig {
                base_lr: 1e-3,
                ..OptimizerConfig::default()
            },
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            let net = SemanticWbNet::init_weights(&spec, 5).unwrap();
            train(net, &data, &cfg).unwrap()
        };
        let (net_a, hist_a) = run();
        let (net_b, hist_b) = run();
        assert_eq!(hist_a, hist_b);
        assert_eq!(weights(&net_a), weights(&net_b));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let spec = small_spec();
        let data = toy_task(8, &spec);
        let mut net = SemanticWbNet::init_weights(&spec, 1).unwrap();
        net.body_mut().params_mut()[0].value.data_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(net, &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn epoch_orders_are_permutations_and_vary() {
        let net = SemanticWbNet::build(&small_spec()).unwrap();
        let trainer = Trainer::new(net, TrainConfig::default()).unwrap();
        let a = trainer.epoch_order(20, 0);
        let b = trainer.epoch_order(20, 1);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        assert_ne!(a, b);
        assert_eq!(a, trainer.epoch_order(20, 0));
    }
}
