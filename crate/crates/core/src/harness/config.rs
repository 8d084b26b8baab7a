use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::benchmark::BenchmarkConfig;
use crate::augment::{AugmentSpec, Split};
use crate::error::{Error, Result};
use crate::model::{NetworkSpec, TrainConfig};
use crate::nn::OptimizerConfig;

/// Where source images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Generated semantic benchmark.
    Benchmark(BenchmarkConfig),
    /// Directories of `<stem>.png|.ppm` images with `<stem>_mask.png` masks.
    Directory {
        train_dir: PathBuf,
        test_dir: PathBuf,
        class_count: usize,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Benchmark(BenchmarkConfig::default())
    }
}

impl DatasetConfig {
    pub fn class_count(&self) -> usize {
        match self {
            DatasetConfig::Benchmark(b) => b.class_count,
            DatasetConfig::Directory { class_count, .. } => *class_count,
        }
    }
}

/// One experiment: data, casts, architecture, and training schedule.
///
/// `network` describes the with-mask arm; the without-mask arm is the same
/// spec with three input channels, so the pair cannot drift apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed. Overrides `augment.seed` and `train.seed`; repeat `r`
    /// trains with `seed + r`.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub augment: AugmentSpec,
    /// The first this-many test sources (by id) get gamma pinned to 1.
    pub gamma_one_test_sources: usize,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    /// Paired seeds in an ablation.
    pub repeats: usize,
    pub eval_split: Split,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let bench = BenchmarkConfig::default();
        Self {
            seed: 0,
            augment: AugmentSpec {
                samples_per_image: 10,
                distortion_model: bench.distortion_model(),
                ..AugmentSpec::default()
            },
            dataset: DatasetConfig::Benchmark(bench),
            gamma_one_test_sources: 25,
            network: NetworkSpec::benchmark(4),
            // From-scratch training at desk scale needs a larger, flat
            // learning rate than the fine-tuning schedule.
            train: TrainConfig {
                epochs: 30,
                batch_size: 16,
                optimizer: OptimizerConfig {
                    base_lr: 3e-3,
                    momentum: 0.9,
                    decay_factor: 1.0,
                    new_layer_lr_multiplier: 1.0,
                    ..OptimizerConfig::default()
                },
                ..TrainConfig::default()
            },
            repeats: 3,
            eval_split: Split::Test,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parses a config, filling every absent field (at any depth) from
    /// [`ExperimentConfig::default`]. A tagged object whose `kind` differs
    /// from the default's replaces it instead.
    pub fn from_json(text: &str) -> Result<Self> {
        let invalid = |e: serde_json::Error| Error::Config(format!("invalid config: {e}"));
        let overrides: Value = serde_json::from_str(text).map_err(invalid)?;
        let mut merged = serde_json::to_value(Self::default()).map_err(invalid)?;
        merge(&mut merged, overrides);
        serde_json::from_value(merged).map_err(invalid)
    }

    pub fn to_json(&self) -> Result<String> {
        super::report::to_json(self, "config")
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetConfig::Benchmark(b) = &self.dataset {
            b.validate()?;
        }
        self.augment.validate(self.dataset.class_count())?;
        self.network.with_channels(3).validate()?;
        self.network.with_channels(4).validate()?;
        self.train.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// The without-mask and with-mask network specs.
    pub fn network_pair(&self) -> (NetworkSpec, NetworkSpec) {
        (self.network.with_channels(3), self.network.with_channels(4))
    }

    /// Training seeds of the paired repeats.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64)
            .map(|r| self.seed.wrapping_add(r))
            .collect()
    }

    /// Training settings for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(base), Value::Object(overrides))
            if overrides
                .get("kind")
                .is_none_or(|k| base.get("kind") == Some(k)) =>
        {
            for (key, value) in overrides {
                match base.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base.insert(key, value);
                    }
                }
            }
        }
        (base, overrides) => *base = overrides,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::DistortionModel;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 7, "repeats": 1}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.repeats, 1);
        assert_eq!(cfg.network, NetworkSpec::benchmark(4));
        assert_eq!(cfg.seeds(), vec![7]);

        let cfg = ExperimentConfig::from_json(
            r#"{"augment": {"samples_per_image": 2}, "dataset": {"size": 48}}"#,
        )
        .unwrap();
        let default = ExperimentConfig::default();
        assert_eq!(cfg.augment.samples_per_image, 2);
        assert_eq!(
            cfg.augment.distortion_model,
            default.augment.distortion_model
        );
        match cfg.dataset {
            DatasetConfig::Benchmark(b) => assert_eq!((b.size, b.train_sources), (48, 200)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn changing_kind_replaces_the_default() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "directory", "train_dir": "a", "test_dir": "b", "class_count": 3},
                "augment": {"distortion_model": {"kind": "uniform"}}}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.dataset,
            DatasetConfig::Directory {
                train_dir: "a".into(),
                test_dir: "b".into(),
                class_count: 3
            }
        );
        assert_eq!(cfg.augment.distortion_model, DistortionModel::Uniform);
    }

    #[test]
    fn arms_differ_only_in_channels() {
        let (a, b) = ExperimentConfig::default().network_pair();
        assert_eq!((a.input_channels, b.input_channels), (3, 4));
        assert_eq!(a.with_channels(4), b);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(ExperimentConfig::from_json("{\"seed\": \"x\"}").is_err());
        assert!(ExperimentConfig::from_json("{\"sed\": 1}").is_err());
        let cfg = ExperimentConfig {
            repeats: 0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        if let DatasetConfig::Benchmark(b) = &mut cfg.dataset {
            b.class_count = 8;
        }
        assert!(
            cfg.validate().is_err(),
            "gain table too short for 8 classes"
        );
    }
}
