use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{Dataset, MANIFEST_FILE};
use super::report::{
    AblationReport, MaskSensitivity, ReferenceValues, ReportRow, SeedPair, ShuffleStudy, Subset,
    GREY_WORLD, NO_OP, REPORT_VERSION, WHITE_PATCH, WITHOUT_MASK, WITH_MASK,
};
use crate::augment::{write_manifest, Sample, Split};
use crate::baselines::{grey_world, white_patch};
use crate::colorcast::{apply_correction, compensated_mean, rmse, CorrectionParams};
use crate::error::{Error, Result, StageExt};
use crate::imaging::{resize_nearest, LinearImage, NormalizationStats, SemanticMask};
use crate::model::{prepare_examples, train, Checkpoint, Example, SemanticWbNet, Trainer};

/// Fixed-rule correctors scored next to the learned models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    NoOp,
    GreyWorld,
    WhitePatch,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::NoOp, Baseline::GreyWorld, Baseline::WhitePatch];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::NoOp => NO_OP,
            Baseline::GreyWorld => GREY_WORLD,
            Baseline::WhitePatch => WHITE_PATCH,
        }
    }

    pub fn estimate(self, img: &LinearImage) -> Result<CorrectionParams> {
        match self {
            Baseline::NoOp => Ok(CorrectionParams::IDENTITY),
            Baseline::GreyWorld => grey_world(img),
            Baseline::WhitePatch => white_patch(img),
        }
    }
}

/// Per-sample RMSE of a baseline against each sample's reference.
pub fn evaluate_baseline(baseline: Baseline, samples: &[Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let params = baseline.estimate(&s.image)?;
            rmse(&apply_correction(&s.image, &params)?, &s.reference)
        })
        .collect()
}

/// Per-sample RMSE of a network's full-resolution correction.
pub fn evaluate_network(
    net: &mut SemanticWbNet,
    norm: &NormalizationStats,
    class_count: usize,
    samples: &[Sample],
) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let (corrected, _) = net.correct_image(&s.image, &s.mask, norm, class_count)?;
            rmse(&corrected, &s.reference)
        })
        .collect()
}

/// The `all` row, plus a `gamma=1` row when the split has pinned samples.
pub fn subset_rows(
    dataset: &Dataset,
    samples: &[Sample],
    method: &str,
    seed: Option<u64>,
    per_sample: Vec<f64>,
) -> Vec<ReportRow> {
    let pinned: Vec<f64> = samples
        .iter()
        .zip(&per_sample)
        .filter(|(s, _)| dataset.is_gamma_one(s))
        .map(|(_, &v)| v)
        .collect();
    let mut rows = vec![ReportRow::new(method, seed, Subset::All, per_sample)];
    if !pinned.is_empty() {
        rows.push(ReportRow::new(method, seed, Subset::GammaOne, pinned));
    }
    rows
}

#[derive(Debug, Clone)]
pub struct TrainedArm {
    pub seed: u64,
    pub net: SemanticWbNet,
    pub loss_history: Vec<f64>,
}

impl TrainedArm {
    pub fn checkpoint(&self, cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Checkpoint> {
        let trainer = Trainer {
            loss_history: self.loss_history.clone(),
            epoch: self.loss_history.len(),
            ..Trainer::new(self.net.clone(), cfg.train_config(self.seed))?
        };
        Ok(Checkpoint::from_trainer(
            &trainer,
            dataset.class_count(),
            dataset.normalization()?.clone(),
        ))
    }
}

/// Network inputs for the training split. Volumes carry all four planes, so
/// both arms read the same prepared data.
pub fn training_examples(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<Example>> {
    let probe = SemanticWbNet::build(&cfg.network.with_channels(4))?;
    prepare_examples(
        &probe,
        &dataset.manifest,
        &dataset.train,
        dataset.normalization()?,
    )
}

/// Trains one arm from the seed's paired initialization.
pub fn train_arm(
    cfg: &ExperimentConfig,
    examples: &[Example],
    channels: usize,
    seed: u64,
) -> Result<TrainedArm> {
    let spec = cfg.network.with_channels(channels);
    let net = SemanticWbNet::init_weights(&spec, seed)?;
    let (net, loss_history) = train(net, examples, &cfg.train_config(seed))?;
    Ok(TrainedArm {
        seed,
        net,
        loss_history,
    })
}

#[derive(Debug, Clone)]
pub struct ArmPair {
    pub without_mask: TrainedArm,
    pub with_mask: TrainedArm,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub report: AblationReport,
    pub dataset: Dataset,
    pub pairs: Vec<ArmPair>,
}

/// Synthesizes the dataset once, then trains and scores both arms for every
/// seed, alongside the fixed baselines.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationOutcome> {
    let dataset = Dataset::build(cfg)?;
    run_ablation_on(cfg, dataset)
}

pub fn run_ablation_on(cfg: &ExperimentConfig, dataset: Dataset) -> Result<AblationOutcome> {
    cfg.validate().stage("config")?;
    let examples = training_examples(cfg, &dataset).stage("prepare")?;
    let norm = dataset.normalization().stage("prepare")?.clone();
    let class_count = dataset.class_count();
    let eval = dataset.split(cfg.eval_split);
    if eval.is_empty() {
        return Err(Error::Config("evaluation split is empty".into())).stage("eval");
    }

    let mut rows = Vec::new();
    for baseline in Baseline::ALL {
        let per_sample = evaluate_baseline(baseline, eval).stage("eval")?;
        rows.extend(subset_rows(
            &dataset,
            eval,
            baseline.name(),
            None,
            per_sample,
        ));
    }

    let mut pairs = Vec::new();
    let mut seed_pairs = Vec::new();
    for seed in cfg.seeds() {
        let mut without_mask = train_arm(cfg, &examples, 3, seed).stage("train")?;
        let mut with_mask = train_arm(cfg, &examples, 4, seed).stage("train")?;
        let mut means = [0.0; 2];
        for (i, (arm, name)) in [
            (&mut without_mask, WITHOUT_MASK),
            (&mut with_mask, WITH_MASK),
        ]
        .into_iter()
        .enumerate()
        {
            let per_sample =
                evaluate_network(&mut arm.net, &norm, class_count, eval).stage("eval")?;
            means[i] = compensated_mean(&per_sample);
            rows.extend(subset_rows(&dataset, eval, name, Some(seed), per_sample));
        }
        seed_pairs.push(SeedPair {
            seed,
            without_mask: means[0],
            with_mask: means[1],
            relative_reduction: (means[0] - means[1]) / means[0],
        });
        pairs.push(ArmPair {
            without_mask,
            with_mask,
        });
    }

    let reductions: Vec<f64> = seed_pairs.iter().map(|p| p.relative_reduction).collect();
    let report = AblationReport {
        format_version: REPORT_VERSION,
        seeds: cfg.seeds(),
        train_samples: dataset.train.len(),
        test_samples: eval.len(),
        gamma_one_samples: eval.iter().filter(|s| dataset.is_gamma_one(s)).count(),
        rows,
        with_mask_wins: seed_pairs
            .iter()
            .filter(|p| p.with_mask < p.without_mask)
            .count(),
        mean_relative_reduction: compensated_mean(&reductions),
        pairs: seed_pairs,
        reference: ReferenceValues::default(),
    };
    Ok(AblationOutcome {
        report,
        dataset,
        pairs,
    })
}

/// Writes `report.json`, `report.txt`, the manifest, and one checkpoint per
/// trained arm into `dir`.
pub fn write_ablation(outcome: &AblationOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("report.json", outcome.report.to_json()?)?;
    write("report.txt", outcome.report.to_text())?;
    write_manifest(&outcome.dataset.manifest, dir.join(MANIFEST_FILE))?;
    for pair in &outcome.pairs {
        for (arm, name) in [
            (&pair.without_mask, WITHOUT_MASK),
            (&pair.with_mask, WITH_MASK),
        ] {
            arm.checkpoint(cfg, &outcome.dataset)?
                .save(dir.join(format!("{name}_seed{}.json", arm.seed)))?;
        }
    }
    Ok(())
}

/// Predictions and corrections of one image under two masks.
pub fn run_mask_sensitivity(
    net: &mut SemanticWbNet,
    image: &LinearImage,
    mask_a: &SemanticMask,
    mask_b: &SemanticMask,
    norm: &NormalizationStats,
    class_count: usize,
) -> Result<(MaskSensitivity, [LinearImage; 2])> {
    if !net.spec().uses_mask() {
        return Err(Error::NoMaskChannel);
    }
    let (corrected_a, params_a) = net.correct_image(image, mask_a, norm, class_count)?;
    let (corrected_b, params_b) = net.correct_image(image, mask_b, norm, class_count)?;
    let report = MaskSensitivity {
        params_a,
        params_b,
        param_delta: param_distance(&params_a, &params_b),
        correction_rmse: rmse(&corrected_a, &corrected_b)?,
    };
    Ok((report, [corrected_a, corrected_b]))
}

pub fn param_distance(a: &CorrectionParams, b: &CorrectionParams) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Scores every sample with its own mask and with the mask of the sample half
/// the split away (resized to fit), so the borrowed mask comes from an
/// unrelated source.
pub fn mask_shuffle_study(
    net: &mut SemanticWbNet,
    norm: &NormalizationStats,
    class_count: usize,
    samples: &[Sample],
) -> Result<ShuffleStudy> {
    if !net.spec().uses_mask() {
        return Err(Error::NoMaskChannel);
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::Config(
            "mask shuffle needs at least two samples".into(),
        ));
    }
    let offset = (n / 2).max(1);
    let mut deltas = Vec::with_capacity(n);
    let mut correct = Vec::with_capacity(n);
    let mut shuffled = Vec::with_capacity(n);
    for (i, s) in samples.iter().enumerate() {
        let other = &samples[(i + offset) % n].mask;
        let borrowed = resize_nearest(other, s.image.width(), s.image.height())?;
        let (report, [with_own, with_other]) =
            run_mask_sensitivity(net, &s.image, &s.mask, &borrowed, norm, class_count)?;
        deltas.push(report.param_delta);
        correct.push(rmse(&with_own, &s.reference)?);
        shuffled.push(rmse(&with_other, &s.reference)?);
    }
    Ok(ShuffleStudy {
        samples: n,
        mean_param_delta: compensated_mean(&deltas),
        rmse_correct: compensated_mean(&correct),
        rmse_shuffled: compensated_mean(&shuffled),
    })
}

/// Per-sample report rows for a network on a split.
pub fn eval_rows(
    net: &mut SemanticWbNet,
    norm: &NormalizationStats,
    dataset: &Dataset,
    split: Split,
    method: &str,
) -> Result<Vec<ReportRow>> {
    let samples = dataset.split(split);
    let per_sample = evaluate_network(net, norm, dataset.class_count(), samples)?;
    Ok(subset_rows(dataset, samples, method, None, per_sample))
}
