use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::colorcast::{compensated_mean, CorrectionParams};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

pub const NO_OP: &str = "no-op";
pub const GREY_WORLD: &str = "grey-world";
pub const WHITE_PATCH: &str = "white-patch";
pub const WITHOUT_MASK: &str = "without-mask";
pub const WITH_MASK: &str = "with-mask";

/// Which test samples a row averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    /// Samples whose cast had its gamma pinned to 1.
    GammaOne,
}

impl Subset {
    pub fn label(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::GammaOne => "gamma=1",
        }
    }
}

/// Mean RMSE of one method over one subset, with the per-sample values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// Training seed for learned methods.
    pub seed: Option<u64>,
    pub subset: Subset,
    pub mean_rmse: f64,
    pub per_sample: Vec<f64>,
}

impl ReportRow {
    pub fn new(method: &str, seed: Option<u64>, subset: Subset, per_sample: Vec<f64>) -> Self {
        Self {
            method: method.to_owned(),
            seed,
            subset,
            mean_rmse: compensated_mean(&per_sample),
            per_sample,
        }
    }
}

/// Paired comparison of the two arms trained with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed: u64,
    pub without_mask: f64,
    pub with_mask: f64,
    /// `(without - with) / without`.
    pub relative_reduction: f64,
}

/// Published full-scale numbers, kept for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub without_mask_all: f64,
    pub with_mask_all: f64,
    pub without_mask_gamma_one: f64,
    pub with_mask_gamma_one: f64,
    pub note: String,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        Self {
            without_mask_all: 53.8815,
            with_mask_all: 31.1355,
            without_mask_gamma_one: 51.8160,
            with_mask_gamma_one: 20.1450,
            note: "full-scale values (ADE20K scenes, pretrained AlexNet backbone); \
                   not reproduced by the synthetic benchmark"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub format_version: u32,
    pub seeds: Vec<u64>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub gamma_one_samples: usize,
    pub rows: Vec<ReportRow>,
    pub pairs: Vec<SeedPair>,
    pub mean_relative_reduction: f64,
    /// Seeds for which the with-mask arm has the lower mean RMSE.
    pub with_mask_wins: usize,
    pub reference: ReferenceValues,
}

impl AblationReport {
    pub fn row(&self, method: &str, seed: Option<u64>, subset: Subset) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.seed == seed && r.subset == subset)
    }

    /// Mean over seeds of a learned method's subset means.
    pub fn seed_mean(&self, method: &str, subset: Subset) -> Option<f64> {
        let means: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|&s| self.row(method, Some(s), subset).map(|r| r.mean_rmse))
            .collect();
        (!means.is_empty()).then(|| compensated_mean(&means))
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self, "report")
    }

    /// Aligned text table of the mean RMSE per method and subset.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Mean RMSE (0-255 scale) over {} test samples ({} with gamma=1), {} training samples",
            self.test_samples, self.gamma_one_samples, self.train_samples
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>10} {:>10}",
            "method", "seed", "all", "gamma=1"
        );
        let _ = writeln!(out, "{}", "-".repeat(43));
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut line = |method: &str, seed: String, all: Option<f64>, one: Option<f64>| {
            let _ = writeln!(
                out,
                "{method:<14} {seed:>6} {:>10} {:>10}",
                cell(all),
                cell(one)
            );
        };
        for method in [NO_OP, GREY_WORLD, WHITE_PATCH] {
            let mean = |s| self.row(method, None, s).map(|r| r.mean_rmse);
            line(
                method,
                "-".into(),
                mean(Subset::All),
                mean(Subset::GammaOne),
            );
        }
        for &seed in &self.seeds {
            for method in [WITHOUT_MASK, WITH_MASK] {
                let mean = |s| self.row(method, Some(seed), s).map(|r| r.mean_rmse);
                line(
                    method,
                    seed.to_string(),
                    mean(Subset::All),
                    mean(Subset::GammaOne),
                );
            }
        }
        for method in [WITHOUT_MASK, WITH_MASK] {
            line(
                method,
                "mean".into(),
                self.seed_mean(method, Subset::All),
                self.seed_mean(method, Subset::GammaOne),
            );
        }
        let _ = writeln!(out);
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "seed {}: {:.4} -> {:.4} ({:+.1}% reduction)",
                p.seed,
                p.without_mask,
                p.with_mask,
                100.0 * p.relative_reduction
            );
        }
        let _ = writeln!(
            out,
            "mask channel wins {}/{} seeds, mean reduction {:.1}%",
            self.with_mask_wins,
            self.pairs.len(),
            100.0 * self.mean_relative_reduction
        );
        let r = &self.reference;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Reference: without/with mask {:.4}/{:.4} (all), {:.4}/{:.4} (gamma=1); {}.",
            r.without_mask_all,
            r.with_mask_all,
            r.without_mask_gamma_one,
            r.with_mask_gamma_one,
            r.note
        );
        out
    }
}

/// Per-sample RMSE of one model or baseline over a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        to_json(self, "report")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:<8} n={:<5} mean RMSE {:.4}",
                r.method,
                r.subset.label(),
                r.per_sample.len(),
                r.mean_rmse
            );
        }
        out
    }
}

/// Predictions for one image under two masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSensitivity {
    pub params_a: CorrectionParams,
    pub params_b: CorrectionParams,
    /// Euclidean distance between the two parameter vectors.
    pub param_delta: f64,
    /// RMSE between the two corrected images.
    pub correction_rmse: f64,
}

/// Correct masks against masks borrowed from other samples, over a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleStudy {
    pub samples: usize,
    pub mean_param_delta: f64,
    pub rmse_correct: f64,
    pub rmse_shuffled: f64,
}

pub(crate) fn to_json<T: Serialize>(value: &T, what: &'static str) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Malformed {
            what,
            message: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn row_mean_recomputes(values in prop::collection::vec(0.0f64..255.0, 1..200)) {
            let row = ReportRow::new("m", None, Subset::All, values.clone());
            let naive = values.iter().sum::<f64>() / values.len() as f64;
            prop_assert!((row.mean_rmse - naive).abs() <= 1e-12 * naive.max(1.0));
        }
    }

    #[test]
    fn text_table_lists_every_method() {
        let rows = vec![
            ReportRow::new(NO_OP, None, Subset::All, vec![10.0]),
            ReportRow::new(WITHOUT_MASK, Some(0), Subset::All, vec![8.0]),
            ReportRow::new(WITH_MASK, Some(0), Subset::All, vec![4.0]),
        ];
        let report = AblationReport {
            format_version: REPORT_VERSION,
            seeds: vec![0],
            train_samples: 1,
            test_samples: 1,
            gamma_one_samples: 0,
            rows,
            pairs: vec![SeedPair {
                seed: 0,
                without_mask: 8.0,
                with_mask: 4.0,
                relative_reduction: 0.5,
            }],
            mean_relative_reduction: 0.5,
            with_mask_wins: 1,
            reference: ReferenceValues::default(),
        };
        let text = report.to_text();
        for needle in [NO_OP, GREY_WORLD, WITH_MASK, "53.8815", "20.1450", "+50.0%"] {
            assert!(text.contains(needle), "missing {needle}:\n{text}");
        }
        assert_eq!(report.seed_mean(WITH_MASK, Subset::All), Some(4.0));
        assert_eq!(report.seed_mean(WITH_MASK, Subset::GammaOne), None);
    }
}
