//! Deterministic synthesis of color-cast training and test samples.
//!
//! Every source image gets its own ChaCha8 stream seeded from
//! `sha256(seed || source_id)`, so a sample's content depends only on the
//! spec and its source, never on the order sources are listed in. Each sample
//! applies its spatial ops to image and mask alike, then casts the image
//! color with `(I * gains)^gamma`; the mask is never color distorted.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colorcast::{apply_distortion, inverse_params, CorrectionParams, DistortionParams};
use crate::error::{Error, Result};
use crate::imaging::{
    check_same_dims, crop, flip_horizontal, save_image, save_mask, ImageFormat, LinearImage,
    NormalizationStats, SemanticMask,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialOpKind {
    FlipH,
    RandomCrop,
}

/// A spatial op as applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SpatialOp {
    FlipH,
    Crop {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
    },
}

impl SpatialOp {
    pub fn apply_image(&self, img: &LinearImage) -> Result<LinearImage> {
        match *self {
            SpatialOp::FlipH => Ok(flip_horizontal(img)),
            SpatialOp::Crop { x, y, w, h } => crop(img, x, y, w, h),
        }
    }

    pub fn apply_mask(&self, mask: &SemanticMask) -> Result<SemanticMask> {
        match *self {
            SpatialOp::FlipH => Ok(flip_horizontal(mask)),
            SpatialOp::Crop { x, y, w, h } => crop(mask, x, y, w, h),
        }
    }
}

/// How cast gains are chosen for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionModel {
    /// Independent uniform draws of r, g, b over the gain range.
    #[default]
    Uniform,
    /// Gains looked up from the dominant class of the sample's mask, plus
    /// uniform noise in `[-noise, noise]`, clamped to the gain range.
    ClassConditioned { gains: Vec<[f64; 3]>, noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub samples_per_image: usize,
    pub gain_range: [f64; 2],
    pub gamma_range: [f64; 2],
    pub spatial_ops: BTreeSet<SpatialOpKind>,
    /// Area fraction kept by a random crop.
    pub crop_fraction: f64,
    pub seed: u64,
    pub distortion_model: DistortionModel,
    /// Sources whose samples are synthesized with gamma pinned to 1.
    pub gamma_one_sources: BTreeSet<String>,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            samples_per_image: 16,
            gain_range: [0.7, 1.3],
            gamma_range: [0.85, 1.15],
            spatial_ops: [SpatialOpKind::FlipH, SpatialOpKind::RandomCrop].into(),
            crop_fraction: 0.8,
            seed: 0,
            distortion_model: DistortionModel::Uniform,
            gamma_one_sources: BTreeSet::new(),
        }
    }
}

impl AugmentSpec {
    /// Collapsed ranges and no spatial ops: every sample equals its source.
    pub fn identity(seed: u64) -> Self {
        Self {
            samples_per_image: 1,
            gain_range: [1.0, 1.0],
            gamma_range: [1.0, 1.0],
            spatial_ops: BTreeSet::new(),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        let range_ok =
            |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1];
        if self.samples_per_image == 0 {
            return Err(Error::Config("samples_per_image must be at least 1".into()));
        }
        if !range_ok(self.gain_range) || !range_ok(self.gamma_range) {
            return Err(Error::Config(format!(
                "ranges must be positive with low <= high: gain {:?}, gamma {:?}",
                self.gain_range, self.gamma_range
            )));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "crop_fraction must be in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if let DistortionModel::ClassConditioned { gains, noise } = &self.distortion_model {
            if gains.len() < class_count {
                return Err(Error::Config(format!(
                    "class-conditioned gain table has {} rows for {class_count} classes",
                    gains.len()
                )));
            }
            if !(noise.is_finite() && *noise >= 0.0)
                || gains.iter().flatten().any(|g| g.is_nan() || *g <= 0.0)
            {
                return Err(Error::Config(
                    "class gains must be positive, noise non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which part of the experiment a source belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub source_id: String,
    /// Index of the sample within its source.
    pub index: usize,
    pub distortion: DistortionParams,
    /// Always `inverse_params(distortion)`.
    pub truth: CorrectionParams,
    pub spatial: Vec<SpatialOp>,
    /// Word position of the source stream when this sample started drawing.
    pub rng_cursor: u64,
}

/// Where a source's files live, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub class_count: usize,
    pub spec: AugmentSpec,
    pub sources: Vec<SourceEntry>,
    pub records: Vec<SampleRecord>,
    pub split: BTreeMap<String, Split>,
    pub normalization: Option<NormalizationStats>,
}

impl DatasetManifest {
    pub fn split_of(&self, source_id: &str) -> Option<Split> {
        self.split.get(source_id).copied()
    }

    /// Indices of records whose source belongs to `split`.
    pub fn record_indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| self.split_of(&r.source_id) == Some(split))
            .map(|(i, _)| i)
            .collect()
    }
}

/// A source image with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    pub image: LinearImage,
    pub mask: SemanticMask,
}

impl Source {
    pub fn new(id: impl Into<String>, image: LinearImage, mask: SemanticMask) -> Result<Self> {
        check_same_dims(&image, &mask)?;
        Ok(Self {
            id: id.into(),
            image,
            mask,
        })
    }
}

/// A materialized sample: the cast image, its mask, and the uncast reference
/// (the source after the same spatial ops).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: usize,
    pub image: LinearImage,
    pub mask: SemanticMask,
    pub reference: LinearImage,
}

/// Seed of a source's stream: the first eight bytes of
/// `sha256(seed as little-endian || source_id)`.
pub fn source_seed(seed: u64, source_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(source_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn source_rng(seed: u64, source_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(source_seed(seed, source_id))
}

/// Four uniform draws in the order r, g, b, gamma.
pub fn sample_distortion(rng: &mut impl Rng, spec: &AugmentSpec) -> DistortionParams {
    let [glo, ghi] = spec.gain_range;
    let [ylo, yhi] = spec.gamma_range;
    DistortionParams {
        r: rng.random_range(glo..=ghi),
        g: rng.random_range(glo..=ghi),
        b: rng.random_range(glo..=ghi),
        gamma: rng.random_range(ylo..=yhi),
    }
}

fn draw_distortion(
    rng: &mut ChaCha8Rng,
    spec: &AugmentSpec,
    mask: &SemanticMask,
    pin_gamma: bool,
) -> DistortionParams {
    let mut d = match &spec.distortion_model {
        DistortionModel::Uniform => sample_distortion(rng, spec),
        DistortionModel::ClassConditioned { gains, noise } => {
            let [lo, hi] = spec.gain_range;
            let base = gains[usize::from(mask.dominant_label())];
            let mut jitter = |g: f64| (g + rng.random_range(-noise..=*noise)).clamp(lo, hi);
            let (r, g, b) = (jitter(base[0]), jitter(base[1]), jitter(base[2]));
            let [ylo, yhi] = spec.gamma_range;
            DistortionParams {
                r,
                g,
                b,
                gamma: rng.random_range(ylo..=yhi),
            }
        }
    };
    if pin_gamma {
        d.gamma = 1.0;
    }
    d
}

fn draw_spatial(rng: &mut ChaCha8Rng, spec: &AugmentSpec, dims: (usize, usize)) -> Vec<SpatialOp> {
    let mut ops = Vec::new();
    if spec.spatial_ops.contains(&SpatialOpKind::FlipH) && rng.random_bool(0.5) {
        ops.push(SpatialOp::FlipH);
    }
    if spec.spatial_ops.contains(&SpatialOpKind::RandomCrop) {
        let side = spec.crop_fraction.sqrt();
        let w = ((dims.0 as f64 * side).round() as usize).clamp(1, dims.0);
        let h = ((dims.1 as f64 * side).round() as usize).clamp(1, dims.1);
        let x = rng.random_range(0..=dims.0 - w);
        let y = rng.random_range(0..=dims.1 - h);
        ops.push(SpatialOp::Crop { x, y, w, h });
    }
    ops
}

fn apply_spatial(source: &Source, ops: &[SpatialOp]) -> Result<(LinearImage, SemanticMask)> {
    let mut image = source.image.clone();
    let mut mask = source.mask.clone();
    for op in ops {
        image = op.apply_image(&image)?;
        mask = op.apply_mask(&mask)?;
    }
    Ok((image, mask))
}

fn materialize(source: &Source, record: &SampleRecord, index: usize) -> Result<Sample> {
    let (reference, mask) = apply_spatial(source, &record.spatial)?;
    let image = apply_distortion(&reference, &record.distortion)?;
    Ok(Sample {
        record: index,
        image,
        mask,
        reference,
    })
}

fn synthesize_source(
    source: &Source,
    spec: &AugmentSpec,
    first_record: usize,
) -> Result<(Vec<SampleRecord>, Vec<Sample>)> {
    let mut rng = source_rng(spec.seed, &source.id);
    let pin_gamma = spec.gamma_one_sources.contains(&source.id);
    let mut records = Vec::with_capacity(spec.samples_per_image);
    let mut samples = Vec::with_capacity(spec.samples_per_image);
    for k in 0..spec.samples_per_image {
        let rng_cursor = rng.get_word_pos() as u64;
        let spatial = draw_spatial(&mut rng, spec, source.image.dims());
        let (reference, mask) = apply_spatial(source, &spatial)?;
        let distortion = draw_distortion(&mut rng, spec, &mask, pin_gamma);
        let image = apply_distortion(&reference, &distortion)?;
        records.push(SampleRecord {
            source_id: source.id.clone(),
            index: k,
            distortion,
            truth: inverse_params(&distortion),
            spatial,
            rng_cursor,
        });
        samples.push(Sample {
            record: first_record + k,
            image,
            mask,
            reference,
        });
    }
    Ok((records, samples))
}

/// Synthesizes `spec.samples_per_image` samples per source. The returned
/// manifest has no split assignment or normalization yet.
pub fn synthesize(
    sources: &[Source],
    spec: &AugmentSpec,
    class_count: usize,
) -> Result<(DatasetManifest, Vec<Sample>)> {
    if sources.is_empty() {
        return Err(Error::Config("no source images to synthesize from".into()));
    }
    spec.validate(class_count)?;
    let mut seen = BTreeSet::new();
    for s in sources {
        check_same_dims(&s.image, &s.mask)?;
        s.mask.validate(class_count)?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Config(format!("duplicate source id {}", s.id)));
        }
    }

    let mut records = Vec::with_capacity(sources.len() * spec.samples_per_image);
    let mut samples = Vec::with_capacity(records.capacity());
    for source in sources {
        let (r, s) = synthesize_source(source, spec, records.len())?;
        records.extend(r);
        samples.extend(s);
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        class_count,
        spec: spec.clone(),
        sources: sources
            .iter()
            .map(|s| SourceEntry {
                id: s.id.clone(),
                image: None,
                mask: None,
            })
            .collect(),
        records,
        split: BTreeMap::new(),
        normalization: None,
    };
    Ok((manifest, samples))
}

/// Rebuilds the samples of `manifest` from its recorded ops, for the records
/// selected by `indices`.
pub fn regenerate(
    manifest: &DatasetManifest,
    sources: &[Source],
    indices: &[usize],
) -> Result<Vec<Sample>> {
    let by_id: BTreeMap<&str, &Source> = sources.iter().map(|s| (s.id.as_str(), s)).collect();
    indices
        .iter()
        .map(|&i| {
            let record = manifest.records.get(i).ok_or_else(|| Error::Malformed {
                what: "manifest",
                message: format!("record index {i} out of range"),
            })?;
            let source = by_id
                .get(record.source_id.as_str())
                .ok_or_else(|| Error::Malformed {
                    what: "manifest",
                    message: format!("no source named {}", record.source_id),
                })?;
            materialize(source, record, i)
        })
        .collect()
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Malformed {
        what: "manifest",
        message: e.to_string(),
    })?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Malformed {
        what: "manifest",
        message: e.to_string(),
    })?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Malformed {
            what: "manifest",
            message: "missing format_version".into(),
        })?;
    if version != u64::from(MANIFEST_VERSION) {
        return Err(Error::VersionMismatch {
            what: "manifest",
            found: version as u32,
            expected: MANIFEST_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Malformed {
        what: "manifest",
        message: e.to_string(),
    })
}

/// File stem of a sample: `<source_id>_<k>`.
pub fn sample_stem(record: &SampleRecord) -> String {
    format!("{}_{}", record.source_id, record.index)
}

/// Writes `<source_id>_<k>.png` and `<source_id>_<k>_mask.png` for every
/// sample into `dir`.
pub fn write_samples(manifest: &DatasetManifest, samples: &[Sample], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for sample in samples {
        let stem = sample_stem(&manifest.records[sample.record]);
        save_image(
            &sample.image,
            dir.join(format!("{stem}.png")),
            ImageFormat::Png,
        )?;
        save_mask(&sample.mask, dir.join(format!("{stem}_mask.png")))?;
    }
    Ok(())
}
