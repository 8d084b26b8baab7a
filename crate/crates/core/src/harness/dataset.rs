use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::augment::{
    regenerate, synthesize, write_manifest, write_samples, DatasetManifest, Sample, Source,
    SourceEntry, Split,
};
use crate::error::{Error, Result, StageExt};
use crate::imaging::{
    load_image, load_mask, save_image, save_mask, ImageFormat, LinearImage, NormalizationMode,
    NormalizationStats,
};
use crate::model::fit_normalization;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A synthesized dataset: manifest, sources, and materialized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub sources: Vec<Source>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Loads or generates sources, synthesizes every sample, assigns splits,
    /// and fits input normalization on the training samples.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate().stage("config")?;
        let class_count = cfg.dataset.class_count();
        let (train_sources, test_sources) = match &cfg.dataset {
            DatasetConfig::Benchmark(b) => b.sources(cfg.seed),
            DatasetConfig::Directory {
                train_dir,
                test_dir,
                ..
            } => load_directory_sources(train_dir, "train", class_count).and_then(|train| {
                Ok((
                    train,
                    load_directory_sources(test_dir, "test", class_count)?,
                ))
            }),
        }
        .stage("sources")?;

        let mut spec = cfg.augment.clone();
        spec.seed = cfg.seed;
        let mut test_ids: Vec<&str> = test_sources.iter().map(|s| s.id.as_str()).collect();
        test_ids.sort_unstable();
        spec.gamma_one_sources.extend(
            test_ids
                .iter()
                .take(cfg.gamma_one_test_sources)
                .map(|id| id.to_string()),
        );

        let split: Vec<(String, Split)> = train_sources
            .iter()
            .map(|s| (s.id.clone(), Split::Train))
            .chain(test_sources.iter().map(|s| (s.id.clone(), Split::Test)))
            .collect();
        let sources: Vec<Source> = train_sources.into_iter().chain(test_sources).collect();
        let (mut manifest, samples) = synthesize(&sources, &spec, class_count).stage("synth")?;
        manifest.split = split.into_iter().collect();
        manifest.sources = sources.iter().map(|s| tree_entry(&s.id)).collect();

        let mut dataset = Self::partition(manifest, sources, samples);
        dataset
            .fit_normalization(cfg.train.normalization, cfg.network.input_size)
            .stage("normalize")?;
        Ok(dataset)
    }

    /// Reloads a dataset written by [`Dataset::write_tree`] (or any manifest
    /// whose sources carry paths), resolving relative paths against `base`.
    pub fn from_manifest(manifest: DatasetManifest, base: &Path) -> Result<Self> {
        let sources = manifest
            .sources
            .iter()
            .map(|entry| load_entry(entry, base, manifest.class_count))
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<usize> = (0..manifest.records.len()).collect();
        let samples = regenerate(&manifest, &sources, &all)?;
        Ok(Self::partition(manifest, sources, samples))
    }

    /// Loads `manifest.json` and its sources from a synthesized tree, or from
    /// a manifest path whose directory holds the sources.
    pub fn load(path: &Path) -> Result<Self> {
        let (file, base) = if path.is_dir() {
            (path.join(MANIFEST_FILE), path.to_path_buf())
        } else {
            let base = path.parent().map_or_else(PathBuf::new, Path::to_path_buf);
            (path.to_path_buf(), base)
        };
        let manifest = crate::augment::load_manifest(&file)?;
        Self::from_manifest(manifest, &base)
    }

    fn partition(manifest: DatasetManifest, sources: Vec<Source>, samples: Vec<Sample>) -> Self {
        let (train, test) = samples.into_iter().partition(|s| {
            manifest.split_of(&manifest.records[s.record].source_id) == Some(Split::Train)
        });
        Self {
            manifest,
            sources,
            train,
            test,
        }
    }

    /// Fits normalization statistics on the training images and stores them
    /// in the manifest.
    pub fn fit_normalization(&mut self, mode: NormalizationMode, input_size: usize) -> Result<()> {
        let images: Vec<&LinearImage> = self.train.iter().map(|s| &s.image).collect();
        if images.is_empty() {
            return Err(Error::Config("dataset has no training samples".into()));
        }
        self.manifest.normalization = Some(fit_normalization(mode, &images, input_size)?);
        Ok(())
    }

    pub fn normalization(&self) -> Result<&NormalizationStats> {
        self.manifest
            .normalization
            .as_ref()
            .ok_or_else(|| Error::Malformed {
                what: "manifest",
                message: "no normalization statistics; run synth first".into(),
            })
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn class_count(&self) -> usize {
        self.manifest.class_count
    }

    /// Whether the sample's cast had gamma pinned to 1.
    pub fn is_gamma_one(&self, sample: &Sample) -> bool {
        let id = &self.manifest.records[sample.record].source_id;
        self.manifest.spec.gamma_one_sources.contains(id)
    }

    /// Writes `manifest.json`, `sources/` and `samples/` under `dir`.
    pub fn write_tree(&self, dir: &Path) -> Result<()> {
        let source_dir = dir.join("sources");
        fs::create_dir_all(&source_dir).map_err(|e| Error::io(&source_dir, e))?;
        for (source, entry) in self.sources.iter().zip(&self.manifest.sources) {
            let (image, mask) = entry_paths(entry)?;
            save_image(&source.image, dir.join(image), ImageFormat::Png)?;
            save_mask(&source.mask, dir.join(mask))?;
        }
        let sample_dir = dir.join("samples");
        write_samples(&self.manifest, &self.train, &sample_dir)?;
        write_samples(&self.manifest, &self.test, &sample_dir)?;
        write_manifest(&self.manifest, dir.join(MANIFEST_FILE))
    }
}

fn tree_entry(id: &str) -> SourceEntry {
    SourceEntry {
        id: id.to_owned(),
        image: Some(format!("sources/{id}.png")),
        mask: Some(format!("sources/{id}_mask.png")),
    }
}

fn entry_paths(entry: &SourceEntry) -> Result<(&str, &str)> {
    match (&entry.image, &entry.mask) {
        (Some(i), Some(m)) => Ok((i, m)),
        _ => Err(Error::Malformed {
            what: "manifest",
            message: format!("source {} has no image or mask path", entry.id),
        }),
    }
}

fn load_entry(entry: &SourceEntry, base: &Path, class_count: usize) -> Result<Source> {
    let (image, mask) = entry_paths(entry)?;
    let image = base.join(image);
    let mask = base.join(mask);
    let format = ImageFormat::from_path(&image)?;
    Source::new(
        entry.id.clone(),
        load_image(&image, format)?,
        load_mask(&mask, class_count)?,
    )
}

/// Sources from a directory of `<stem>.png|.ppm` images, each with a
/// `<stem>_mask.png` (or `.pgm`) label map. Ids are `<prefix>_<stem>`, in
/// sorted stem order.
pub fn load_directory_sources(dir: &Path, prefix: &str, class_count: usize) -> Result<Vec<Source>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut images = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if stem.ends_with("_mask") || !matches!(ext.as_deref(), Some("png" | "ppm")) {
            continue;
        }
        images.push((stem.to_owned(), path));
    }
    images.sort();
    if images.is_empty() {
        return Err(Error::Config(format!(
            "no images found in {}",
            dir.display()
        )));
    }
    images
        .into_iter()
        .map(|(stem, path)| {
            let mask_path = ["png", "pgm"]
                .iter()
                .map(|ext| dir.join(format!("{stem}_mask.{ext}")))
                .find(|p| p.exists())
                .ok_or_else(|| Error::Config(format!("image {stem} has no mask")))?;
            let image = load_image(&path, ImageFormat::from_path(&path)?)?;
            let mask = load_mask(&mask_path, class_count)?;
            Source::new(format!("{prefix}_{stem}"), image, mask)
        })
        .collect()
}
