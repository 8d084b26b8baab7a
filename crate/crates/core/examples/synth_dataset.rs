//! Generates a small semantic benchmark, synthesizes cast samples, and writes
//! the sources, samples, and manifest to a directory.
//!
//! ```text
//! cargo run --example synth_dataset -- [out_dir] [seed]
//! ```

use std::path::PathBuf;

use semwb::augment::Split;
use semwb::harness::{Dataset, DatasetConfig, ExperimentConfig};

fn main() -> semwb::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth_out".into()));
    let seed = args
        .next()
        .map_or(0, |s| s.parse().expect("seed must be an integer"));

    let mut cfg = ExperimentConfig {
        seed,
        gamma_one_test_sources: 4,
        ..ExperimentConfig::default()
    };
    if let DatasetConfig::Benchmark(b) = &mut cfg.dataset {
        b.train_sources = 20;
        b.test_sources = 8;
    }
    cfg.augment.samples_per_image = 4;

    let dataset = Dataset::build(&cfg)?;
    dataset.write_tree(&out)?;

    let m = &dataset.manifest;
    println!(
        "{} sources, {} samples, {} classes",
        m.sources.len(),
        m.records.len(),
        m.class_count
    );
    for split in [Split::Train, Split::Test] {
        let samples = dataset.split(split);
        let pinned = samples.iter().filter(|s| dataset.is_gamma_one(s)).count();
        println!(
            "{split:?}: {} samples, {pinned} with gamma pinned to 1",
            samples.len()
        );
    }
    for r in m.records.iter().take(3) {
        let d = &r.distortion;
        println!(
            "{}#{}: gains [{:.3}, {:.3}, {:.3}] gamma {:.3}, ops {:?}",
            r.source_id, r.index, d.r, d.g, d.b, d.gamma, r.spatial
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
