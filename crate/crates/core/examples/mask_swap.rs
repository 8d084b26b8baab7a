//! Trains a four-channel model briefly, then corrects one test image under
//! its own mask and under a different scene's mask.
//!
//! ```text
//! cargo run --release --example mask_swap -- [out_dir]
//! ```

use std::path::PathBuf;

use semwb::colorcast::rmse;
use semwb::harness::{
    run_mask_sensitivity, train_arm, training_examples, Dataset, DatasetConfig, ExperimentConfig,
};
use semwb::imaging::{resize_nearest, save_image, save_mask, ImageFormat};

fn main() -> semwb::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let mut cfg = ExperimentConfig::default();
    if let DatasetConfig::Benchmark(b) = &mut cfg.dataset {
        b.train_sources = 80;
        b.test_sources = 10;
    }
    cfg.augment.samples_per_image = 6;
    cfg.train.epochs = 15;

    let dataset = Dataset::build(&cfg)?;
    let examples = training_examples(&cfg, &dataset)?;
    let mut arm = train_arm(&cfg, &examples, 4, cfg.seed)?;
    let norm = dataset.normalization()?;
    let k = dataset.class_count();

    // Borrow the mask of a scene whose dominant class differs.
    let sample = &dataset.test[0];
    let label = sample.mask.dominant_label();
    let other = &dataset
        .test
        .iter()
        .find(|s| s.mask.dominant_label() != label)
        .expect("test scenes share one dominant class")
        .mask;
    let other = resize_nearest(other, sample.image.width(), sample.image.height())?;
    let (report, [own, swapped]) =
        run_mask_sensitivity(&mut arm.net, &sample.image, &sample.mask, &other, norm, k)?;

    let truth = dataset.manifest.records[sample.record].truth;
    println!("truth        {truth:?}");
    println!("own mask     {:?}", report.params_a);
    println!("swapped mask {:?}", report.params_b);
    println!("dominant class {label} vs {}", other.dominant_label());
    println!("parameter delta {:.4}", report.param_delta);
    println!(
        "RMSE own {:.2}, swapped {:.2}",
        rmse(&own, &sample.reference)?,
        rmse(&swapped, &sample.reference)?
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| semwb::Error::io(dir.as_path(), e))?;
        save_image(&sample.image, dir.join("input.png"), ImageFormat::Png)?;
        save_image(&own, dir.join("own_mask.png"), ImageFormat::Png)?;
        save_image(&swapped, dir.join("swapped_mask.png"), ImageFormat::Png)?;
        save_mask(&other, dir.join("swapped_labels.png"))?;
    }
    Ok(())
}
