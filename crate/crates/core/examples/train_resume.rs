//! Trains a small four-channel model, checkpoints it halfway, resumes from
//! the checkpoint, and confirms the resumed run matches an uninterrupted one.
//!
//! ```text
//! cargo run --release --example train_resume -- [checkpoint.json]
//! ```

use semwb::harness::{training_examples, Dataset, DatasetConfig, ExperimentConfig};
use semwb::model::{Checkpoint, SemanticWbNet, Trainer};

fn main() -> semwb::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "checkpoint.json".into());
    let mut cfg = ExperimentConfig::default();
    if let DatasetConfig::Benchmark(b) = &mut cfg.dataset {
        b.train_sources = 40;
        b.test_sources = 10;
    }
    cfg.augment.samples_per_image = 4;
    cfg.train.epochs = 6;

    let dataset = Dataset::build(&cfg)?;
    let examples = training_examples(&cfg, &dataset)?;
    let net = SemanticWbNet::init_weights(&cfg.network, cfg.seed)?;

    let mut straight = Trainer::new(net.clone(), cfg.train_config(cfg.seed))?;
    straight.fit(&examples)?;

    let mut first = Trainer::new(net, cfg.train_config(cfg.seed))?;
    for _ in 0..3 {
        first.run_epoch(&examples)?;
    }
    let norm = dataset.normalization()?.clone();
    Checkpoint::from_trainer(&first, dataset.class_count(), norm).save(&path)?;

    let mut resumed = Checkpoint::load(&path)?.trainer()?;
    resumed.fit(&examples)?;

    for (e, loss) in resumed.loss_history.iter().enumerate() {
        println!("epoch {:>2} loss {loss:.6}", e + 1);
    }
    println!(
        "resumed run identical to uninterrupted run: {}",
        resumed.loss_history == straight.loss_history
            && resumed.net.body().params() == straight.net.body().params()
    );
    Ok(())
}
