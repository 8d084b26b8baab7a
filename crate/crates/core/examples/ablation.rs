//! Trains the with-mask and without-mask networks on the semantic benchmark
//! and prints the comparison table.
//!
//! ```text
//! cargo run --release --example ablation -- [config.json] [out_dir]
//! ```

use std::path::Path;
use std::time::Instant;

use semwb::harness::{run_ablation, write_ablation, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let start = Instant::now();
    let outcome = run_ablation(&cfg)?;
    print!("{}", outcome.report.to_text());
    for pair in &outcome.pairs {
        for arm in [&pair.without_mask, &pair.with_mask] {
            let losses = &arm.loss_history;
            println!(
                "seed {} {}ch loss {:.5} -> {:.5}",
                arm.seed,
                arm.net.spec().input_channels,
                losses[0],
                losses[losses.len() - 1]
            );
        }
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    if let Some(dir) = args.next() {
        write_ablation(&outcome, &cfg, Path::new(&dir))?;
    }
    Ok(())
}
