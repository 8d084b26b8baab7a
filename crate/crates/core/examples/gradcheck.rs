//! Central-difference check of the backpropagated gradients of the full
//! desk-scale four-channel network.
//!
//! ```text
//! cargo run --release --example gradcheck -- [entries_per_tensor]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semwb::model::{InitScheme, NetworkSpec, SemanticWbNet};
use semwb::nn::{grad_check, GradCheckOptions, Tensor};

fn main() -> semwb::Result<()> {
    let entries = std::env::args()
        .nth(1)
        .map_or(32, |s| s.parse().expect("entry count"));
    let spec = NetworkSpec {
        init: InitScheme::HeNormal,
        ..NetworkSpec::desk(4)
    };
    let mut net = SemanticWbNet::init_weights(&spec, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = spec.input_size;
    let input = Tensor::new(
        vec![2, 4, s, s],
        (0..2 * 4 * s * s).map(|_| rng.random()).collect(),
    )?;
    let target = Tensor::new(
        vec![2, 4],
        (0..8).map(|_| rng.random_range(0.5..1.5)).collect(),
    )?;

    println!("{} parameters", net.body().parameter_count());
    let opts = GradCheckOptions {
        max_entries_per_tensor: Some(entries),
        ..GradCheckOptions::default()
    };
    let report = grad_check(net.body_mut(), &input, &target, &opts)?;
    println!(
        "checked {} entries, max relative error {:.2e} at {:?}: {}",
        report.entries_checked,
        report.max_rel_error,
        report.worst,
        if report.passed { "pass" } else { "FAIL" }
    );
    Ok(())
}
