//! Converts between PPM and PNG and summarizes a label mask.
//!
//! ```text
//! cargo run --example image_io -- <input.ppm|png> <output.ppm|png> [mask.png class_count]
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use semwb::imaging::{load_image, load_mask, save_image, ImageFormat};

fn run(args: &[String]) -> semwb::Result<()> {
    let input = PathBuf::from(&args[0]);
    let output = PathBuf::from(&args[1]);
    let img = load_image(&input, ImageFormat::from_path(&input)?)?;
    println!(
        "{}x{} image, channel means {:.4?}",
        img.width(),
        img.height(),
        img.channel_means()
    );
    save_image(&img, &output, ImageFormat::from_path(&output)?)?;

    if let [mask, classes] = &args[2..] {
        let classes: usize = classes.parse().expect("class count");
        let mask = load_mask(mask, classes)?;
        let hist = mask.histogram();
        let total = mask.labels().len() as f64;
        for (label, &n) in hist.iter().enumerate().filter(|(_, &n)| n > 0) {
            println!("label {label:>3}: {:5.1}%", 100.0 * n as f64 / total);
        }
        println!("dominant label {}", mask.dominant_label());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 2 && args.len() != 4 {
        eprintln!("usage: image_io <input> <output> [mask class_count]");
        return ExitCode::from(2);
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
