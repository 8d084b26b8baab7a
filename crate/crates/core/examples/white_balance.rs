//! Grey-world and white-patch correction of an image file, or of a cast test
//! card when no file is given.
//!
//! ```text
//! cargo run --example white_balance -- [image.png|image.ppm] [out_dir]
//! ```

use std::path::{Path, PathBuf};

use semwb::baselines::{grey_world, white_patch};
use semwb::colorcast::{apply_correction, apply_distortion, rmse, DistortionParams};
use semwb::imaging::{load_image, save_image, ImageFormat, LinearImage};

fn test_card() -> semwb::Result<LinearImage> {
    let patches = [
        [0.8, 0.2, 0.2],
        [0.2, 0.7, 0.3],
        [0.25, 0.3, 0.8],
        [0.9, 0.9, 0.9],
    ];
    LinearImage::from_fn(40, 40, |x, y| patches[(x / 20) + 2 * (y / 20)])
}

fn main() -> semwb::Result<()> {
    let mut args = std::env::args().skip(1);
    let (img, reference) = match args.next() {
        Some(path) => {
            let path = PathBuf::from(path);
            (load_image(&path, ImageFormat::from_path(&path)?)?, None)
        }
        None => {
            let card = test_card()?;
            let cast = DistortionParams::new(0.8, 1.0, 1.25, 1.0)?;
            (apply_distortion(&card, &cast)?, Some(card))
        }
    };
    let out = args.next().map(PathBuf::from);

    println!("channel means  {:.4?}", img.channel_means());
    println!("channel maxima {:.4?}", img.channel_maxima());
    for (name, params) in [
        ("grey-world", grey_world(&img)?),
        ("white-patch", white_patch(&img)?),
    ] {
        let fixed = apply_correction(&img, &params)?;
        print!(
            "{name:<12} gains [{:.3}, {:.3}, {:.3}]",
            params.r, params.g, params.b
        );
        if let Some(card) = &reference {
            print!(
                "  RMSE {:.2} (cast {:.2})",
                rmse(&fixed, card)?,
                rmse(&img, card)?
            );
        }
        println!();
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(|e| semwb::Error::io(dir.as_path(), e))?;
            save_image(
                &fixed,
                Path::new(dir).join(format!("{name}.png")),
                ImageFormat::Png,
            )?;
        }
    }
    Ok(())
}
