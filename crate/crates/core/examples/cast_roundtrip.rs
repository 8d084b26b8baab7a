//! Casts a synthetic scene, undoes the cast with the inverse parameters, and
//! reports the error at each step.
//!
//! ```text
//! cargo run --example cast_roundtrip -- [out_dir]
//! ```

use std::path::PathBuf;

use semwb::colorcast::{
    apply_correction, apply_distortion, inverse_params, rmse, rmse_quantized, DistortionParams,
};
use semwb::imaging::{save_image, ImageFormat, LinearImage};

fn main() -> semwb::Result<()> {
    let scene = LinearImage::from_fn(64, 48, |x, y| {
        [
            x as f64 / 63.0,
            y as f64 / 47.0,
            0.5 + 0.4 * ((x + y) % 2) as f64 * 0.5,
        ]
    })?;
    let cast = DistortionParams::new(1.2, 0.95, 0.8, 1.1)?;
    let warm = apply_distortion(&scene, &cast)?;
    let fix = inverse_params(&cast);
    let back = apply_correction(&warm, &fix)?;

    println!("distortion  {cast:?}");
    println!("correction  {fix:?}");
    println!("cast vs scene       RMSE {:.4}", rmse(&warm, &scene)?);
    println!("corrected vs scene  RMSE {:.2e}", rmse(&back, &scene)?);
    println!(
        "after 8-bit save    RMSE {:.4}",
        rmse_quantized(&back, &scene)?
    );

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir).map_err(|e| semwb::Error::io(&dir, e))?;
        for (name, img) in [("scene", &scene), ("cast", &warm), ("corrected", &back)] {
            save_image(img, dir.join(format!("{name}.png")), ImageFormat::Png)?;
        }
    }
    Ok(())
}
