//! Color-cast correction conditioned on semantic masks.
//!
//! An image is cast by per-channel gains and a gamma, `(v * gain)^gamma`, and
//! corrected by `(v / gain)^(1 / gamma)`. A small CNN reads the RGB planes,
//! optionally stacked with an encoded label mask, and regresses the four
//! correction parameters.
//!
//! - [`imaging`]: linear RGB images, label masks, PPM/PNG I/O, resizing, and
//!   network input volumes.
//! - [`colorcast`]: the cast and correction maps, their exact inverse, RMSE.
//! - [`baselines`]: grey-world and white-patch estimates.
//! - [`augment`]: seeded synthesis of cast samples and their manifest.
//! - [`nn`]: a CPU tensor engine with convolution, pooling, dense layers,
//!   momentum SGD, and gradient checking.
//! - [`model`]: the correction network, training, and checkpoints.
//! - [`harness`]: configs, datasets, the mask ablation, and reports.
//!
//! ```
//! use semwb::colorcast::{apply_correction, apply_distortion, inverse_params, DistortionParams};
//! use semwb::imaging::LinearImage;
//!
//! let img = LinearImage::filled(4, 4, [0.2, 0.5, 0.7])?;
//! let cast = DistortionParams::new(1.2, 1.0, 0.8, 1.1)?;
//! let back = apply_correction(&apply_distortion(&img, &cast)?, &inverse_params(&cast))?;
//! assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-12));
//! # Ok::<(), semwb::Error>(())
//! ```

pub mod augment;
pub mod baselines;
pub mod colorcast;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
