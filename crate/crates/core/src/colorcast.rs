//! Global illuminant casts under the diagonal model, gamma distortion, their
//! exact inverse, and the image RMSE used for scoring corrections.
//!
//! A distortion maps each channel value `v` to `(v * gain)^gamma`. A correction
//! maps `v` to `(v / gain)^(1 / gamma)`. Because the power does not commute with
//! the scaling, the correction undoing a distortion `(r, g, b, gamma)` uses
//! gains `(r^gamma, g^gamma, b^gamma)`:
//!
//! ```text
//! ((v * r)^gamma / r^gamma)^(1 / gamma) = v
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{quantize, LinearImage};

/// Estimated illuminant color and gamma, as predicted by a corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub gamma: f64,
}

impl CorrectionParams {
    pub const IDENTITY: Self = Self {
        r: 1.0,
        g: 1.0,
        b: 1.0,
        gamma: 1.0,
    };

    pub fn new(r: f64, g: f64, b: f64, gamma: f64) -> Result<Self> {
        let p = Self { r, g, b, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn gains(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.r, self.g, self.b, self.gamma]
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(self.to_array(), "correction")
    }
}

/// A synthetic cast: per-channel gains followed by a gamma exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub gamma: f64,
}

impl DistortionParams {
    pub const IDENTITY: Self = Self {
        r: 1.0,
        g: 1.0,
        b: 1.0,
        gamma: 1.0,
    };

    pub fn new(r: f64, g: f64, b: f64, gamma: f64) -> Result<Self> {
        let d = Self { r, g, b, gamma };
        d.validate()?;
        Ok(d)
    }

    pub fn gains(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn validate(&self) -> Result<()> {
        check_positive([self.r, self.g, self.b, self.gamma], "distortion")
    }
}

fn check_positive(values: [f64; 4], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{what} gains and gamma must be finite and positive, got {values:?}"
        )))
    }
}

/// `out_c = (in_c / gain_c)^(1 / gamma)`, unclamped.
pub fn apply_correction(img: &LinearImage, p: &CorrectionParams) -> Result<LinearImage> {
    p.validate()?;
    let inv_gains = p.gains().map(|g| 1.0 / g);
    let exponent = 1.0 / p.gamma;
    Ok(map_pixels(img, |c, v| (v * inv_gains[c]).powf(exponent)))
}

/// `out_c = (in_c * gain_c)^gamma`, unclamped.
pub fn apply_distortion(img: &LinearImage, d: &DistortionParams) -> Result<LinearImage> {
    d.validate()?;
    let gains = d.gains();
    Ok(map_pixels(img, |c, v| (v * gains[c]).powf(d.gamma)))
}

/// Values that overflow saturate at `f64::MAX`, so extreme parameters still
/// yield a valid (if blown out) image.
fn map_pixels(img: &LinearImage, f: impl Fn(usize, f64) -> f64) -> LinearImage {
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| f(i % 3, v).min(f64::MAX))
        .collect();
    LinearImage::from_parts(img.width(), img.height(), data)
}

/// The correction that exactly undoes `d`.
pub fn inverse_params(d: &DistortionParams) -> CorrectionParams {
    CorrectionParams {
        r: d.r.powf(d.gamma),
        g: d.g.powf(d.gamma),
        b: d.b.powf(d.gamma),
        gamma: d.gamma,
    }
}

/// Root mean square difference over all `N x 3` channel values, on the
/// 0..255 output scale. Values are clamped to `[0, 1]` before scaling, as
/// when saved.
pub fn rmse(a: &LinearImage, b: &LinearImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let mut sum = NeumaierSum::default();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = 255.0 * (x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0));
        sum.add(d * d);
    }
    Ok((sum.total() / a.data().len() as f64).sqrt())
}

/// RMSE after 8-bit quantization of both images, i.e. between saved files.
pub fn rmse_quantized(a: &LinearImage, b: &LinearImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let total: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = i64::from(quantize(x)) - i64::from(quantize(y));
            (d * d) as u64
        })
        .sum();
    Ok((total as f64 / a.data().len() as f64).sqrt())
}

/// Compensated summation with a fixed evaluation order.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub(crate) fn compensated_mean(values: &[f64]) -> f64 {
    let mut s = NeumaierSum::default();
    values.iter().for_each(|&v| s.add(v));
    s.total() / values.len() as f64
}
