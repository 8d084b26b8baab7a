//! Image and mask representation, file I/O, spatial transforms, and assembly
//! of the four-plane network input.
//!
//! Images hold unclamped `f64` channel values in the file's numeric space
//! (8-bit values divided by 255, no sRGB linearization). Clamping happens only
//! when quantizing for output, so the cast/correction algebra stays exact.

mod io;
mod transform;
mod volume;

pub use io::{load_image, load_mask, quantize, save_image, save_mask, ImageFormat};
pub use transform::{crop, flip_horizontal, resize_bilinear, resize_nearest, Raster};
pub use volume::{
    assemble_input, encode_mask_channel, InputVolume, NormalizationMode, NormalizationStats,
};

use crate::error::{Error, Result};

/// An RGB image stored row-major as interleaved `(R, G, B)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}x3, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidImage(format!(
                "channel values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from values already known to satisfy the invariants.
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels, the `N` of the `N x 3` matrix view.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(3)
    }

    /// Applies `f(channel, value)` to every channel value.
    ///
    /// The result must still satisfy the image invariants; this is checked.
    pub fn map_channels(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % 3, v))
            .collect();
        Self::new(self.width, self.height, data)
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for px in self.pixels() {
            for c in 0..3 {
                sums[c] += px[c];
            }
        }
        let n = self.pixel_count() as f64;
        sums.map(|s| s / n)
    }

    pub fn channel_maxima(&self) -> [f64; 3] {
        let mut maxima = [0.0f64; 3];
        for px in self.pixels() {
            for c in 0..3 {
                maxima[c] = maxima[c].max(px[c]);
            }
        }
        maxima
    }
}

/// Per-pixel class labels aligned with an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SemanticMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!(
                "mask must be non-empty, got {width}x{height}"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} labels for {width}x{height}, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Checks that every label is below `class_count`.
    pub fn validate(&self, class_count: usize) -> Result<()> {
        check_class_count(class_count)?;
        match self.labels.iter().find(|&&l| usize::from(l) >= class_count) {
            Some(&label) => Err(Error::LabelOutOfRange { label, class_count }),
            None => Ok(()),
        }
    }

    /// Pixel count per label, indexed by label value.
    pub fn histogram(&self) -> [usize; 256] {
        let mut counts = [0usize; 256];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    /// The label covering the most pixels; ties go to the smaller label.
    pub fn dominant_label(&self) -> u8 {
        let counts = self.histogram();
        let mut best = 0usize;
        for (label, &count) in counts.iter().enumerate() {
            if count > counts[best] {
                best = label;
            }
        }
        best as u8
    }
}

pub(crate) fn check_class_count(class_count: usize) -> Result<()> {
    if class_count == 0 || class_count > 256 {
        return Err(Error::InvalidParams(format!(
            "class count must be in 1..=256, got {class_count}"
        )));
    }
    Ok(())
}

pub(crate) fn check_same_dims(image: &LinearImage, mask: &SemanticMask) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            left: image.dims(),
            right: mask.dims(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_non_finite() {
        assert!(LinearImage::new(1, 1, vec![0.0, -0.1, 0.0]).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, 1.5, 0.0]).is_ok());
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(LinearImage::new(2, 2, vec![0.0; 11]).is_err());
        assert!(SemanticMask::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn mask_validation() {
        let mask = SemanticMask::new(3, 1, vec![0, 1, 2]).unwrap();
        assert!(mask.validate(3).is_ok());
        let bad = SemanticMask::new(3, 1, vec![0, 7, 2]).unwrap();
        let err = bad.validate(3).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
        assert!(SemanticMask::filled(4, 4, 0).unwrap().validate(1).is_ok());
    }

    #[test]
    fn dominant_label_prefers_majority_then_smaller() {
        let mask = SemanticMask::new(5, 1, vec![3, 3, 1, 1, 3]).unwrap();
        assert_eq!(mask.dominant_label(), 3);
        let tie = SemanticMask::new(4, 1, vec![2, 2, 1, 1]).unwrap();
        assert_eq!(tie.dominant_label(), 1);
    }

    #[test]
    fn channel_statistics() {
        let img = LinearImage::new(2, 1, vec![0.2, 0.4, 0.6, 0.4, 0.0, 1.0]).unwrap();
        let means = img.channel_means();
        assert!((means[0] - 0.3).abs() < 1e-15);
        assert!((means[1] - 0.2).abs() < 1e-15);
        assert!((means[2] - 0.8).abs() < 1e-15);
        assert_eq!(img.channel_maxima(), [0.4, 0.4, 1.0]);
    }
}
