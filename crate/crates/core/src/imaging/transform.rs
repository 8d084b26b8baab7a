//! Spatial transforms shared by images and masks.

use super::{LinearImage, SemanticMask};
use crate::error::{Error, Result};

/// A row-major pixel grid with a fixed number of interleaved samples per pixel.
pub trait Raster: Sized {
    type Sample: Copy;
    const CHANNELS: usize;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn samples(&self) -> &[Self::Sample];
    fn with_samples(width: usize, height: usize, samples: Vec<Self::Sample>) -> Self;
}

impl Raster for LinearImage {
    type Sample = f64;
    const CHANNELS: usize = 3;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
    fn with_samples(width: usize, height: usize, samples: Vec<f64>) -> Self {
        LinearImage::from_parts(width, height, samples)
    }
}

impl Raster for SemanticMask {
    type Sample = u8;
    const CHANNELS: usize = 1;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn samples(&self) -> &[u8] {
        &self.labels
    }
    fn with_samples(width: usize, height: usize, samples: Vec<u8>) -> Self {
        SemanticMask {
            width,
            height,
            labels: samples,
        }
    }
}

/// Mirrors the raster left to right.
pub fn flip_horizontal<R: Raster>(src: &R) -> R {
    let (w, h, ch) = (src.width(), src.height(), R::CHANNELS);
    let samples = src.samples();
    let mut out = Vec::with_capacity(samples.len());
    for y in 0..h {
        let row = &samples[y * w * ch..(y + 1) * w * ch];
        for px in row.chunks_exact(ch).rev() {
            out.extend_from_slice(px);
        }
    }
    R::with_samples(w, h, out)
}

/// Extracts the `w x h` rectangle whose top-left corner is `(x, y)`.
pub fn crop<R: Raster>(src: &R, x: usize, y: usize, w: usize, h: usize) -> Result<R> {
    let (width, height, ch) = (src.width(), src.height(), R::CHANNELS);
    if w == 0 || h == 0 || x + w > width || y + h > height {
        return Err(Error::CropOutOfBounds {
            x,
            y,
            w,
            h,
            width,
            height,
        });
    }
    let samples = src.samples();
    let mut out = Vec::with_capacity(w * h * ch);
    for row in y..y + h {
        let start = (row * width + x) * ch;
        out.extend_from_slice(&samples[start..start + w * ch]);
    }
    Ok(R::with_samples(w, h, out))
}

/// Source coordinate for output index `i` under the align-corners mapping.
/// A single output sample reads the centre of the input.
fn source_coord(i: usize, out_len: usize, in_len: usize) -> f64 {
    if out_len == 1 {
        (in_len - 1) as f64 / 2.0
    } else {
        i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
    }
}

fn check_output_dims(out_w: usize, out_h: usize) -> Result<()> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidDimensions(format!(
            "resize target must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    Ok(())
}

/// Bilinear resampling with corner pixels aligned.
pub fn resize_bilinear(img: &LinearImage, out_w: usize, out_h: usize) -> Result<LinearImage> {
    check_output_dims(out_w, out_h)?;
    let (w, h) = img.dims();
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let src = img.data();
    let mut out = Vec::with_capacity(out_w * out_h * 3);
    for oy in 0..out_h {
        let sy = source_coord(oy, out_h, h);
        let y0 = (sy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = source_coord(ox, out_w, w);
            let x0 = (sx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let at = |x: usize, y: usize| src[(y * w + x) * 3 + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                // Convex weights keep the result non-negative up to rounding.
                out.push((top * (1.0 - fy) + bottom * fy).max(0.0));
            }
        }
    }
    Ok(LinearImage::from_parts(out_w, out_h, out))
}

/// Nearest-neighbour resampling; labels are copied, never blended.
pub fn resize_nearest(mask: &SemanticMask, out_w: usize, out_h: usize) -> Result<SemanticMask> {
    check_output_dims(out_w, out_h)?;
    let (w, h) = mask.dims();
    let mut labels = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let sy = (source_coord(oy, out_h, h).round() as usize).min(h - 1);
        for ox in 0..out_w {
            let sx = (source_coord(ox, out_w, w).round() as usize).min(w - 1);
            labels.push(mask.label(sx, sy));
        }
    }
    SemanticMask::new(out_w, out_h, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray_row(values: &[f64]) -> LinearImage {
        let data = values.iter().flat_map(|&v| [v, v, v]).collect();
        LinearImage::new(values.len(), 1, data).unwrap()
    }

    #[test]
    fn bilinear_align_corners_upsample() {
        let out = resize_bilinear(&gray_row(&[0.0, 1.0]), 3, 1).unwrap();
        let reds: Vec<f64> = out.pixels().map(|p| p[0]).collect();
        assert_eq!(reds, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = LinearImage::filled(5, 3, [0.25, 0.5, 0.75]).unwrap();
        for (w, h) in [(1, 1), (2, 7), (13, 4)] {
            let out = resize_bilinear(&img, w, h).unwrap();
            for px in out.pixels() {
                assert!((px[0] - 0.25).abs() < 1e-15);
                assert!((px[1] - 0.5).abs() < 1e-15);
                assert!((px[2] - 0.75).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_target_rejected() {
        let img = LinearImage::filled(2, 2, [0.0; 3]).unwrap();
        assert!(resize_bilinear(&img, 0, 2).is_err());
        let mask = SemanticMask::filled(2, 2, 0).unwrap();
        assert!(resize_nearest(&mask, 2, 0).is_err());
    }

    #[test]
    fn nearest_keeps_label_set() {
        let mask = SemanticMask::new(2, 2, vec![0, 5, 5, 0]).unwrap();
        let up = resize_nearest(&mask, 7, 5).unwrap();
        assert!(up.labels().iter().all(|&l| l == 0 || l == 5));
        assert!(up.labels().contains(&0) && up.labels().contains(&5));
    }

    #[test]
    fn flip_swaps_columns() {
        let img = LinearImage::new(2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let flipped = flip_horizontal(&img);
        assert_eq!(flipped.data(), &[0.4, 0.5, 0.6, 0.1, 0.2, 0.3]);
        let mask = SemanticMask::new(2, 1, vec![1, 2]).unwrap();
        assert_eq!(flip_horizontal(&mask).labels(), &[2, 1]);
    }

    #[test]
    fn crop_bounds() {
        let mask = SemanticMask::from_fn(4, 3, |x, y| (y * 4 + x) as u8).unwrap();
        assert_eq!(crop(&mask, 0, 0, 4, 3).unwrap(), mask);
        assert_eq!(crop(&mask, 1, 1, 2, 2).unwrap().labels(), &[5, 6, 9, 10]);
        assert!(matches!(
            crop(&mask, 3, 0, 2, 1),
            Err(Error::CropOutOfBounds { .. })
        ));
        assert!(crop(&mask, 0, 0, 0, 1).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = SemanticMask> {
        (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
            prop::collection::vec(any::<u8>(), w * h)
                .prop_map(move |labels| SemanticMask::new(w, h, labels).unwrap())
        })
    }

    fn rect_in(w: usize, h: usize) -> impl Strategy<Value = (usize, usize, usize, usize)> {
        (0..w, 0..h).prop_flat_map(move |(x, y)| (Just(x), Just(y), 1..=w - x, 1..=h - y))
    }

    proptest! {
        #[test]
        fn flip_is_involution(mask in arb_mask()) {
            prop_assert_eq!(flip_horizontal(&flip_horizontal(&mask)), mask);
        }

        #[test]
        fn nested_crops_compose(
            (mask, outer, inner) in arb_mask().prop_flat_map(|m| {
                let (w, h) = m.dims();
                (Just(m), rect_in(w, h))
            }).prop_flat_map(|(m, outer)| {
                let inner = rect_in(outer.2, outer.3);
                (Just(m), Just(outer), inner)
            })
        ) {
            let (x1, y1, w1, h1) = outer;
            let (x2, y2, w2, h2) = inner;
            let twice = crop(&crop(&mask, x1, y1, w1, h1).unwrap(), x2, y2, w2, h2).unwrap();
            let once = crop(&mask, x1 + x2, y1 + y2, w2, h2).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn nearest_never_invents_labels(mask in arb_mask(), w in 1usize..20, h in 1usize..20) {
            let out = resize_nearest(&mask, w, h).unwrap();
            let present = mask.histogram();
            prop_assert!(out.labels().iter().all(|&l| present[usize::from(l)] > 0));
        }
    }
}
