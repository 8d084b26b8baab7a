use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use super::{check_class_count, LinearImage, SemanticMask};
use crate::error::{Error, Result};

/// On-disk image container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PPM (P6) or PGM (P5), maxval 255.
    Ppm,
    Png,
}

impl ImageFormat {
    /// Picks the format from a `.ppm`/`.pgm`/`.pnm` or `.png` extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("ppm" | "pgm" | "pnm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(Error::UnknownFormat(path.to_path_buf())),
        }
    }

    fn codec(self) -> image::ImageFormat {
        match self {
            ImageFormat::Ppm => image::ImageFormat::Pnm,
            ImageFormat::Png => image::ImageFormat::Png,
        }
    }
}

fn decode(path: &Path, format: ImageFormat) -> Result<DynamicImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ImageReader::with_format(BufReader::new(file), format.codec())
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Reads an 8-bit RGB image, mapping each byte `v` to `v / 255`.
pub fn load_image(path: impl AsRef<Path>, format: ImageFormat) -> Result<LinearImage> {
    let path = path.as_ref();
    let rgb = match decode(path, format)? {
        DynamicImage::ImageRgb8(buf) => buf,
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: "only 8-bit samples are supported".into(),
            })
        }
        other => {
            return Err(Error::ChannelLayout {
                path: path.to_path_buf(),
                detail: format!("expected RGB, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    LinearImage::new(w, h, data)
}

/// Maps a channel value to a byte: clamp to `[0, 1]`, then `round(v * 255)`
/// with halves rounded up.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

fn write_encoded(
    path: &Path,
    format: ImageFormat,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let writer = BufWriter::new(file);
    let (w, h) = (width as u32, height as u32);
    let result = match format {
        ImageFormat::Png => PngEncoder::new(writer).write_image(bytes, w, h, color),
        ImageFormat::Ppm => {
            let subtype = if color == ExtendedColorType::L8 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            PnmEncoder::new(writer)
                .with_subtype(subtype)
                .write_image(bytes, w, h, color)
        }
    };
    result.map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes an image as 8-bit RGB. This is the only place values are clamped.
pub fn save_image(img: &LinearImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write_encoded(
        path.as_ref(),
        format,
        &bytes,
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
    )
}

/// Reads an 8-bit single-channel mask whose pixel values are class indices.
pub fn load_mask(path: impl AsRef<Path>, class_count: usize) -> Result<SemanticMask> {
    let path = path.as_ref();
    check_class_count(class_count)?;
    let format = ImageFormat::from_path(path)?;
    let gray = match decode(path, format)? {
        DynamicImage::ImageLuma8(buf) => buf,
        DynamicImage::ImageLuma16(_) => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: "masks must be 8-bit".into(),
            })
        }
        other => {
            return Err(Error::ChannelLayout {
                path: path.to_path_buf(),
                detail: format!("expected single-channel mask, found {:?}", other.color()),
            })
        }
    };
    let mask = SemanticMask::new(
        gray.width() as usize,
        gray.height() as usize,
        gray.into_raw(),
    )?;
    mask.validate(class_count)?;
    Ok(mask)
}

pub fn save_mask(mask: &SemanticMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)?;
    write_encoded(
        path,
        format,
        mask.labels(),
        mask.width(),
        mask.height(),
        ExtendedColorType::L8,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(1.5), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-0.1), 0);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        for b in 0..=255u8 {
            assert_eq!(quantize(f64::from(b) / 255.0), b);
        }
    }

    #[test]
    fn loads_single_pixel_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("px.ppm");
        let mut f = File::create(&path).unwrap();
        f.write_all(b"P6\n1 1\n255\n").unwrap();
        f.write_all(&[255, 0, 128]).unwrap();
        drop(f);
        let img = load_image(&path, ImageFormat::Ppm).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn black_png_loads_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.png");
        let img = LinearImage::filled(2, 2, [0.0; 3]).unwrap();
        save_image(&img, &path, ImageFormat::Png).unwrap();
        let back = load_image(&path, ImageFormat::Png).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_rgb_and_wide_samples() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("gray.png");
        save_mask(&SemanticMask::filled(2, 2, 1).unwrap(), &gray).unwrap();
        assert!(matches!(
            load_image(&gray, ImageFormat::Png),
            Err(Error::ChannelLayout { .. })
        ));

        let wide = dir.path().join("wide.ppm");
        let mut f = File::create(&wide).unwrap();
        f.write_all(b"P6\n1 1\n65535\n").unwrap();
        f.write_all(&[0, 1, 0, 2, 0, 3]).unwrap();
        drop(f);
        assert!(matches!(
            load_image(&wide, ImageFormat::Ppm),
            Err(Error::UnsupportedBitDepth { .. })
        ));

        assert!(matches!(
            load_image(dir.path().join("missing.png"), ImageFormat::Png),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn mask_files_preserve_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = SemanticMask::new(3, 1, vec![0, 1, 2]).unwrap();
        save_mask(&mask, &path).unwrap();
        assert_eq!(load_mask(&path, 3).unwrap(), mask);

        let bad = SemanticMask::new(2, 1, vec![0, 7]).unwrap();
        save_mask(&bad, &path).unwrap();
        let err = load_mask(&path, 3).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            ImageFormat::from_path(Path::new("a/b.PNG")).unwrap(),
            ImageFormat::Png
        );
        assert_eq!(
            ImageFormat::from_path(Path::new("x.ppm")).unwrap(),
            ImageFormat::Ppm
        );
        assert!(ImageFormat::from_path(Path::new("x.jpg")).is_err());
    }
}
