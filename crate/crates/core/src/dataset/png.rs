use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::types::Image;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit PNG, RGB for three channels and greyscale for one.
pub fn export_png(image: &Image, path: &Path) -> Result<()> {
    let (h, w, c) = image.dims();
    let bytes: Vec<u8> = image.pixels().iter().map(|&v| to_byte(v)).collect();
    match c {
        3 => RgbImage::from_raw(w as u32, h as u32, bytes)
            .expect("buffer matches dimensions")
            .save(path)?,
        1 => GrayImage::from_raw(w as u32, h as u32, bytes)
            .expect("buffer matches dimensions")
            .save(path)?,
        _ => {
            return Err(Error::InvalidImage(format!(
                "PNG export supports 1 or 3 channels, got {c}"
            )))
        }
    }
    Ok(())
}

/// Reads a PNG back as a normalized image (greyscale stays one channel).
pub fn import_png(path: &Path) -> Result<Image> {
    let dynamic = image::open(path)?;
    let (pixels, channels, w, h) = match dynamic {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            (g.into_raw(), 1, w, h)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            (rgb.into_raw(), 3, w, h)
        }
    };
    Image::new(
        h as usize,
        w as usize,
        channels,
        pixels.into_iter().map(|b| f32::from(b) / 255.0).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("black.png");
        export_png(&Image::filled(4, 6, 3, 0.0).unwrap(), &p).unwrap();
        let rgb = image::open(&p).unwrap().to_rgb8();
        assert_eq!(rgb.dimensions(), (6, 4));
        assert!(rgb.into_raw().iter().all(|&b| b == 0));
    }

    #[test]
    fn greyscale_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = Image::new(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        export_png(&img, &p).unwrap();
        let back = import_png(&p).unwrap();
        assert_eq!(back.dims(), (2, 2, 1));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
