//! PNG / PPM reading and 8-bit PNG writing.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image::{Image, SoftMask};

fn open(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .map_err(|_| Error::UnsupportedFormat(path.display().to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!(
            "{} ({format:?})",
            path.display()
        )));
    }
    let mut reader = ImageReader::new(std::io::Cursor::new(bytes));
    reader.set_format(format);
    reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

fn is_16bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

/// Reads an 8- or 16-bit PNG or a binary PPM. Alpha is dropped and gray
/// inputs are replicated to RGB.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if is_16bit(&img) {
        img.into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect()
    } else {
        img.into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect()
    };
    Image::from_clamped(h, w, data)
}

/// Reads a mask image; color inputs use their first channel.
pub fn read_mask(path: impl AsRef<Path>) -> Result<SoftMask> {
    let img = read_image(path)?;
    let (h, w) = (img.height(), img.width());
    SoftMask::new(h, w, img.channel(0))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn save(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other)),
    })
}

/// Writes an 8-bit RGB PNG with round-half-up quantization.
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.as_slice().iter().map(|&v| quantize(v)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path, buf.save_with_format(path, ImageFormat::Png))
}

/// Writes a single plane as an 8-bit grayscale PNG, clamping to `[0, 1]`
/// before scaling by 255.
pub fn write_plane(values: &[f64], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if values.len() != height * width {
        return Err(Error::shape(height * width, values.len()));
    }
    let raw: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();
    let buf = image::GrayImage::from_raw(width as u32, height as u32, raw)
        .expect("buffer length matches dimensions");
    save(path, buf.save_with_format(path, ImageFormat::Png))
}

pub fn write_mask(mask: &SoftMask, path: impl AsRef<Path>) -> Result<()> {
    write_plane(mask.as_slice(), mask.height(), mask.width(), path)
}
