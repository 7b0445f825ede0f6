//! PNG codec glue between files and the core image types.

use std::io::Cursor;
use std::path::Path;

use cartimark_core::image::GrayImage;
use cartimark_core::overlay::RgbImage;
use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{AppError, Result};
use crate::fsutil::write_atomic;

fn decode(img: DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(b) => GrayImage::from_u8(w, h, b.as_raw()),
        DynamicImage::ImageLuma16(b) => GrayImage::from_u16(w, h, b.as_raw()),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_) => {
            GrayImage::from_u16(w, h, img.into_luma16().as_raw())
        }
        other => GrayImage::from_u8(w, h, other.into_luma8().as_raw()),
    }
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path).map_err(AppError::io(path))?;
    let img = reader.with_guessed_format().map_err(AppError::io(path))?.decode().map_err(|e| AppError::parse(path, e))?;
    Ok(decode(img))
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|e| AppError::parse("<memory>", e))?;
    Ok(decode(img))
}

/// Header-only probe used by manifest validation.
pub fn probe(path: &Path) -> Option<(u32, u32)> {
    ImageReader::open(path).ok()?.with_guessed_format().ok()?.into_dimensions().ok()
}

pub fn encode_gray8(img: &GrayImage) -> Vec<u8> {
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.to_u8()).expect("matching buffer");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_gray8(img))
}

pub fn write_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone()).expect("matching buffer");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    write_atomic(path, &out.into_inner())
}
