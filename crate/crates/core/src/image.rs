//! Grayscale images and the resampling used by preprocessing and overlays.

use alloc::vec;
use alloc::vec::Vec;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        GrayImage { width, height, pixels: vec![fill; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer does not match dimensions");
        GrayImage { width, height, pixels }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    /// 8-bit quantisation, as stored in PNG files.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        GrayImage::from_pixels(width, height, bytes.iter().map(|b| f64::from(*b) / 255.0).collect())
    }

    pub fn from_u16(width: usize, height: usize, samples: &[u16]) -> Self {
        GrayImage::from_pixels(width, height, samples.iter().map(|s| f64::from(*s) / 65535.0).collect())
    }
}

/// Bilinear resampling of a row-major grid, sampling at pixel centres.
pub fn resize_bilinear(src: &[f64], width: usize, height: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    if width == new_width && height == new_height {
        return src.to_vec();
    }
    let mut out = vec![0.0; new_width * new_height];
    let sx = width as f64 / new_width as f64;
    let sy = height as f64 / new_height as f64;
    for y in 0..new_height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (height - 1) as f64);
        let y0 = libm::floor(fy) as usize;
        let y1 = (y0 + 1).min(height - 1);
        let wy = fy - y0 as f64;
        for x in 0..new_width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (width - 1) as f64);
            let x0 = libm::floor(fx) as usize;
            let x1 = (x0 + 1).min(width - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * width + x0] * (1.0 - wx) + src[y0 * width + x1] * wx;
            let bottom = src[y1 * width + x0] * (1.0 - wx) + src[y1 * width + x1] * wx;
            out[y * new_width + x] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}

/// Aspect-preserving resize onto a black `size x size` canvas, centred.
pub fn letterbox(image: &GrayImage, size: usize) -> GrayImage {
    if image.width == size && image.height == size {
        return image.clone();
    }
    let scale = size as f64 / image.width.max(image.height) as f64;
    let w = (libm::round(image.width as f64 * scale) as usize).clamp(1, size);
    let h = (libm::round(image.height as f64 * scale) as usize).clamp(1, size);
    let resized = resize_bilinear(&image.pixels, image.width, image.height, w, h);
    let mut out = GrayImage::new(size, size, 0.0);
    let (ox, oy) = ((size - w) / 2, (size - h) / 2);
    for y in 0..h {
        for x in 0..w {
            out.set(ox + x, oy + y, resized[y * w + x]);
        }
    }
    out
}
