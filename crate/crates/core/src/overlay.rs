//! Saliency overlays: map resized to the image, coloured, alpha-blended over
//! the grayscale base.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, GrayImage};
use crate::saliency::SaliencyMap;

pub const DEFAULT_ALPHA: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    /// Blue at 0 through cyan and yellow to red at 1.
    Jet,
    /// Blue at 0, white at 0.5, red at 1.
    BlueWhiteRed,
}

impl Colormap {
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "jet" => Ok(Colormap::Jet),
            "bwr" => Ok(Colormap::BlueWhiteRed),
            other => Err(Error::UnknownColormap(other.to_string())),
        }
    }

    pub fn color(self, v: f64) -> [f64; 3] {
        let v = v.clamp(0.0, 1.0);
        match self {
            Colormap::Jet => {
                let ch = |c: f64| (1.5 - libm::fabs(4.0 * v - c)).clamp(0.0, 1.0);
                [ch(3.0), ch(2.0), ch(1.0)]
            }
            Colormap::BlueWhiteRed => {
                if v < 0.5 {
                    let t = v / 0.5;
                    [t, t, 1.0]
                } else {
                    let t = (1.0 - v) / 0.5;
                    [1.0, t, t]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB bytes, row-major.
    pub data: Vec<u8>,
}

pub fn render_overlay(base: &GrayImage, map: &SaliencyMap, colormap: Colormap, alpha: f64) -> RgbImage {
    let values = resize_bilinear(&map.values, map.width, map.height, base.width, base.height);
    let mut data = Vec::with_capacity(base.width * base.height * 3);
    for (g, v) in base.pixels.iter().zip(&values) {
        let rgb = colormap.color(*v);
        for c in rgb {
            let blended = (1.0 - alpha) * g.clamp(0.0, 1.0) + alpha * c;
            data.push(libm::round(blended * 255.0) as u8);
        }
    }
    RgbImage { width: base.width, height: base.height, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::View;
    use alloc::vec;

    fn map(fill: f64) -> SaliencyMap {
        SaliencyMap {
            method: "vanilla_gradient".into(),
            model_id: "m".into(),
            patient_id: "p".into(),
            view: View::Coronal,
            height: 4,
            width: 4,
            values: vec![fill; 16],
        }
    }

    #[test]
    fn jet_endpoints() {
        let [r, g, b] = Colormap::Jet.color(1.0);
        assert!(r > 0.0 && g == 0.0 && b == 0.0);
        let [r, g, b] = Colormap::Jet.color(0.0);
        assert!(r == 0.0 && g == 0.0 && b > 0.0);
        assert!(Colormap::parse("viridis").is_err());
    }

    #[test]
    fn zero_map_stays_within_zero_colour_blend() {
        let base = GrayImage::from_pixels(3, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let out = render_overlay(&base, &map(0.0), Colormap::Jet, DEFAULT_ALPHA);
        let zero = Colormap::Jet.color(0.0);
        for (i, g) in base.pixels.iter().enumerate() {
            for c in 0..3 {
                let diff = (f64::from(out.data[i * 3 + c]) / 255.0 - g).abs();
                let bound = DEFAULT_ALPHA * (zero[c] - g).abs() + 0.5 / 255.0;
                assert!(diff <= bound, "pixel {i} channel {c}");
            }
        }
    }

    #[test]
    fn constant_one_map_is_uniform_red_tint() {
        let base = GrayImage::new(5, 5, 0.5);
        let out = render_overlay(&base, &map(1.0), Colormap::Jet, DEFAULT_ALPHA);
        let first = &out.data[..3];
        assert!(first[0] > first[1] && first[0] > first[2]);
        assert!(out.data.chunks(3).all(|px| px == first));
    }
}
