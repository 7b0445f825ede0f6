//! Synthetic dual-view knee phantoms.
//!
//! Each view shows a smooth bright band (synthetic cartilage) on a dark
//! background. Defect cases carry a circular notch bitten out of the band's
//! upper margin; the notch sits at the same relative position and has the
//! same radius in both views. The sagittal band is a condyle-like parabola,
//! the coronal band a shallow sine, so the two views are distinct images.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::manifest::Laterality;
use crate::types::{Label, View};

pub const BACKGROUND: f64 = 0.15;
pub const BAND: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub defect_prevalence: f64,
    pub image_size: usize,
    pub noise_sigma: f64,
    pub defect_radius_range: [f64; 2],
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            n_patients: 60,
            seed: 7,
            defect_prevalence: 0.5,
            image_size: 32,
            noise_sigma: 0.02,
            defect_radius_range: [3.0, 5.0],
        }
    }
}

impl PhantomConfig {
    pub fn band_thickness(&self) -> f64 {
        (self.image_size as f64 / 5.0).max(3.0)
    }

    pub fn defect_count(&self) -> usize {
        libm::floor(self.n_patients as f64 * self.defect_prevalence + 0.5) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::DegenerateConfig(msg));
        if self.n_patients < 2 {
            return bad(alloc::format!("n_patients must be >= 2, got {}", self.n_patients));
        }
        if !(self.defect_prevalence > 0.0 && self.defect_prevalence < 1.0) {
            return bad(alloc::format!("defect_prevalence must lie in (0,1), got {}", self.defect_prevalence));
        }
        let d = self.defect_count();
        if d == 0 || d == self.n_patients {
            return bad(alloc::format!("prevalence {} yields a single-class manifest", self.defect_prevalence));
        }
        if self.image_size < 16 {
            return bad(alloc::format!("image_size must be >= 16, got {}", self.image_size));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(alloc::format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let [lo, hi] = self.defect_radius_range;
        if !(lo >= 1.0 && hi >= lo) {
            return bad(alloc::format!("defect_radius_range must satisfy 1 <= min <= max, got [{lo}, {hi}]"));
        }
        if hi >= self.band_thickness() {
            return bad(alloc::format!(
                "defect radius {hi} leaves no headroom in a band {} px thick",
                self.band_thickness()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Notch {
    /// Horizontal position as a fraction of the image width.
    pub position: f64,
    pub radius: f64,
}

/// Everything needed to re-render one patient's two views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomCase {
    pub index: usize,
    pub label: Label,
    pub laterality: Laterality,
    pub notch: Option<Notch>,
    pub noise_seed: u64,
}

impl PhantomCase {
    fn sample(config: &PhantomConfig, index: usize, label: Label, rng: &mut ChaCha8Rng) -> Self {
        let laterality = if rng.random_bool(0.5) { Laterality::Left } else { Laterality::Right };
        let [lo, hi] = config.defect_radius_range;
        let position = rng.random_range(0.25..=0.75);
        let radius = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let noise_seed = rng.random();
        PhantomCase {
            index,
            label,
            laterality,
            notch: label.is_defect().then_some(Notch { position, radius }),
            noise_seed,
        }
    }

    pub fn patient_id(&self) -> alloc::string::String {
        alloc::format!("P{:04}", self.index + 1)
    }
}

/// Draws labels (exactly `round(n * prevalence)` defects) and geometry.
pub fn plan_cases(config: &PhantomConfig) -> Result<Vec<PhantomCase>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.defect_count();
    let mut labels: Vec<Label> = (0..config.n_patients).map(|i| Label::from_defect(i < d)).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| PhantomCase::sample(config, i, label, &mut rng))
        .collect())
}

/// Geometry for a caller-fixed label sequence (used for bundled fixtures).
pub fn plan_cases_with_labels(config: &PhantomConfig, labels: &[Label]) -> Result<Vec<PhantomCase>> {
    let mut cfg = config.clone();
    cfg.n_patients = labels.len().max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, label)| PhantomCase::sample(&cfg, i, *label, &mut rng))
        .collect())
}

fn band_centre(view: View, size: f64, x: f64) -> f64 {
    match view {
        View::Coronal => 0.55 * size + 0.06 * size * libm::sin(2.0 * core::f64::consts::PI * x / size),
        View::Sagittal => {
            let u = (x - size / 2.0) / (size / 2.0);
            0.42 * size + 0.22 * size * u * u
        }
    }
}

/// `true` for pixels whose centre lies inside the band.
pub fn band_mask(view: View, size: usize, thickness: f64) -> Vec<bool> {
    let s = size as f64;
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            mask.push(libm::fabs(py - band_centre(view, s, px)) <= thickness / 2.0);
        }
    }
    mask
}

fn view_tag(view: View) -> u64 {
    match view {
        View::Sagittal => 0x5a61_6769_7474_616c,
        View::Coronal => 0x636f_726f_6e61_6c00,
    }
}

pub fn render_view(config: &PhantomConfig, case: &PhantomCase, view: View) -> GrayImage {
    let size = config.image_size;
    let s = size as f64;
    let t = config.band_thickness();
    let mask = band_mask(view, size, t);
    let notch_centre = case.notch.map(|n| {
        let cx = n.position * s;
        (cx, band_centre(view, s, cx) - t / 2.0, n.radius)
    });

    let mut img = GrayImage::new(size, size, BACKGROUND);
    for y in 0..size {
        for x in 0..size {
            if !mask[y * size + x] {
                continue;
            }
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let notched = notch_centre.is_some_and(|(cx, cy, r)| {
                let (dx, dy) = (px - cx, py - cy);
                dx * dx + dy * dy <= r * r
            });
            img.set(x, y, if notched { BACKGROUND } else { BAND });
        }
    }

    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(case.noise_seed ^ view_tag(view));
        let normal = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
        for p in img.pixels.iter_mut() {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    img
}
