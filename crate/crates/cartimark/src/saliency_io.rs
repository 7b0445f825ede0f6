//! Saliency maps and overlays written to disk.

use std::path::{Path, PathBuf};

use cartimark_core::overlay::{render_overlay, Colormap};
use cartimark_core::saliency::{fusion_saliency, single_view_saliency, SaliencyMap};
use cartimark_core::View;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::fsutil::write_json;
use crate::fusion_model::AnyModel;
use crate::imageio;

/// Maps for one patient: one for a single-view model, two for a fusion
/// model (sagittal first).
pub fn compute_saliency(model: &AnyModel, data: &Dataset, patient_id: &str) -> Result<Vec<SaliencyMap>> {
    Ok(match model {
        AnyModel::Single(m) => {
            let input = m.model.preprocess(&data.load_image(patient_id, m.artifact.view)?)?;
            vec![single_view_saliency(&m.model, &input, &m.artifact.model_id, patient_id)]
        }
        AnyModel::Fusion(f) => {
            let s = f.model.sagittal.preprocess(&data.load_image(patient_id, View::Sagittal)?)?;
            let c = f.model.coronal.preprocess(&data.load_image(patient_id, View::Coronal)?)?;
            fusion_saliency(&f.model, &s, &c, &f.file.model_id, patient_id).into()
        }
    })
}

/// Writes `saliency_<patient>_<view>.json` and `overlay_<patient>_<view>.png`
/// for every map and returns the written paths.
pub fn write_saliency(
    maps: &[SaliencyMap],
    data: &Dataset,
    colormap: Colormap,
    alpha: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for map in maps {
        let stem = format!("{}_{}", map.patient_id, map.view);
        let raw = out_dir.join(format!("saliency_{stem}.json"));
        write_json(&raw, map)?;
        let base = data.load_image(&map.patient_id, map.view)?;
        let overlay = out_dir.join(format!("overlay_{stem}.png"));
        imageio::write_rgb8(&overlay, &render_overlay(&base, map, colormap, alpha))?;
        written.push(raw);
        written.push(overlay);
    }
    Ok(written)
}
