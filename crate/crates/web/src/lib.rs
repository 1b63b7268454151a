//! Browser bindings: glyph and blur preview, five-crop geometry, and the
//! focal loss curve.

use hcr::data::{gaussian_blur, gaussian_kernel, resize, synth_glyph, GrayImage};
use hcr::ensemble::{five_crops, CropGeometry};
use hcr::loss::focal_ce;
use hcr::Tensor;
use wasm_bindgen::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Core(#[from] hcr::Error),
    #[error("{0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, DemoError>;

fn to_js(e: DemoError) -> JsError {
    JsError::new(&e.to_string())
}

/// Synthetic glyph of class `label`, blurred with a `kernel_side` kernel.
/// `kernel_side` 1 leaves it untouched.
pub fn glyph(
    label: usize,
    side: usize,
    seed: u64,
    kernel_side: usize,
    sigma: f64,
) -> Result<GrayImage> {
    let img = synth_glyph(label, side, seed)?;
    Ok(gaussian_blur(&img, &gaussian_kernel(kernel_side, sigma)?))
}

/// Row and column of each crop, flattened as `[r0, c0, r1, c1, ...]`.
pub fn crop_offsets(resize_side: usize, crop_side: usize) -> Result<Vec<u32>> {
    let geometry = CropGeometry {
        resize_side,
        crop_side,
    };
    Ok(geometry
        .offsets()?
        .iter()
        .flat_map(|&(r, c)| [r as u32, c as u32])
        .collect())
}

/// The resized glyph followed by its five crops, pixels concatenated.
pub fn crop_tiles(
    label: usize,
    seed: u64,
    resize_side: usize,
    crop_side: usize,
) -> Result<Vec<u8>> {
    let img = synth_glyph(label, 64, seed)?;
    let geometry = CropGeometry {
        resize_side,
        crop_side,
    };
    let crops = five_crops(&img, &geometry)?;
    let mut out = resize(&img, resize_side, resize_side)?.pixels().to_vec();
    for crop in &crops.crops {
        out.extend_from_slice(crop.pixels());
    }
    Ok(out)
}

/// Focal loss of a single sample at `points` evenly spaced true-class
/// probabilities in `(0, 1)`, as `[p0, loss0, p1, loss1, ...]`.
pub fn focal_curve(gamma: f32, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(DemoError::Input(format!(
            "need at least 2 points, got {points}"
        )));
    }
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let p = (i as f64 + 0.5) / points as f64;
        let logits = Tensor::from_vec(&[1, 2], vec![(p / (1.0 - p)).ln() as f32, 0.0])?;
        let (loss, _) = focal_ce(&logits, &[0], gamma, &[1.0, 1.0])?;
        out.push(p);
        out.push(loss as f64);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = glyph)]
pub fn glyph_js(
    label: u32,
    side: u32,
    seed: u32,
    kernel_side: u32,
    sigma: f64,
) -> std::result::Result<Vec<u8>, JsError> {
    glyph(
        label as usize,
        side as usize,
        seed as u64,
        kernel_side as usize,
        sigma,
    )
    .map(|img| img.pixels().to_vec())
    .map_err(to_js)
}

#[wasm_bindgen(js_name = cropOffsets)]
pub fn crop_offsets_js(resize_side: u32, crop_side: u32) -> std::result::Result<Vec<u32>, JsError> {
    crop_offsets(resize_side as usize, crop_side as usize).map_err(to_js)
}

#[wasm_bindgen(js_name = cropTiles)]
pub fn crop_tiles_js(
    label: u32,
    seed: u32,
    resize_side: u32,
    crop_side: u32,
) -> std::result::Result<Vec<u8>, JsError> {
    crop_tiles(
        label as usize,
        seed as u64,
        resize_side as usize,
        crop_side as usize,
    )
    .map_err(to_js)
}

#[wasm_bindgen(js_name = focalCurve)]
pub fn focal_curve_js(gamma: f32, points: u32) -> std::result::Result<Vec<f64>, JsError> {
    focal_curve(gamma, points as usize).map_err(to_js)
}
