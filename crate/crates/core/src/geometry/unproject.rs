//! Pixel-to-world un-projection through a scaled depth raster, plus the two
//! sanity gates that ride on it: person-height screening of the metric scale
//! and a camera staticity check.

use nalgebra::Point3;
use serde::Serialize;

use super::{CameraFrame, DepthRaster, GeometryError};
use crate::config::{AnthropometricConfig, StaticityConfig};
use crate::trajdata::Detection;

/// Un-project pixel `(u, v)` into world coordinates. The raster holds
/// relative depth; `lambda` converts it (and the stored camera translation)
/// to meters. `None` when no usable depth exists near the pixel.
pub fn unproject_point(
    cam: &CameraFrame,
    lambda: f64,
    depth: &DepthRaster,
    u: f64,
    v: f64,
    fallback_radius_px: f64,
) -> Option<Point3<f64>> {
    let d = depth.sample(u, v, fallback_radius_px)?;
    let z = lambda * d;
    let x = (u - cam.cx) * z / cam.fx;
    let y = (v - cam.cy) * z / cam.fy;
    let p_cam = nalgebra::Vector3::new(x, y, z);
    let world = cam.rotation * p_cam + lambda * cam.translation;
    Some(Point3::from(world))
}

/// Apparent person height in meters from a box height in pixels, using the
/// depth at the assumed ground contact. `None` when depth is unavailable.
pub fn person_height(
    cam: &CameraFrame,
    lambda: f64,
    depth: &DepthRaster,
    det: &Detection,
    fallback_radius_px: f64,
) -> Option<f64> {
    let (u, v) = det.ground_contact();
    let d = depth.sample(u, v, fallback_radius_px)?;
    let z = lambda * d;
    Some(det.bb_height * z / cam.fy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightCorrection {
    /// Mean estimated height before correction; absent when no detection had
    /// usable depth.
    pub mean_height_m: Option<f64>,
    /// Multiplier applied to the metric scale (1.0 when none).
    pub factor: f64,
    pub applied: bool,
    pub n_heights: usize,
}

/// Screen the metric scale against human stature: if the mean estimated
/// height falls outside the open plausibility interval, rescale so the mean
/// lands on the target. With no height samples the scale is left alone.
pub fn anthropometric_correction(
    heights: &[f64],
    cfg: &AnthropometricConfig,
) -> Result<HeightCorrection, GeometryError> {
    if heights.is_empty() {
        return Ok(HeightCorrection { mean_height_m: None, factor: 1.0, applied: false, n_heights: 0 });
    }
    let mean = heights.iter().sum::<f64>() / heights.len() as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(GeometryError::NonPositiveMeanHeight(mean));
    }
    let inside = mean > cfg.min_mean_height_m && mean < cfg.max_mean_height_m;
    let factor = if inside { 1.0 } else { cfg.target_mean_height_m / mean };
    Ok(HeightCorrection {
        mean_height_m: Some(mean),
        factor,
        applied: !inside,
        n_heights: heights.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticityReport {
    pub is_static: bool,
    pub max_translation_m: f64,
    pub max_rotation_deg: f64,
}

/// Check that the camera holds still: every consecutive pose pair must move
/// less than the translation bound (in meters, so the relative translations
/// are scaled by `lambda`) and rotate less than the angular bound.
pub fn staticity_check(
    cameras: &[CameraFrame],
    cfg: &StaticityConfig,
    lambda: f64,
) -> StaticityReport {
    let mut max_t = 0.0f64;
    let mut max_r = 0.0f64;
    for w in cameras.windows(2) {
        let dt = lambda * (w[1].translation - w[0].translation).norm();
        let rel = w[1].rotation * w[0].rotation.transpose();
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let dr = cos.acos().to_degrees();
        max_t = max_t.max(dt);
        max_r = max_r.max(dr);
    }
    StaticityReport {
        is_static: max_t < cfg.max_translation_m && max_r < cfg.max_rotation_deg,
        max_translation_m: max_t,
        max_rotation_deg: max_r,
    }
}
