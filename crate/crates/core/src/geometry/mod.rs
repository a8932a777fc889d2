//! Camera geometry: homography projection, depth rasters, robust metric
//! scale alignment, un-projection, and ground-plane fitting.

mod depth;
mod plane;
mod scale;
mod unproject;

pub use depth::{read_pfm, write_pfm, DepthRaster, DepthSource, MapDepthSource};
pub use plane::{fit_ground_plane, GroundPlane};
pub use scale::{estimate_scale, ScaleEstimate, ScaleOutcome, ScaleRejection};
pub use unproject::{
    anthropometric_correction, person_height, staticity_check, unproject_point,
    HeightCorrection, StaticityReport,
};

use nalgebra::{Matrix3, Point2, Vector3};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("homography matrix is singular")]
    SingularHomography,
    #[error("expected 9 numbers for a homography, got {0}")]
    HomographyShape(usize),
    #[error("bad homography entry `{0}`")]
    HomographyEntry(String),
    #[error("camera frame {frame}: rotation is not orthonormal (max deviation {deviation:.2e})")]
    BadRotation { frame: usize, deviation: f64 },
    #[error("camera frame {frame}: focal lengths must be positive")]
    BadIntrinsics { frame: usize },
    #[error("camera list: {0}")]
    CameraJson(String),
    #[error("duplicate camera for frame {0}")]
    DuplicateCamera(usize),
    #[error("depth raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("PFM: {0}")]
    Pfm(String),
    #[error("ground plane fit: {0}")]
    DegeneratePlane(String),
    #[error("mean estimated height {0} is not positive")]
    NonPositiveMeanHeight(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Plane-to-plane projective map taking pixel coordinates homogeneously to
/// ground coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) || m.try_inverse().is_none() {
            return Err(GeometryError::SingularHomography);
        }
        Ok(Homography { m })
    }

    /// Parse nine whitespace-separated reals, row-major.
    pub fn from_text(text: &str) -> Result<Self, GeometryError> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| GeometryError::HomographyEntry(t.to_string())))
            .collect::<Result<_, _>>()?;
        if vals.len() != 9 {
            return Err(GeometryError::HomographyShape(vals.len()));
        }
        Homography::new(Matrix3::from_row_slice(&vals))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Homography {
        // Invertibility is checked at construction.
        Homography { m: self.m.try_inverse().expect("validated at construction") }
    }

    /// Apply to one pixel. `None` when the point maps to the line at
    /// infinity (|w| below 1e-12); callers count those drops.
    pub fn project(&self, u: f64, v: f64) -> Option<Point2<f64>> {
        let p = self.m * Vector3::new(u, v, 1.0);
        if p.z.abs() < 1e-12 {
            return None;
        }
        Some(Point2::new(p.x / p.z, p.y / p.z))
    }
}

/// Per-frame pinhole camera with a world-from-camera pose. `translation` is
/// the camera center in the reconstruction's unscaled units; multiplying by
/// the recovered scale puts it in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraFrame {
    pub fn new(
        frame: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::BadIntrinsics { frame });
        }
        let gram = rotation.transpose() * rotation;
        let deviation = (gram - Matrix3::identity()).abs().max();
        if !deviation.is_finite() || deviation > 1e-6 {
            return Err(GeometryError::BadRotation { frame, deviation });
        }
        Ok(CameraFrame { frame, fx, fy, cx, cy, rotation, translation })
    }
}

#[derive(Deserialize)]
struct CameraRecord {
    frame: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

/// Parse a JSON array of per-frame cameras, sorted by frame on return.
pub fn read_cameras(text: &str) -> Result<Vec<CameraFrame>, GeometryError> {
    let records: Vec<CameraRecord> =
        serde_json::from_str(text).map_err(|e| GeometryError::CameraJson(e.to_string()))?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        out.push(CameraFrame::new(
            rec.frame,
            rec.fx,
            rec.fy,
            rec.cx,
            rec.cy,
            Matrix3::from_row_slice(&rec.r),
            Vector3::new(rec.t[0], rec.t[1], rec.t[2]),
        )?);
    }
    out.sort_by_key(|c| c.frame);
    for w in out.windows(2) {
        if w[0].frame == w[1].frame {
            return Err(GeometryError::DuplicateCamera(w[0].frame));
        }
    }
    Ok(out)
}
