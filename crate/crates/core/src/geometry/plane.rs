//! Ground-plane estimation from unprojected foot points, and the planar
//! basis that turns world points into bird's-eye-view coordinates.

use nalgebra::{Matrix3, Point3, Unit, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::GeometryError;
use crate::config::PlaneFitConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundPlane {
    pub origin: Point3<f64>,
    pub normal: Unit<Vector3<f64>>,
    /// In-plane axes; `e1` follows the dominant spread of the fitted points.
    pub e1: Unit<Vector3<f64>>,
    pub e2: Unit<Vector3<f64>>,
    pub inlier_fraction: f64,
}

impl GroundPlane {
    pub fn to_bev(&self, p: &Point3<f64>) -> nalgebra::Point2<f64> {
        let d = p - self.origin;
        nalgebra::Point2::new(d.dot(&self.e1), d.dot(&self.e2))
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.origin).dot(&self.normal).abs()
    }
}

/// Total least squares: plane through the centroid whose normal is the
/// smallest-eigenvalue direction of the scatter matrix. Returns the centroid,
/// the normal, and the largest-eigenvalue (dominant spread) direction.
fn tls_plane(points: &[Point3<f64>]) -> Option<(Point3<f64>, Vector3<f64>, Vector3<f64>)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mut c = Vector3::zeros();
    for p in points {
        c += p.coords;
    }
    c /= n as f64;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut lo = 0;
    let mut hi = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[lo] {
            lo = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[hi] {
            hi = i;
        }
    }
    // Collinear or coincident points leave the plane underdetermined: the
    // two smallest eigenvalues vanish together.
    let mid = 3 - lo - hi;
    if lo == hi || eig.eigenvalues[mid] <= 1e-12 * eig.eigenvalues[hi].max(1e-300) {
        return None;
    }
    Some((
        Point3::from(c),
        eig.eigenvectors.column(lo).into_owned(),
        eig.eigenvectors.column(hi).into_owned(),
    ))
}

/// Flip `v` so its largest-magnitude component is positive; breaks the sign
/// ambiguity of eigenvectors deterministically.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// RANSAC plane fit with a total-least-squares refit on the consensus set.
pub fn fit_ground_plane(
    points: &[Point3<f64>],
    cfg: &PlaneFitConfig,
    seed: u64,
) -> Result<GroundPlane, GeometryError> {
    let n = points.len();
    if n < 3 {
        return Err(GeometryError::DegeneratePlane(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Point3<f64>, Vector3<f64>)> = None;
    for _ in 0..cfg.ransac_iterations {
        let idx = sample(&mut rng, n, 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let normal = (b - a).cross(&(c - a));
        let norm = normal.norm();
        if norm < 1e-12 {
            continue;
        }
        let normal = normal / norm;
        let count = points
            .iter()
            .filter(|p| (*p - a).dot(&normal).abs() < cfg.inlier_threshold_m)
            .count();
        if best.as_ref().map_or(true, |(bc, _, _)| count > *bc) {
            best = Some((count, a, normal));
        }
    }
    let (_, anchor, normal) =
        best.ok_or_else(|| GeometryError::DegeneratePlane("all candidate triples collinear".into()))?;
    let inliers: Vec<Point3<f64>> = points
        .iter()
        .filter(|p| (*p - anchor).dot(&normal).abs() < cfg.inlier_threshold_m)
        .copied()
        .collect();
    let (origin, raw_normal, raw_e1) = tls_plane(&inliers)
        .ok_or_else(|| GeometryError::DegeneratePlane("consensus set is collinear".into()))?;

    // Normal sign: prefer +z, falling back to +y then +x when the leading
    // component is (near) zero.
    let mut nvec = raw_normal.normalize();
    let flip = if nvec.z.abs() > 1e-9 {
        nvec.z < 0.0
    } else if nvec.y.abs() > 1e-9 {
        nvec.y < 0.0
    } else {
        nvec.x < 0.0
    };
    if flip {
        nvec = -nvec;
    }
    let normal = Unit::new_normalize(nvec);
    // Project the dominant spread direction into the plane so e1 is exactly
    // orthogonal to the normal, then canonicalize its sign.
    let mut e1v = raw_e1 - normal.as_ref() * raw_e1.dot(&normal);
    if e1v.norm() < 1e-12 {
        return Err(GeometryError::DegeneratePlane(
            "spread direction parallel to normal".into(),
        ));
    }
    e1v = canonical_sign(e1v.normalize());
    let e1 = Unit::new_normalize(e1v);
    let e2 = Unit::new_normalize(normal.cross(&e1));
    let inlier_fraction = inliers.len() as f64 / n as f64;
    Ok(GroundPlane { origin, normal, e1, e2, inlier_fraction })
}
