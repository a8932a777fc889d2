//! Distances between samples, sequences, and distributions.
//!
//! These are the shared numeric kernels under the realism metrics: exact 1-D
//! earth mover's distance between empirical distributions, dynamic time
//! warping between planar trajectories, k-nearest-neighbor radii, local
//! density, and kernel-density modes.

use nalgebra::{Point2, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("empty distribution")]
pub struct EmptyDistribution;

/// Exact 1-D earth mover's distance (Wasserstein-1) between two empirical
/// distributions with uniform weights `1/|a|` and `1/|b|`.
///
/// Computed as the integral of the absolute CDF difference over the merged
/// support, which is exact for point masses and costs O(n log n). Sizes may
/// differ; values need not be sorted.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64, EmptyDistribution> {
    if a.is_empty() || b.is_empty() {
        return Err(EmptyDistribution);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);

    let mut i = 0;
    let mut j = 0;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < xs.len() || j < ys.len() {
        let x = match (xs.get(i), ys.get(j)) {
            (Some(&xv), Some(&yv)) => xv.min(yv),
            (Some(&xv), None) => xv,
            (None, Some(&yv)) => yv,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            let fa = i as f64 / na;
            let fb = j as f64 / nb;
            total += (fa - fb).abs() * (x - p);
        }
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        prev = Some(x);
    }
    Ok(total)
}

/// Classic dynamic time warping with Euclidean ground cost and sum-cost
/// alignment, unconstrained by default.
///
/// Panics if either sequence is empty; callers hold the nonempty contract.
pub fn dtw(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    dtw_banded(a, b, None)
}

/// DTW restricted to a Sakoe-Chiba band of half-width `band` around the
/// diagonal (`None` disables the constraint). The band is widened to the
/// length difference so an alignment always exists.
pub fn dtw_banded(a: &[Point2<f64>], b: &[Point2<f64>], band: Option<usize>) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "dtw requires nonempty sequences");
    let n = a.len();
    let m = b.len();
    let radius = band.map(|r| r.max(n.abs_diff(m)));
    let window = |i: usize| -> (usize, usize) {
        match radius {
            None => (0, m),
            Some(r) => (i.saturating_sub(r), (i + r + 1).min(m)),
        }
    };
    let dist = |p: Point2<f64>, q: Point2<f64>| (p - q).norm();

    let mut prev = vec![f64::INFINITY; m];
    let mut curr = vec![f64::INFINITY; m];
    let (lo, hi) = window(0);
    debug_assert_eq!(lo, 0);
    prev[0] = dist(a[0], b[0]);
    for j in 1..hi {
        prev[j] = prev[j - 1] + dist(a[0], b[j]);
    }
    for i in 1..n {
        curr.fill(f64::INFINITY);
        let (lo, hi) = window(i);
        for j in lo..hi {
            let best = if j == 0 {
                prev[0]
            } else {
                prev[j].min(curr[j - 1]).min(prev[j - 1])
            };
            curr[j] = dist(a[i], b[j]) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m - 1]
}

/// Distance from `query` to its k-th nearest point in `others` (1-indexed k).
/// Returns `None` when fewer than `k` candidates exist. Ties keep input
/// order, so results are deterministic for repeated coordinates.
pub fn knn_radius(query: Point2<f64>, others: &[Point2<f64>], k: usize) -> Option<f64> {
    if k == 0 || others.len() < k {
        return None;
    }
    let mut d: Vec<f64> = others.iter().map(|p| (p - query).norm()).collect();
    d.sort_by(f64::total_cmp); // stable: equal distances keep input order
    Some(d[k - 1])
}

/// Local density from a k-NN radius: K / (pi r^2). `None` for r = 0, where
/// the estimate is undefined (co-located samples).
pub fn local_density(radius: f64, k: usize) -> Option<f64> {
    if radius > 0.0 {
        Some(k as f64 / (std::f64::consts::PI * radius * radius))
    } else {
        None
    }
}

/// Mode of a Gaussian kernel density estimate evaluated on a 512-point grid
/// spanning the sample range. Ties resolve to the smallest grid value; a
/// degenerate sample (single value, or zero spread) returns that value.
/// `bandwidth: None` selects Silverman's rule.
pub fn kde_mode(samples: &[f64], bandwidth: Option<f64>) -> Option<f64> {
    const GRID: usize = 512;
    if samples.is_empty() {
        return None;
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Some(lo);
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(_) => return None,
        None => {
            let b = silverman_bandwidth(samples);
            if !(b > 0.0) {
                return Some(lo);
            }
            b
        }
    };
    let n = samples.len() as f64;
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best_x = lo;
    let mut best_y = f64::NEG_INFINITY;
    for g in 0..GRID {
        let x = lo + g as f64 * step;
        let mut y = 0.0;
        for &s in samples {
            let z = (x - s) / bw;
            y += (-0.5 * z * z).exp();
        }
        let y = y * norm;
        if y > best_y {
            best_y = y;
            best_x = x;
        }
    }
    Some(best_x)
}

/// Silverman's rule of thumb: 0.9 min(sigma, IQR/1.34) n^(-1/5).
fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (n - 1.0).max(1.0);
    let sigma = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let frac = idx - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    0.9 * spread * n.powf(-0.2)
}

/// Rotate a vector by angle `theta` (counter-clockwise).
pub fn rotate(v: Vector2<f64>, theta: f64) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}
