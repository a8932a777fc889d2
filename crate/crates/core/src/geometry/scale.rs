//! Robust per-frame alignment of relative depth to metric depth.
//!
//! The model is a single multiplicative scale: `d_metric ~ lambda * d_rel`.
//! Candidate scales come from RANSAC over random pixel subsets, each refined
//! with Huber-weighted IRLS; the winner is refit on its inlier set. Frames
//! with too few jointly valid pixels or too little consensus are rejected
//! rather than estimated.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{DepthRaster, GeometryError};
use crate::config::ScaleConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleEstimate {
    pub lambda: f64,
    pub inlier_fraction: f64,
    pub n_pixels: usize,
    pub residual_median_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ScaleRejection {
    TooFewValidPixels { n_pixels: usize, required: usize },
    LowInlierFraction { inlier_fraction: f64, required: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleOutcome {
    Accepted(ScaleEstimate),
    Rejected(ScaleRejection),
}

/// Least-squares scale through the origin: argmin_l sum (l*rel - met)^2.
fn ls_scale(rel: &[f64], met: &[f64], idx: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in idx {
        num += rel[i] * met[i];
        den += rel[i] * rel[i];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// IRLS with Huber weights on the metric-depth residual, seeded from the
/// plain least-squares fit over the same index set.
fn irls_huber(rel: &[f64], met: &[f64], idx: &[usize], delta: f64, steps: usize) -> f64 {
    let mut lambda = ls_scale(rel, met, idx);
    for _ in 0..steps {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in idx {
            let r = (lambda * rel[i] - met[i]).abs();
            let w = if r <= delta { 1.0 } else { delta / r };
            num += w * rel[i] * met[i];
            den += w * rel[i] * rel[i];
        }
        if den <= 0.0 {
            break;
        }
        lambda = num / den;
    }
    lambda
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Estimate the scale tying a relative raster to a metric raster over their
/// jointly valid pixels. Deterministic for a given `seed`.
pub fn estimate_scale(
    rel: &DepthRaster,
    metric: &DepthRaster,
    cfg: &ScaleConfig,
    seed: u64,
) -> Result<ScaleOutcome, GeometryError> {
    if rel.width() != metric.width() || rel.height() != metric.height() {
        return Err(GeometryError::DimensionMismatch(
            rel.width(),
            rel.height(),
            metric.width(),
            metric.height(),
        ));
    }
    let mut rels = Vec::new();
    let mut mets = Vec::new();
    for y in 0..rel.height() {
        for x in 0..rel.width() {
            if rel.is_valid(x, y) && metric.is_valid(x, y) {
                rels.push(rel.get(x, y) as f64);
                mets.push(metric.get(x, y) as f64);
            }
        }
    }
    let n = rels.len();
    if n < cfg.min_valid_pixels {
        return Ok(ScaleOutcome::Rejected(ScaleRejection::TooFewValidPixels {
            n_pixels: n,
            required: cfg.min_valid_pixels,
        }));
    }

    let mut met_sorted = mets.clone();
    met_sorted.sort_by(f64::total_cmp);
    let inlier_threshold = cfg.residual_median_fraction * median(&met_sorted);

    let count_inliers = |lambda: f64| -> usize {
        rels.iter()
            .zip(&mets)
            .filter(|(r, m)| (lambda * **r - **m).abs() < inlier_threshold)
            .count()
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sample_size = cfg.ransac_sample_size.min(n);
    let all: Vec<usize> = (0..n).collect();
    let mut best_lambda = irls_huber(&rels, &mets, &all, cfg.huber_delta_m, cfg.irls_steps);
    let mut best_count = count_inliers(best_lambda);
    for _ in 0..cfg.ransac_iterations {
        let idx = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
        let lambda = irls_huber(&rels, &mets, &idx, cfg.huber_delta_m, cfg.irls_steps);
        let count = count_inliers(lambda);
        if count > best_count {
            best_count = count;
            best_lambda = lambda;
        }
    }

    // Refit on the winning consensus set, then re-evaluate support for the
    // refit scale; the refit is what gets reported.
    let inlier_idx: Vec<usize> = (0..n)
        .filter(|&i| (best_lambda * rels[i] - mets[i]).abs() < inlier_threshold)
        .collect();
    let lambda = if inlier_idx.is_empty() {
        best_lambda
    } else {
        irls_huber(&rels, &mets, &inlier_idx, cfg.huber_delta_m, cfg.irls_steps)
    };
    let inlier_fraction = count_inliers(lambda) as f64 / n as f64;
    if inlier_fraction < cfg.min_inlier_fraction {
        return Ok(ScaleOutcome::Rejected(ScaleRejection::LowInlierFraction {
            inlier_fraction,
            required: cfg.min_inlier_fraction,
        }));
    }
    let mut residuals: Vec<f64> = rels
        .iter()
        .zip(&mets)
        .map(|(r, m)| (lambda * r - m).abs())
        .collect();
    residuals.sort_by(f64::total_cmp);
    Ok(ScaleOutcome::Accepted(ScaleEstimate {
        lambda,
        inlier_fraction,
        n_pixels: n,
        residual_median_m: median(&residuals),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn planted_pair(
        lambda: f64,
        n: usize,
        outlier_fraction: f64,
        seed: u64,
    ) -> (DepthRaster, DepthRaster) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut rel = Vec::with_capacity(n);
        let mut met = Vec::with_capacity(n);
        for i in 0..n {
            let m = 5.0 + 45.0 * rng.gen::<f64>();
            let r = m / lambda;
            let corrupted = (i as f64) < outlier_fraction * n as f64;
            let m = if corrupted { m + 10.0 } else { m };
            rel.push(r as f32);
            met.push(m as f32);
        }
        (
            DepthRaster::new(n, 1, rel).unwrap(),
            DepthRaster::new(n, 1, met).unwrap(),
        )
    }

    #[test]
    fn clean_data_recovers_scale_exactly() {
        for lambda in [0.5, 2.5, 10.0] {
            let (rel, met) = planted_pair(lambda, 400, 0.0, 7);
            match estimate_scale(&rel, &met, &ScaleConfig::default(), 1).unwrap() {
                ScaleOutcome::Accepted(e) => {
                    assert!(
                        (e.lambda - lambda).abs() / lambda < 1e-3,
                        "lambda {lambda}: got {}",
                        e.lambda
                    );
                    assert!(e.inlier_fraction > 0.99);
                    assert!(e.residual_median_m < 1e-3);
                    assert_eq!(e.n_pixels, 400);
                }
                other => panic!("expected acceptance, got {other:?}"),
            }
        }
    }

    #[test]
    fn forty_percent_offset_outliers_are_rejected_by_consensus() {
        for lambda in [0.5, 2.5, 10.0] {
            let (rel, met) = planted_pair(lambda, 1000, 0.4, 11);
            match estimate_scale(&rel, &met, &ScaleConfig::default(), 3).unwrap() {
                ScaleOutcome::Accepted(e) => {
                    assert!(
                        (e.lambda - lambda).abs() / lambda < 0.01,
                        "lambda {lambda}: got {} (rel err {})",
                        e.lambda,
                        (e.lambda - lambda).abs() / lambda
                    );
                }
                other => panic!("expected acceptance, got {other:?}"),
            }
        }
    }

    #[test]
    fn too_few_joint_pixels_rejects() {
        // 99 jointly valid pixels: one short of the floor.
        let n = 120;
        let (mut relv, mut metv) = (vec![0f32; n], vec![0f32; n]);
        for i in 0..99 {
            relv[i] = 1.0 + i as f32;
            metv[i] = 2.0 * (1.0 + i as f32);
        }
        metv[99] = 3.0; // valid in one raster only
        let rel = DepthRaster::new(n, 1, relv).unwrap();
        let met = DepthRaster::new(n, 1, metv).unwrap();
        match estimate_scale(&rel, &met, &ScaleConfig::default(), 0).unwrap() {
            ScaleOutcome::Rejected(ScaleRejection::TooFewValidPixels { n_pixels, required }) => {
                assert_eq!(n_pixels, 99);
                assert_eq!(required, 100);
            }
            other => panic!("expected pixel-count rejection, got {other:?}"),
        }
    }

    #[test]
    fn exactly_min_valid_pixels_is_estimated() {
        let (rel, met) = planted_pair(2.0, 100, 0.0, 5);
        assert!(matches!(
            estimate_scale(&rel, &met, &ScaleConfig::default(), 0).unwrap(),
            ScaleOutcome::Accepted(_)
        ));
    }

    #[test]
    fn uncorrelated_majority_rejects_on_inlier_fraction() {
        // 29% follow lambda=2; the rest pair a narrow relative range with far
        // metric values, so no single scale can absorb them: lambda ~ 2 maps
        // them nowhere near 30+ m, and lambda ~ 30+ throws away the clean set
        // while sweeping a window too small to reach 30% on its own.
        let n = 1000;
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut relv = Vec::with_capacity(n);
        let mut metv = Vec::with_capacity(n);
        for i in 0..n {
            if i < 290 {
                let m = 5.0 + 45.0 * rng.gen::<f64>();
                relv.push((m / 2.0) as f32);
                metv.push(m as f32);
            } else {
                relv.push((1.0 + rng.gen::<f64>()) as f32);
                metv.push((30.0 + 50.0 * rng.gen::<f64>()) as f32);
            }
        }
        let rel = DepthRaster::new(n, 1, relv).unwrap();
        let met = DepthRaster::new(n, 1, metv).unwrap();
        match estimate_scale(&rel, &met, &ScaleConfig::default(), 9).unwrap() {
            ScaleOutcome::Rejected(ScaleRejection::LowInlierFraction { inlier_fraction, required }) => {
                assert!(inlier_fraction < 0.30, "fraction {inlier_fraction}");
                assert_eq!(required, 0.30);
            }
            other => panic!("expected consensus rejection, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_raster_shapes_error() {
        let a = DepthRaster::new(4, 4, vec![1.0; 16]).unwrap();
        let b = DepthRaster::new(4, 3, vec![1.0; 12]).unwrap();
        assert!(matches!(
            estimate_scale(&a, &b, &ScaleConfig::default(), 0),
            Err(GeometryError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (rel, met) = planted_pair(2.5, 600, 0.4, 21);
        let a = estimate_scale(&rel, &met, &ScaleConfig::default(), 77).unwrap();
        let b = estimate_scale(&rel, &met, &ScaleConfig::default(), 77).unwrap();
        assert_eq!(a, b);
    }
}
