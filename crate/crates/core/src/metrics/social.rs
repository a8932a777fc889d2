//! Per-frame social-interaction quantities: collision counts, directional
//! flow, nearest-neighbor spacing, the fundamental diagram, and the Fruin
//! level-of-service scale.

use nalgebra::Vector2;
use serde::Serialize;

use super::FrameSample;
use crate::config::{LosConfig, MetricConfig};
use crate::metricspace::{knn_radius, local_density, rotate};

/// Number of agents in collision per frame (another agent strictly closer
/// than `threshold`). Empty frames contribute zero.
pub fn collision_counts(frames: &[Vec<FrameSample>], threshold: f64) -> Vec<usize> {
    frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .enumerate()
                .filter(|(i, a)| {
                    frame
                        .iter()
                        .enumerate()
                        .any(|(j, b)| *i != j && (a.pos - b.pos).norm() < threshold)
                })
                .count()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowTriple {
    /// Local density from the K-nearest-neighbor disk, ped/m^2.
    pub density: f64,
    /// Smoothed speed, m/s.
    pub speed: f64,
    /// density * speed, 1/m/s.
    pub flow: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowSamples {
    /// Flow values of agent-timesteps moving predominantly along x.
    pub x: Vec<f64>,
    /// Flow values of agent-timesteps moving predominantly along y.
    pub y: Vec<f64>,
    /// Every sample with a defined density, direction-agnostic; feeds the
    /// fundamental diagram.
    pub triples: Vec<FlowTriple>,
}

impl FlowSamples {
    pub fn append(&mut self, mut other: FlowSamples) {
        self.x.append(&mut other.x);
        self.y.append(&mut other.y);
        self.triples.append(&mut other.triples);
    }
}

/// Instantaneous flow per agent-timestep. A sample needs at least K other
/// concurrent agents for its density radius and is dropped when co-location
/// makes the radius zero. Direction sets use strict majority; exact ties
/// (including zero velocity) join neither set but still count as density
/// samples.
pub fn flow_samples(frames: &[Vec<FrameSample>], cfg: &MetricConfig) -> FlowSamples {
    let k = cfg.density_neighbors;
    let mut out = FlowSamples::default();
    for frame in frames {
        if frame.len() < k + 1 {
            continue;
        }
        for (i, a) in frame.iter().enumerate() {
            let others: Vec<nalgebra::Point2<f64>> = frame
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| b.pos)
                .collect();
            let Some(radius) = knn_radius(a.pos, &others, k) else { continue };
            let Some(density) = local_density(radius, k) else { continue };
            let speed = a.vel.norm();
            let flow = density * speed;
            out.triples.push(FlowTriple { density, speed, flow });
            if a.vel.x.abs() > a.vel.y.abs() {
                out.x.push(flow);
            } else if a.vel.y.abs() > a.vel.x.abs() {
                out.y.push(flow);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NnSamples {
    /// Distance to the nearest moving neighbor, m.
    pub distances: Vec<f64>,
    /// The same offsets rotated into the agent's heading frame (+x = agent's
    /// direction of travel).
    pub heading_offsets: Vec<Vector2<f64>>,
}

impl NnSamples {
    pub fn append(&mut self, mut other: NnSamples) {
        self.distances.append(&mut other.distances);
        self.heading_offsets.append(&mut other.heading_offsets);
    }
}

/// Nearest-moving-neighbor samples over moving agents (speed strictly above
/// the moving threshold), keeping neighbors within the search radius.
pub fn nn_samples(frames: &[Vec<FrameSample>], cfg: &MetricConfig) -> NnSamples {
    let eps = cfg.moving_speed_threshold_mps;
    let mut out = NnSamples::default();
    for frame in frames {
        let moving: Vec<&FrameSample> =
            frame.iter().filter(|s| s.vel.norm() > eps).collect();
        if moving.len() < 2 {
            continue;
        }
        for (i, a) in moving.iter().enumerate() {
            let mut best: Option<(f64, Vector2<f64>)> = None;
            for (j, b) in moving.iter().enumerate() {
                if i == j {
                    continue;
                }
                let offset = b.pos - a.pos;
                let d = offset.norm();
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, offset));
                }
            }
            let Some((d, offset)) = best else { continue };
            if d > cfg.nn_radius_m {
                continue;
            }
            out.distances.push(d);
            let heading = a.vel.y.atan2(a.vel.x);
            out.heading_offsets.push(rotate(offset, -heading));
        }
    }
    out
}

/// Normalized 2D histogram over (angle, radius) of heading-frame neighbor
/// offsets. `mass[a][r]` sums to 1 when any sample lands inside the radius.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarHistogram {
    pub angle_bins: usize,
    pub radius_bins: usize,
    pub max_radius: f64,
    /// Row-major [angle][radius] normalized mass.
    pub mass: Vec<Vec<f64>>,
}

pub fn nn_polar_histogram(
    offsets: &[Vector2<f64>],
    angle_bins: usize,
    radius_bins: usize,
    max_radius: f64,
) -> PolarHistogram {
    let mut counts = vec![vec![0u64; radius_bins]; angle_bins];
    let mut total = 0u64;
    for o in offsets {
        let r = o.norm();
        if r > max_radius || !r.is_finite() {
            continue;
        }
        let angle = o.y.atan2(o.x); // [-pi, pi]
        let a_idx = (((angle + std::f64::consts::PI) / std::f64::consts::TAU
            * angle_bins as f64)
            .floor() as usize)
            .min(angle_bins - 1);
        let r_idx = ((r / max_radius * radius_bins as f64).floor() as usize)
            .min(radius_bins - 1);
        counts[a_idx][r_idx] += 1;
        total += 1;
    }
    let mass = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    PolarHistogram { angle_bins, radius_bins, max_radius, mass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile on a sorted slice (the common "type 7"
/// estimator). `sorted` must be nonempty.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn quartiles(values: &mut Vec<f64>) -> Quartiles {
    values.sort_by(f64::total_cmp);
    Quartiles {
        q1: quantile_sorted(values, 0.25),
        median: quantile_sorted(values, 0.5),
        q3: quantile_sorted(values, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdBin {
    pub density_center: f64,
    pub n_samples: usize,
    pub speed: Quartiles,
    pub flow: Quartiles,
}

/// Bin flow samples by density over [0, max_density) and summarize speed and
/// flow per bin. Samples at or beyond the maximum are dropped; empty bins are
/// omitted.
pub fn fundamental_diagram(
    triples: &[FlowTriple],
    max_density: f64,
    bins: usize,
) -> Vec<FdBin> {
    if bins == 0 || max_density <= 0.0 {
        return Vec::new();
    }
    let width = max_density / bins as f64;
    let mut speeds: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut flows: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for t in triples {
        if t.density < 0.0 || t.density >= max_density {
            continue;
        }
        let idx = ((t.density / width).floor() as usize).min(bins - 1);
        speeds[idx].push(t.speed);
        flows[idx].push(t.flow);
    }
    (0..bins)
        .filter(|&i| !speeds[i].is_empty())
        .map(|i| FdBin {
            density_center: (i as f64 + 0.5) * width,
            n_samples: speeds[i].len(),
            speed: quartiles(&mut speeds[i].clone()),
            flow: quartiles(&mut flows[i].clone()),
        })
        .collect()
}

/// Fruin level of service for a local density. A density exactly on a
/// boundary takes the more crowded grade.
pub fn classify_los(density: f64, cfg: &LosConfig) -> char {
    for (i, bound) in cfg.thresholds.iter().enumerate() {
        if density < *bound {
            return (b'A' + i as u8) as char;
        }
    }
    'F'
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Point2;

    fn sample(x: f64, y: f64, vx: f64, vy: f64) -> FrameSample {
        FrameSample { agent: 0, pos: Point2::new(x, y), vel: Vector2::new(vx, vy) }
    }

    #[test]
    fn collision_counts_flag_both_members_of_a_close_pair() {
        let frames = vec![
            vec![sample(0.0, 0.0, 0.0, 0.0), sample(0.05, 0.0, 0.0, 0.0)],
            vec![sample(0.0, 0.0, 0.0, 0.0), sample(0.5, 0.0, 0.0, 0.0)],
            vec![],
        ];
        assert_eq!(collision_counts(&frames, 0.1), vec![2, 0, 0]);
    }

    #[test]
    fn collision_threshold_is_strict() {
        let frames = vec![vec![sample(0.0, 0.0, 0.0, 0.0), sample(0.1, 0.0, 0.0, 0.0)]];
        assert_eq!(collision_counts(&frames, 0.1), vec![0]);
        let frames = vec![vec![sample(0.0, 0.0, 0.0, 0.0), sample(0.0999999, 0.0, 0.0, 0.0)]];
        assert_eq!(collision_counts(&frames, 0.1), vec![2]);
    }

    #[test]
    fn flow_line_of_five_has_exact_hand_computed_values() {
        // Five agents on a line, 1 m apart, walking +x at 1 m/s. The 4th-NN
        // radii are 4, 3, 2, 3, 4.
        let frame: Vec<FrameSample> =
            (0..5).map(|i| sample(i as f64, 0.0, 1.0, 0.0)).collect();
        let got = flow_samples(&[frame], &MetricConfig::default());
        assert_eq!(got.y.len(), 0);
        assert_eq!(got.x.len(), 5);
        let expect: Vec<f64> = [4.0, 3.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|r| 4.0 / (std::f64::consts::PI * r * r))
            .collect();
        for (g, e) in got.x.iter().zip(&expect) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
        assert_eq!(got.triples.len(), 5);
        for (t, e) in got.triples.iter().zip(&expect) {
            assert_abs_diff_eq!(t.flow, *e, epsilon = 1e-12);
            assert_abs_diff_eq!(t.speed, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn flow_needs_five_concurrent_agents() {
        let frame: Vec<FrameSample> =
            (0..4).map(|i| sample(i as f64, 0.0, 1.0, 0.0)).collect();
        let got = flow_samples(&[frame], &MetricConfig::default());
        assert!(got.triples.is_empty());
        let frame: Vec<FrameSample> =
            (0..5).map(|i| sample(i as f64, 0.0, 1.0, 0.0)).collect();
        assert_eq!(flow_samples(&[frame], &MetricConfig::default()).triples.len(), 5);
    }

    #[test]
    fn flow_excludes_directional_ties_and_colocated_radii() {
        // Diagonal motion |vx| == |vy| joins neither direction but remains a
        // density sample.
        let mut frame: Vec<FrameSample> =
            (0..5).map(|i| sample(i as f64, 0.0, 1.0, 1.0)).collect();
        let got = flow_samples(&[frame.clone()], &MetricConfig::default());
        assert!(got.x.is_empty() && got.y.is_empty());
        assert_eq!(got.triples.len(), 5);
        // An agent whose four nearest neighbors all sit on its own position
        // has an undefined density and is skipped.
        for s in frame.iter_mut().take(5) {
            s.pos = Point2::new(0.0, 0.0);
        }
        let got = flow_samples(&[frame], &MetricConfig::default());
        assert!(got.triples.is_empty());
    }

    #[test]
    fn nn_uses_moving_agents_only_with_strict_speed_gate() {
        let frames = vec![vec![
            sample(0.0, 0.0, 1.0, 0.0),
            sample(0.6, 0.0, 1.0, 0.0),
            // Exactly at the moving threshold: excluded.
            sample(0.2, 0.0, 0.1, 0.0),
            // Stationary: excluded as both source and neighbor.
            sample(0.1, 0.0, 0.0, 0.0),
        ]];
        let got = nn_samples(&frames, &MetricConfig::default());
        assert_eq!(got.distances.len(), 2);
        for d in &got.distances {
            assert_abs_diff_eq!(*d, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn nn_radius_is_inclusive() {
        let cfg = MetricConfig::default();
        let at = |d: f64| {
            let frames =
                vec![vec![sample(0.0, 0.0, 1.0, 0.0), sample(d, 0.0, 1.0, 0.0)]];
            nn_samples(&frames, &cfg).distances.len()
        };
        assert_eq!(at(10.0), 2);
        assert_eq!(at(10.000001), 0);
    }

    #[test]
    fn heading_frame_puts_side_by_side_walkers_at_ninety_degrees() {
        // Both walk +y; neighbors sit to each side in the heading frame.
        let frames = vec![vec![
            sample(0.0, 0.0, 0.0, 1.0),
            sample(0.8, 0.0, 0.0, 1.0),
        ]];
        let got = nn_samples(&frames, &MetricConfig::default());
        // Agent 0's neighbor is at +0.8 x world; rotated by -90 degrees this
        // lands at (0, -0.8): to its right.
        assert_abs_diff_eq!(got.heading_offsets[0].x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.heading_offsets[0].y, -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(got.heading_offsets[1].y, 0.8, epsilon = 1e-12);

        let hist = nn_polar_histogram(&got.heading_offsets, 24, 10, 10.0);
        let total: f64 = hist.mass.iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        // -90 degrees -> bin 6 of 24; +90 degrees -> bin 18; radius 0.8 ->
        // bin 0 of [0, 10).
        assert_abs_diff_eq!(hist.mass[6][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hist.mass[18][0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_offsets_build_a_zero_histogram() {
        let hist = nn_polar_histogram(&[], 8, 4, 10.0);
        assert!(hist.mass.iter().flatten().all(|m| *m == 0.0));
    }

    #[test]
    fn quartiles_use_linear_interpolation() {
        let q = quartiles(&mut vec![4.0, 1.0, 3.0, 2.0]);
        assert_abs_diff_eq!(q.q1, 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(q.median, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q.q3, 3.25, epsilon = 1e-12);
        let single = quartiles(&mut vec![7.0]);
        assert_eq!(single.median, 7.0);
        assert_eq!(single.q1, 7.0);
    }

    #[test]
    fn fundamental_diagram_bins_drop_empty_and_out_of_range() {
        let triples = vec![
            FlowTriple { density: 0.25, speed: 1.3, flow: 0.325 },
            FlowTriple { density: 0.30, speed: 1.1, flow: 0.33 },
            FlowTriple { density: 4.75, speed: 0.2, flow: 0.95 },
            // At the maximum: dropped.
            FlowTriple { density: 5.0, speed: 0.1, flow: 0.5 },
        ];
        let bins = fundamental_diagram(&triples, 5.0, 10);
        assert_eq!(bins.len(), 2);
        assert_abs_diff_eq!(bins[0].density_center, 0.25, epsilon = 1e-12);
        assert_eq!(bins[0].n_samples, 2);
        assert_abs_diff_eq!(bins[0].speed.median, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(bins[1].density_center, 4.75, epsilon = 1e-12);
        assert_eq!(bins[1].n_samples, 1);
    }

    #[test]
    fn los_grades_with_upper_boundary_convention() {
        let cfg = LosConfig::default();
        assert_eq!(classify_los(0.5, &cfg), 'A');
        assert_eq!(classify_los(2.0, &cfg), 'D');
        assert_eq!(classify_los(0.83, &cfg), 'B');
        assert_eq!(classify_los(1.08, &cfg), 'C');
        assert_eq!(classify_los(1.79, &cfg), 'D');
        assert_eq!(classify_los(3.59, &cfg), 'E');
        assert_eq!(classify_los(5.38, &cfg), 'F');
        assert_eq!(classify_los(100.0, &cfg), 'F');
        assert_eq!(classify_los(0.8299999, &cfg), 'A');
    }
}
