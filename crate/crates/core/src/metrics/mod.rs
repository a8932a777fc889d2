//! The twelve-metric realism suite. Generated scenes are compared against a
//! ground-truth scene with distributional distances (comparison mode) or
//! summarized on their own (absolute mode).
//!
//! Distribution distances use 1-D EMD; sequence distances use DTW. Per-agent
//! quantities come from the fixed-interval smoother; per-frame positions stay
//! raw so social metrics see what the tracker saw.

mod report;
mod social;

use std::collections::BTreeMap;

use nalgebra::{Point2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use report::{Diagnostics, MetricReport, Mode};
pub use social::{
    classify_los, collision_counts, flow_samples, fundamental_diagram, nn_polar_histogram,
    nn_samples, FdBin, FlowSamples, FlowTriple, NnSamples, PolarHistogram, Quartiles,
};

use crate::config::Config;
use crate::kinematics::{kalman_smooth, summarize, KinematicsError, SmoothedTrajectory};
use crate::metricspace::{dtw_banded, emd_1d, kde_mode};
use crate::trajdata::{accumulation_check, KinematicSummary, Scene};

/// Mean geometric confidence at or below this is flagged: the scale sits just
/// above the model's "no idea" floor of 1.
const GEO_CONF_LOW_BOUND: f64 = 1.05;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("comparison mode requires a ground-truth scene")]
    NeedGroundTruth,
    #[error("absolute mode takes no ground-truth scene")]
    UnexpectedGroundTruth,
    #[error("no generated scenes supplied")]
    NoScenes,
    #[error("{0} input has no agents")]
    EmptyScene(&'static str),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One agent's state at one frame: raw position, smoothed velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSample {
    /// Index into the scene's trajectory list.
    pub agent: usize,
    pub pos: Point2<f64>,
    pub vel: Vector2<f64>,
}

/// A scene with its derived per-agent and per-frame state.
#[derive(Debug, Clone)]
pub struct SceneAnalysis {
    pub scene: Scene,
    pub smoothed: Vec<SmoothedTrajectory>,
    pub summaries: Vec<KinematicSummary>,
    /// Active agents per frame, for every frame in the scene span.
    pub frames: Vec<Vec<FrameSample>>,
    /// Agents with a single detection (no speed; zeros contributed).
    pub single_detection: usize,
    /// Agents with fewer than three detections (no acceleration).
    pub no_acceleration: usize,
}

pub fn analyze_scene(scene: &Scene, cfg: &Config) -> Result<SceneAnalysis, MetricsError> {
    let fps = scene.fps();
    let mut smoothed = Vec::with_capacity(scene.agent_count());
    let mut summaries = Vec::with_capacity(scene.agent_count());
    let mut single_detection = 0;
    let mut no_acceleration = 0;
    for traj in scene.trajectories() {
        let s = kalman_smooth(traj, fps, &cfg.smoothing)?;
        summaries.push(summarize(traj, &s, fps, cfg.metrics.stationary_threshold_m));
        if traj.len() < 2 {
            single_detection += 1;
        }
        if traj.len() < 3 {
            no_acceleration += 1;
        }
        smoothed.push(s);
    }
    let mut frames: Vec<Vec<FrameSample>> = vec![Vec::new(); scene.frame_count()];
    for (idx, traj) in scene.trajectories().iter().enumerate() {
        for (k, pos) in traj.positions.iter().enumerate() {
            frames[traj.start_frame + k].push(FrameSample {
                agent: idx,
                pos: *pos,
                vel: smoothed[idx].velocities[k],
            });
        }
    }
    Ok(SceneAnalysis {
        scene: scene.clone(),
        smoothed,
        summaries,
        frames,
        single_detection,
        no_acceleration,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub gen: Vec<SceneAnalysis>,
    pub gt: Option<SceneAnalysis>,
}

/// Resample a position sequence from one frame rate to another by linear
/// interpolation, preserving the start time and total duration.
pub fn resample_positions(
    positions: &[Point2<f64>],
    from_fps: f64,
    to_fps: f64,
) -> Vec<Point2<f64>> {
    if positions.len() < 2 {
        return positions.to_vec();
    }
    let duration = (positions.len() - 1) as f64 / from_fps;
    let n_out = ((duration * to_fps).floor() as usize).max(1) + 1;
    (0..n_out)
        .map(|j| {
            let s = (j as f64 / to_fps * from_fps).min((positions.len() - 1) as f64);
            let i = (s.floor() as usize).min(positions.len() - 2);
            let frac = s - i as f64;
            Point2::from(positions[i].coords * (1.0 - frac) + positions[i + 1].coords * frac)
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64], m: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// All-pairs DTW costs between two trajectory sets, rows = `a`, cols = `b`.
fn dtw_matrix(a: &[Vec<Point2<f64>>], b: &[Vec<Point2<f64>>], band: Option<usize>) -> Vec<Vec<f64>> {
    a.par_iter()
        .map(|ta| b.iter().map(|tb| dtw_banded(ta, tb, band)).collect())
        .collect()
}

/// Mean over rows of the row minimum.
fn mean_min_rows(matrix: &[Vec<f64>]) -> f64 {
    let sums: f64 = matrix
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    sums / matrix.len() as f64
}

/// Count of distinct column indices that are the argmin of some row, ties to
/// the lowest index.
fn unique_matches_rows(matrix: &[Vec<f64>]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for row in matrix {
        let mut best = 0usize;
        for (j, v) in row.iter().enumerate() {
            if *v < row[best] {
                best = j;
            }
        }
        seen.insert(best);
    }
    seen.len()
}

struct PooledAgents {
    speeds: Vec<f64>,
    accels: Vec<f64>,
    path_lengths: Vec<f64>,
    stationary: Vec<f64>,
    mot_means: Option<Vec<f64>>,
    geo_means: Option<Vec<f64>>,
    total_detections: usize,
}

fn pool_agents(analyses: &[SceneAnalysis]) -> PooledAgents {
    let mut speeds = Vec::new();
    let mut accels = Vec::new();
    let mut path_lengths = Vec::new();
    let mut stationary = Vec::new();
    let mut mot_means = Some(Vec::new());
    let mut geo_means = Some(Vec::new());
    let mut total_detections = 0;
    for a in analyses {
        for (traj, s) in a.scene.trajectories().iter().zip(&a.summaries) {
            speeds.push(s.mean_speed);
            accels.push(s.mean_accel);
            path_lengths.push(s.path_length);
            stationary.push(if s.is_stationary { 1.0 } else { 0.0 });
            total_detections += traj.len();
            match (&mut mot_means, &traj.mot_conf) {
                (Some(v), Some(conf)) => v.push(mean(conf)),
                (slot, _) => *slot = None,
            }
            match (&mut geo_means, &traj.geo_conf) {
                (Some(v), Some(conf)) => v.push(mean(conf)),
                (slot, _) => *slot = None,
            }
        }
    }
    PooledAgents {
        speeds,
        accels,
        path_lengths,
        stationary,
        mot_means,
        geo_means,
        total_detections,
    }
}

/// Raw trajectory position lists pooled across scenes, resampled to
/// `target_fps` where a scene runs at a different rate.
fn pooled_sequences(
    analyses: &[SceneAnalysis],
    target_fps: f64,
    resampled: &mut bool,
) -> Vec<Vec<Point2<f64>>> {
    let mut out = Vec::new();
    for a in analyses {
        let fps = a.scene.fps();
        for traj in a.scene.trajectories() {
            if fps == target_fps {
                out.push(traj.positions.clone());
            } else {
                *resampled = true;
                out.push(resample_positions(&traj.positions, fps, target_fps));
            }
        }
    }
    out
}

/// Run the full metric suite.
///
/// Comparison mode requires `gt`; absolute mode forbids it. Multiple
/// generated scenes are pooled: agent statistics union their agents, frame
/// statistics concatenate their frames.
pub fn evaluate(
    gen: &[Scene],
    gt: Option<&Scene>,
    mode: Mode,
    cfg: &Config,
) -> Result<Evaluation, MetricsError> {
    match (mode, gt.is_some()) {
        (Mode::I2V, false) => return Err(MetricsError::NeedGroundTruth),
        (Mode::T2V, true) => return Err(MetricsError::UnexpectedGroundTruth),
        _ => {}
    }
    if gen.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    let gen_analyses: Vec<SceneAnalysis> = gen
        .iter()
        .map(|s| analyze_scene(s, cfg))
        .collect::<Result<_, _>>()?;
    let n_gen_agents: usize = gen_analyses.iter().map(|a| a.scene.agent_count()).sum();
    if n_gen_agents == 0 {
        return Err(MetricsError::EmptyScene("generated"));
    }
    let gt_analysis = match gt {
        Some(s) => {
            if s.agent_count() == 0 {
                return Err(MetricsError::EmptyScene("ground-truth"));
            }
            Some(analyze_scene(s, cfg)?)
        }
        None => None,
    };

    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    let mut diag = Diagnostics {
        accumulation_met: accumulation_check(gen, &cfg.accumulation),
        n_gen_scenes: gen.len(),
        n_gen_agents,
        n_gt_agents: gt.map(|s| s.agent_count()),
        gen_agents_single_detection: gen_analyses.iter().map(|a| a.single_detection).sum(),
        gen_agents_no_acceleration: gen_analyses.iter().map(|a| a.no_acceleration).sum(),
        ..Diagnostics::default()
    };
    let absent = |map: &mut BTreeMap<String, String>, name: &str, why: &str| {
        map.insert(name.to_string(), why.to_string());
    };

    let pooled = pool_agents(&gen_analyses);
    let gen_counts: Vec<f64> = gen_analyses
        .iter()
        .flat_map(|a| a.frames.iter().map(|f| f.len() as f64))
        .collect();
    let gen_collisions: Vec<usize> = gen_analyses
        .iter()
        .flat_map(|a| collision_counts(&a.frames, cfg.metrics.collision_threshold_m))
        .collect();
    let mut gen_flow = FlowSamples::default();
    let mut gen_nn = NnSamples::default();
    for a in &gen_analyses {
        gen_flow.append(flow_samples(&a.frames, &cfg.metrics));
        gen_nn.append(nn_samples(&a.frames, &cfg.metrics));
    }
    diag.flow_samples_gen = Some(gen_flow.triples.len());
    diag.nn_samples_gen = Some(gen_nn.distances.len());

    // Ambient-density summary over the generated pool.
    if !gen_flow.triples.is_empty() {
        let d = mean(&gen_flow.triples.iter().map(|t| t.density).collect::<Vec<_>>());
        diag.mean_density_gen = Some(d);
        diag.los_gen = Some(classify_los(d, &cfg.los).to_string());
    }
    // Walking-speed summary over non-stationary agents.
    let walking: Vec<f64> = gen_analyses
        .iter()
        .flat_map(|a| a.summaries.iter())
        .filter(|s| !s.is_stationary)
        .map(|s| s.mean_speed)
        .collect();
    if !walking.is_empty() {
        let m = mean(&walking);
        diag.walking_speed_mean_mps = Some(m);
        diag.walking_speed_std_mps = Some(std_dev(&walking, m));
    }

    match mode {
        Mode::I2V => {
            let gt_a = gt_analysis.as_ref().expect("checked above");
            let gt_pool = pool_agents(std::slice::from_ref(gt_a));
            let gt_counts: Vec<f64> =
                gt_a.frames.iter().map(|f| f.len() as f64).collect();
            let gt_collisions = collision_counts(&gt_a.frames, cfg.metrics.collision_threshold_m);
            let gt_flow = flow_samples(&gt_a.frames, &cfg.metrics);
            let gt_nn = nn_samples(&gt_a.frames, &cfg.metrics);
            diag.flow_samples_gt = Some(gt_flow.triples.len());
            diag.nn_samples_gt = Some(gt_nn.distances.len());

            let emd = |a: &[f64], b: &[f64]| emd_1d(a, b).expect("nonempty by construction");
            values.insert("velocity".into(), emd(&pooled.speeds, &gt_pool.speeds));
            values.insert("acceleration".into(), emd(&pooled.accels, &gt_pool.accels));
            values.insert("distance".into(), emd(&pooled.path_lengths, &gt_pool.path_lengths));
            values.insert("stationary".into(), emd(&pooled.stationary, &gt_pool.stationary));
            values.insert("population".into(), emd(&gen_counts, &gt_counts));
            let genc: Vec<f64> = gen_collisions.iter().map(|c| *c as f64).collect();
            let gtc: Vec<f64> = gt_collisions.iter().map(|c| *c as f64).collect();
            values.insert("collision".into(), emd(&genc, &gtc));

            // Directional flow: a direction contributes only when both sides
            // have samples in it.
            let x_ok = !gen_flow.x.is_empty() && !gt_flow.x.is_empty();
            let y_ok = !gen_flow.y.is_empty() && !gt_flow.y.is_empty();
            match (x_ok, y_ok) {
                (true, true) => {
                    let fx = emd(&gen_flow.x, &gt_flow.x);
                    let fy = emd(&gen_flow.y, &gt_flow.y);
                    values.insert("flow".into(), 0.5 * (fx + fy));
                }
                (true, false) => {
                    values.insert("flow".into(), emd(&gen_flow.x, &gt_flow.x));
                    diag.flow_single_direction = Some("x".into());
                }
                (false, true) => {
                    values.insert("flow".into(), emd(&gen_flow.y, &gt_flow.y));
                    diag.flow_single_direction = Some("y".into());
                }
                (false, false) => {
                    absent(
                        &mut diag.absent,
                        "flow",
                        "no directional flow samples shared by generated and ground-truth scenes",
                    );
                }
            }

            if gen_nn.distances.is_empty() || gt_nn.distances.is_empty() {
                absent(
                    &mut diag.absent,
                    "nn_dist",
                    "no moving agents with a moving neighbor in range on one side",
                );
            } else {
                values.insert("nn_dist".into(), emd(&gen_nn.distances, &gt_nn.distances));
            }

            // Sequence comparisons run at the ground-truth frame rate.
            let gt_fps = gt_a.scene.fps();
            let mut resampled = false;
            let gen_seqs = pooled_sequences(&gen_analyses, gt_fps, &mut resampled);
            let gt_seqs: Vec<Vec<Point2<f64>>> = gt_a
                .scene
                .trajectories()
                .iter()
                .map(|t| t.positions.clone())
                .collect();
            if resampled {
                diag.resampled_gen_to_fps = Some(gt_fps);
            }
            let forward = dtw_matrix(&gen_seqs, &gt_seqs, cfg.metrics.dtw_band);
            // The reverse view reuses the same costs transposed.
            let backward: Vec<Vec<f64>> = (0..gt_seqs.len())
                .map(|j| (0..gen_seqs.len()).map(|i| forward[i][j]).collect())
                .collect();
            let path_error =
                (mean_min_rows(&forward) + mean_min_rows(&backward)) / (2.0 * gt_fps);
            values.insert("path_error".into(), path_error);
            let diversity = 0.5
                * (unique_matches_rows(&forward) as f64 / gt_seqs.len() as f64
                    + unique_matches_rows(&backward) as f64 / gen_seqs.len() as f64);
            values.insert("path_diversity".into(), diversity);

            match &pooled.mot_means {
                Some(m) => {
                    values.insert("mot_conf".into(), mean(m));
                }
                None => absent(
                    &mut diag.absent,
                    "mot_conf",
                    "tracker confidence not attached to every generated agent",
                ),
            }
        }
        Mode::T2V => {
            values.insert("velocity".into(), mean(&pooled.speeds));
            values.insert("acceleration".into(), mean(&pooled.accels));
            values.insert("distance".into(), mean(&pooled.path_lengths));
            values.insert("stationary".into(), mean(&pooled.stationary));
            values.insert("population".into(), mean(&gen_counts));
            let total_coll: usize = gen_collisions.iter().sum();
            values.insert(
                "collision".into(),
                100.0 * total_coll as f64 / pooled.total_detections as f64,
            );

            match (!gen_flow.x.is_empty(), !gen_flow.y.is_empty()) {
                (true, true) => {
                    values.insert(
                        "flow".into(),
                        0.5 * (mean(&gen_flow.x) + mean(&gen_flow.y)),
                    );
                }
                (true, false) => {
                    values.insert("flow".into(), mean(&gen_flow.x));
                    diag.flow_single_direction = Some("x".into());
                }
                (false, true) => {
                    values.insert("flow".into(), mean(&gen_flow.y));
                    diag.flow_single_direction = Some("y".into());
                }
                (false, false) => {
                    absent(&mut diag.absent, "flow", "no directional flow samples");
                }
            }

            match kde_mode(&gen_nn.distances, cfg.metrics.kde_bandwidth) {
                Some(m) => {
                    values.insert("nn_dist".into(), m);
                }
                None => absent(
                    &mut diag.absent,
                    "nn_dist",
                    "no moving agents with a moving neighbor in range",
                ),
            }

            // Internal diversity over pooled trajectories, optionally on a
            // seeded subsample. Mixed frame rates are unified to the first
            // scene's rate.
            let base_fps = gen_analyses[0].scene.fps();
            let mut resampled = false;
            let mut seqs = pooled_sequences(&gen_analyses, base_fps, &mut resampled);
            if resampled {
                diag.resampled_gen_to_fps = Some(base_fps);
            }
            if seqs.len() < 2 {
                absent(
                    &mut diag.absent,
                    "internal_diversity",
                    "fewer than two generated trajectories",
                );
            } else {
                if let Some(cap) = cfg.metrics.internal_diversity_subsample {
                    if seqs.len() > cap {
                        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
                        let mut idx =
                            rand::seq::index::sample(&mut rng, seqs.len(), cap).into_vec();
                        idx.sort_unstable();
                        seqs = idx.into_iter().map(|i| std::mem::take(&mut seqs[i])).collect();
                        diag.internal_diversity_subsample = Some(cap);
                    }
                }
                let n = seqs.len();
                let pair_sums: f64 = (0..n - 1)
                    .into_par_iter()
                    .map(|i| {
                        (i + 1..n)
                            .map(|j| dtw_banded(&seqs[i], &seqs[j], cfg.metrics.dtw_band))
                            .sum::<f64>()
                    })
                    .sum();
                let pairs = (n * (n - 1) / 2) as f64;
                values.insert("internal_diversity".into(), pair_sums / pairs / base_fps);
            }

            match &pooled.mot_means {
                Some(m) => {
                    values.insert("mot_conf".into(), mean(m));
                }
                None => absent(
                    &mut diag.absent,
                    "mot_conf",
                    "tracker confidence not attached to every generated agent",
                ),
            }
            match &pooled.geo_means {
                Some(g) => {
                    let m = mean(g);
                    values.insert("geo_conf".into(), m);
                    diag.geo_conf_low = Some(m <= GEO_CONF_LOW_BOUND);
                }
                None => absent(
                    &mut diag.absent,
                    "geo_conf",
                    "geometric confidence not attached to every generated agent",
                ),
            }
        }
    }

    debug_assert!(values.values().all(|v| v.is_finite()));
    let report = MetricReport {
        mode,
        seed: cfg.seed,
        values,
        diagnostics: diag,
        config: cfg.clone(),
    };
    Ok(Evaluation { report, gen: gen_analyses, gt: gt_analysis })
}
