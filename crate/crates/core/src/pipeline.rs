//! End-to-end trajectory recovery.
//!
//! Two paths produce a metric [`Scene`] from tracker output:
//!
//! * image-to-video: a known homography maps ground-contact pixels straight
//!   to world coordinates;
//! * text-to-video: per-frame cameras and relative depth are aligned to a
//!   metric depth reference, validated against human stature, and
//!   un-projected onto a fitted ground plane.
//!
//! Both drop unmappable detections at a track's edges and refuse to bridge
//! interior gaps: a hole in the middle of a track would need interpolation,
//! and downstream kinematics assume contiguous observations.

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3};
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::geometry::{
    anthropometric_correction, estimate_scale, fit_ground_plane, person_height, staticity_check,
    unproject_point, CameraFrame, DepthRaster, DepthSource, GeometryError, HeightCorrection,
    Homography, ScaleEstimate, ScaleOutcome, ScaleRejection, StaticityReport,
};
use crate::trajdata::{Detection, Scene, TrackletSet, TrajError, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no frame has both a metric depth raster and a relative depth raster")]
    NoKeyframes,
    #[error("no reconstructable agents after filtering")]
    NoAgents,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Traj(#[from] TrajError),
}

/// Stage-specific seed so RANSAC draws differ across frames while staying a
/// pure function of the run seed.
fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One mapped detection: ground position plus its confidences.
type Sample = (Point2<f64>, f64, Option<f64>);

enum Assembled {
    Agent {
        start_frame: usize,
        positions: Vec<Point2<f64>>,
        mot: Vec<f64>,
        geo: Option<Vec<f64>>,
        edge_dropped: usize,
    },
    /// A drop strictly inside the track, or non-consecutive frames.
    InteriorGap,
    /// No detection mapped at all.
    Unmapped,
}

/// Trim unmapped detections off the ends of a track and require what remains
/// to be gap-free. `entries` must be sorted by frame.
fn assemble_track(entries: &[(usize, Option<Sample>)]) -> Assembled {
    let Some(first) = entries.iter().position(|(_, s)| s.is_some()) else {
        return Assembled::Unmapped;
    };
    let last = entries.iter().rposition(|(_, s)| s.is_some()).expect("some element exists");
    let edge_dropped = first + (entries.len() - 1 - last);
    let mid = &entries[first..=last];
    let contiguous = mid.windows(2).all(|w| w[1].0 == w[0].0 + 1);
    if !contiguous || mid.iter().any(|(_, s)| s.is_none()) {
        return Assembled::InteriorGap;
    }
    let samples: Vec<Sample> = mid.iter().map(|(_, s)| s.expect("checked")).collect();
    Assembled::Agent {
        start_frame: mid[0].0,
        positions: samples.iter().map(|s| s.0).collect(),
        mot: samples.iter().map(|s| s.1).collect(),
        geo: samples.iter().map(|s| s.2).collect(),
        edge_dropped,
    }
}

fn group_by_track(dets: &[Detection]) -> BTreeMap<i64, Vec<&Detection>> {
    let mut out: BTreeMap<i64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        out.entry(d.track_id).or_default().push(d);
    }
    for track in out.values_mut() {
        track.sort_by_key(|d| d.frame);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProjectionDiagnostics {
    pub n_agents_in: usize,
    pub n_agents_out: usize,
    /// Detections trimmed off track ends because they mapped to infinity.
    pub edge_detections_dropped: usize,
    pub agents_dropped_interior_gap: usize,
    pub agents_dropped_unmapped: usize,
}

/// Map every ground-contact pixel through the homography and assemble the
/// surviving tracks into a scene.
pub fn project_tracklets_to_scene(
    tracklets: &TrackletSet,
    homography: &Homography,
    fps: f64,
) -> Result<(Scene, ProjectionDiagnostics), PipelineError> {
    let tracks = group_by_track(&tracklets.detections);
    let mut diag = ProjectionDiagnostics { n_agents_in: tracks.len(), ..Default::default() };
    let mut trajectories = Vec::new();
    for (track_id, dets) in tracks {
        let entries: Vec<(usize, Option<Sample>)> = dets
            .iter()
            .map(|d| {
                let (u, v) = d.ground_contact();
                (d.frame, homography.project(u, v).map(|p| (p, d.confidence, None)))
            })
            .collect();
        match assemble_track(&entries) {
            Assembled::Agent { start_frame, positions, mot, edge_dropped, .. } => {
                diag.edge_detections_dropped += edge_dropped;
                trajectories
                    .push(Trajectory::new(track_id, start_frame, positions)?.with_mot_conf(mot)?);
            }
            Assembled::InteriorGap => diag.agents_dropped_interior_gap += 1,
            Assembled::Unmapped => diag.agents_dropped_unmapped += 1,
        }
    }
    if trajectories.is_empty() {
        return Err(PipelineError::NoAgents);
    }
    diag.n_agents_out = trajectories.len();
    let scene = Scene::new(trajectories, fps, Some(tracklets.frame_span()))?;
    Ok((scene, diag))
}

/// A keyframe's accepted scale, tagged with its frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyframeScale {
    pub frame: usize,
    #[serde(flatten)]
    pub estimate: ScaleEstimate,
}

/// Why a whole video was discarded rather than reconstructed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum RejectionRecord {
    /// A keyframe failed the depth-alignment thresholds.
    ScaleAlignment {
        frame: usize,
        #[serde(flatten)]
        rejection: ScaleRejection,
    },
    /// The stature screen could not produce a positive mean height.
    HeightPrior { mean_height_m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionDiagnostics {
    pub keyframes: Vec<KeyframeScale>,
    /// Mean per-frame scale after the stature correction.
    pub lambda_mean: f64,
    pub height_correction: HeightCorrection,
    /// Informational: generated videos are allowed to move the camera.
    pub staticity: Option<StaticityReport>,
    pub plane_inlier_fraction: f64,
    pub n_agents_in: usize,
    pub n_agents_out: usize,
    pub detections_in: usize,
    pub detections_dropped_no_camera: usize,
    pub detections_dropped_no_depth: usize,
    pub edge_detections_dropped: usize,
    pub agents_dropped_interior_gap: usize,
    pub agents_dropped_unmapped: usize,
}

#[derive(Debug, Clone)]
pub enum ReconstructionOutcome {
    Reconstructed { scene: Scene, diagnostics: ReconstructionDiagnostics },
    Rejected(RejectionRecord),
}

/// Piecewise-linear scale over frames, clamped to the first and last
/// keyframe values. `pairs` is nonempty and sorted by frame.
fn interp_lambda(pairs: &[(usize, f64)], frame: usize) -> f64 {
    if frame <= pairs[0].0 {
        return pairs[0].1;
    }
    if frame >= pairs[pairs.len() - 1].0 {
        return pairs[pairs.len() - 1].1;
    }
    let hi = pairs.partition_point(|(f, _)| *f <= frame);
    let (f0, l0) = pairs[hi - 1];
    let (f1, l1) = pairs[hi];
    let t = (frame - f0) as f64 / (f1 - f0) as f64;
    l0 + (l1 - l0) * t
}

/// Recover a metric scene from tracker output, per-frame cameras, and depth.
///
/// Keyframes are the frames where the metric source has a raster; each gets
/// an independent robust scale estimate and any rejection discards the whole
/// video (a [`RejectionRecord`] is a valid outcome, not an error). Scales in
/// between are linearly interpolated. Estimated person heights screen the
/// scale against plausible stature before un-projection; ground contacts are
/// then lifted to 3D, a ground plane is fitted over all of them, and
/// trajectories live in that plane's 2D basis.
pub fn reconstruct_t2v(
    tracklets: &TrackletSet,
    cameras: &[CameraFrame],
    rel_depth: &mut dyn DepthSource,
    metric_depth: &mut dyn DepthSource,
    mut confidence: Option<&mut dyn DepthSource>,
    fps: f64,
    cfg: &Config,
) -> Result<ReconstructionOutcome, PipelineError> {
    let span = tracklets.frame_span();
    if span == 0 {
        return Err(PipelineError::NoAgents);
    }
    let cam_by_frame: BTreeMap<usize, &CameraFrame> =
        cameras.iter().map(|c| (c.frame, c)).collect();
    let mut rel: BTreeMap<usize, DepthRaster> = BTreeMap::new();
    for f in 0..span {
        if let Some(r) = rel_depth.depth(f)? {
            rel.insert(f, r);
        }
    }

    let mut keyframes: Vec<KeyframeScale> = Vec::new();
    for f in 0..span {
        let Some(metric) = metric_depth.depth(f)? else { continue };
        let Some(r) = rel.get(&f) else { continue };
        match estimate_scale(r, &metric, &cfg.scale, derive_seed(cfg.seed, f as u64 + 1))? {
            ScaleOutcome::Accepted(estimate) => {
                keyframes.push(KeyframeScale { frame: f, estimate })
            }
            ScaleOutcome::Rejected(rejection) => {
                return Ok(ReconstructionOutcome::Rejected(RejectionRecord::ScaleAlignment {
                    frame: f,
                    rejection,
                }));
            }
        }
    }
    if keyframes.is_empty() {
        return Err(PipelineError::NoKeyframes);
    }
    let raw_pairs: Vec<(usize, f64)> =
        keyframes.iter().map(|k| (k.frame, k.estimate.lambda)).collect();

    let fallback = cfg.scale.depth_fallback_radius_px;
    let mut heights = Vec::new();
    for det in &tracklets.detections {
        let (Some(cam), Some(r)) = (cam_by_frame.get(&det.frame), rel.get(&det.frame)) else {
            continue;
        };
        let lambda = interp_lambda(&raw_pairs, det.frame);
        if let Some(h) = person_height(cam, lambda, r, det, fallback) {
            heights.push(h);
        }
    }
    let height_correction = match anthropometric_correction(&heights, &cfg.anthropometric) {
        Ok(c) => c,
        Err(GeometryError::NonPositiveMeanHeight(mean_height_m)) => {
            return Ok(ReconstructionOutcome::Rejected(RejectionRecord::HeightPrior {
                mean_height_m,
            }));
        }
        Err(e) => return Err(e.into()),
    };
    for k in &mut keyframes {
        k.estimate.lambda *= height_correction.factor;
    }
    let pairs: Vec<(usize, f64)> =
        keyframes.iter().map(|k| (k.frame, k.estimate.lambda)).collect();
    let lambda_mean = pairs.iter().map(|(_, l)| l).sum::<f64>() / pairs.len() as f64;

    let staticity = (cameras.len() >= 2).then(|| {
        let mut sorted: Vec<CameraFrame> = cameras.to_vec();
        sorted.sort_by_key(|c| c.frame);
        staticity_check(&sorted, &cfg.staticity, lambda_mean)
    });

    let tracks = group_by_track(&tracklets.detections);
    let mut diag = ReconstructionDiagnostics {
        keyframes,
        lambda_mean,
        height_correction,
        staticity,
        plane_inlier_fraction: 0.0,
        n_agents_in: tracks.len(),
        n_agents_out: 0,
        detections_in: tracklets.detections.len(),
        detections_dropped_no_camera: 0,
        detections_dropped_no_depth: 0,
        edge_detections_dropped: 0,
        agents_dropped_interior_gap: 0,
        agents_dropped_unmapped: 0,
    };

    // Lift every mappable ground contact to 3D; the plane fit pools them all.
    let mut world_tracks: BTreeMap<i64, Vec<(usize, Option<(Point3<f64>, f64, Option<f64>)>)>> =
        BTreeMap::new();
    let mut world_points: Vec<Point3<f64>> = Vec::new();
    for (track_id, dets) in tracks {
        let mut entries = Vec::with_capacity(dets.len());
        for det in dets {
            let Some(cam) = cam_by_frame.get(&det.frame) else {
                diag.detections_dropped_no_camera += 1;
                entries.push((det.frame, None));
                continue;
            };
            let Some(r) = rel.get(&det.frame) else {
                diag.detections_dropped_no_depth += 1;
                entries.push((det.frame, None));
                continue;
            };
            let lambda = interp_lambda(&pairs, det.frame);
            let (u, v) = det.ground_contact();
            let world = unproject_point(cam, lambda, r, u, v, fallback);
            let geo = match &mut confidence {
                Some(source) => match source.depth(det.frame)? {
                    Some(raster) => raster.sample(u, v, fallback),
                    None => None,
                },
                None => None,
            };
            let sample = match (world, confidence.is_some(), geo) {
                (Some(p), false, _) => Some((p, det.confidence, None)),
                (Some(p), true, Some(g)) => Some((p, det.confidence, Some(g))),
                _ => {
                    diag.detections_dropped_no_depth += 1;
                    None
                }
            };
            if let Some((p, _, _)) = sample {
                world_points.push(p);
            }
            entries.push((det.frame, sample));
        }
        world_tracks.insert(track_id, entries);
    }

    let plane = fit_ground_plane(&world_points, &cfg.plane, derive_seed(cfg.seed, u64::MAX))?;
    diag.plane_inlier_fraction = plane.inlier_fraction;

    let mut trajectories = Vec::new();
    for (track_id, entries) in world_tracks {
        let flat: Vec<(usize, Option<Sample>)> = entries
            .into_iter()
            .map(|(f, s)| (f, s.map(|(p, mot, geo)| (plane.to_bev(&p), mot, geo))))
            .collect();
        match assemble_track(&flat) {
            Assembled::Agent { start_frame, positions, mot, geo, edge_dropped } => {
                diag.edge_detections_dropped += edge_dropped;
                let mut t =
                    Trajectory::new(track_id, start_frame, positions)?.with_mot_conf(mot)?;
                if let Some(geo) = geo {
                    t = t.with_geo_conf(geo)?;
                }
                trajectories.push(t);
            }
            Assembled::InteriorGap => diag.agents_dropped_interior_gap += 1,
            Assembled::Unmapped => diag.agents_dropped_unmapped += 1,
        }
    }
    if trajectories.is_empty() {
        return Err(PipelineError::NoAgents);
    }
    diag.n_agents_out = trajectories.len();
    let scene = Scene::new(trajectories, fps, Some(span))?;
    Ok(ReconstructionOutcome::Reconstructed { scene, diagnostics: diag })
}
