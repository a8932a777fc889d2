//! Scene and tracklet containers plus their on-disk formats.
//!
//! Two text formats are supported:
//!
//! * MOTChallenge tracklet CSV: `frame,id,left,top,width,height,conf,...`
//!   with 1-based frame numbers (converted to 0-based on ingestion) and at
//!   least seven fields per row.
//! * Scene CSV: `frame,agent_id,x_m,y_m` rows in meters with `# fps=<value>`
//!   (and optionally `# frames=<count>`) comment headers. Optional trailing
//!   `conf` and `geo_conf` columns carry per-detection confidences.
//!
//! Trajectories are frame-contiguous by contract: a gap in a track is a
//! validation error, never silently interpolated. Trackers are expected to
//! emit fresh ids after occlusion.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::Point2;
use serde::Serialize;
use thiserror::Error;

use crate::config::AccumulationConfig;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate detection for frame {frame}, track {track_id}")]
    DuplicateDetection { line: usize, frame: usize, track_id: i64 },
    #[error("line {line}: box has nonpositive size after clipping to the image")]
    DegenerateBox { line: usize },
    #[error("agent {agent_id}: duplicate frame {frame}")]
    DuplicateFrame { agent_id: i64, frame: usize },
    #[error("agent {agent_id}: gap between frames {prev} and {next}; tracks must be contiguous")]
    FrameGap { agent_id: i64, prev: usize, next: usize },
    #[error("agent {agent_id}: duplicate agent id")]
    DuplicateAgent { agent_id: i64 },
    #[error("agent {agent_id}: empty trajectory")]
    EmptyTrajectory { agent_id: i64 },
    #[error("agent {agent_id}: non-finite value at frame {frame}")]
    NonFinite { agent_id: i64, frame: usize },
    #[error("agent {agent_id}: confidence length {got} does not match {expected} positions")]
    ConfidenceLength { agent_id: i64, got: usize, expected: usize },
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("missing `# fps=` header")]
    MissingFps,
    #[error("declared frame count {declared} is below the last active frame {last}")]
    FrameCount { declared: usize, last: usize },
}

/// One agent's gap-free positions on the ground plane, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent_id: i64,
    /// Scene frame of `positions[0]`; frame k holds `positions[k - start_frame]`.
    pub start_frame: usize,
    pub positions: Vec<Point2<f64>>,
    /// Per-detection tracker confidence, if the source carried one.
    pub mot_conf: Option<Vec<f64>>,
    /// Per-detection geometric (depth) confidence, if the source carried one.
    pub geo_conf: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(
        agent_id: i64,
        start_frame: usize,
        positions: Vec<Point2<f64>>,
    ) -> Result<Self, TrajError> {
        if positions.is_empty() {
            return Err(TrajError::EmptyTrajectory { agent_id });
        }
        for (k, p) in positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(TrajError::NonFinite { agent_id, frame: start_frame + k });
            }
        }
        Ok(Trajectory { agent_id, start_frame, positions, mot_conf: None, geo_conf: None })
    }

    pub fn with_mot_conf(mut self, conf: Vec<f64>) -> Result<Self, TrajError> {
        if conf.len() != self.positions.len() {
            return Err(TrajError::ConfidenceLength {
                agent_id: self.agent_id,
                got: conf.len(),
                expected: self.positions.len(),
            });
        }
        self.mot_conf = Some(conf);
        Ok(self)
    }

    pub fn with_geo_conf(mut self, conf: Vec<f64>) -> Result<Self, TrajError> {
        if conf.len() != self.positions.len() {
            return Err(TrajError::ConfidenceLength {
                agent_id: self.agent_id,
                got: conf.len(),
                expected: self.positions.len(),
            });
        }
        self.geo_conf = Some(conf);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty position lists
    }

    /// Last frame the agent is active in (inclusive).
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.positions.len() - 1
    }

    pub fn position_at(&self, frame: usize) -> Option<Point2<f64>> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|k| self.positions.get(k))
            .copied()
    }

    /// Straight-line distance between the raw endpoints, m.
    pub fn displacement(&self) -> f64 {
        (self.positions[self.positions.len() - 1] - self.positions[0]).norm()
    }
}

/// A set of trajectories sharing one frame clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    trajectories: Vec<Trajectory>,
    fps: f64,
    frame_count: usize,
}

impl Scene {
    /// `frame_count: None` infers the span from the trajectories; an explicit
    /// count may extend past the last active frame but never truncate it.
    pub fn new(
        trajectories: Vec<Trajectory>,
        fps: f64,
        frame_count: Option<usize>,
    ) -> Result<Self, TrajError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(TrajError::BadFps(fps));
        }
        let mut seen = HashSet::new();
        for t in &trajectories {
            if !seen.insert(t.agent_id) {
                return Err(TrajError::DuplicateAgent { agent_id: t.agent_id });
            }
        }
        let span = trajectories.iter().map(|t| t.end_frame() + 1).max().unwrap_or(0);
        let frame_count = match frame_count {
            Some(k) if k < span => {
                return Err(TrajError::FrameCount { declared: k, last: span - 1 })
            }
            Some(k) => k,
            None => span,
        };
        Ok(Scene { trajectories, fps, frame_count })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn agent_count(&self) -> usize {
        self.trajectories.len()
    }

    /// Indices of trajectories active at `frame`, in storage order.
    pub fn active_at(&self, frame: usize) -> impl Iterator<Item = usize> + '_ {
        self.trajectories
            .iter()
            .enumerate()
            .filter(move |(_, t)| frame >= t.start_frame && frame <= t.end_frame())
            .map(|(i, _)| i)
    }
}

/// One tracker detection in pixel coordinates (0-based frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub track_id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub confidence: f64,
}

impl Detection {
    /// Assumed ground contact: bottom midpoint of the box.
    pub fn ground_contact(&self) -> (f64, f64) {
        (self.bb_left + self.bb_width / 2.0, self.bb_top + self.bb_height)
    }
}

/// Detections from one video, sorted by `(track_id, frame)`, with boxes
/// clipped to the image bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletSet {
    pub detections: Vec<Detection>,
    pub image_width: u32,
    pub image_height: u32,
}

impl TrackletSet {
    /// Per-agent ordered ground-contact pixels `(frame, u, v)`.
    pub fn ground_contact_points(&self) -> BTreeMap<i64, Vec<(usize, f64, f64)>> {
        let mut out: BTreeMap<i64, Vec<(usize, f64, f64)>> = BTreeMap::new();
        for d in &self.detections {
            let (u, v) = d.ground_contact();
            out.entry(d.track_id).or_default().push((d.frame, u, v));
        }
        out
    }

    /// Frame span implied by the detections (last frame + 1).
    pub fn frame_span(&self) -> usize {
        self.detections.iter().map(|d| d.frame + 1).max().unwrap_or(0)
    }
}

/// Parse MOTChallenge CSV. Frames are 1-based in the file; rows need at
/// least seven fields and extra fields are ignored.
pub fn parse_tracklets(
    text: &str,
    image_width: u32,
    image_height: u32,
) -> Result<TrackletSet, TrajError> {
    let mut detections = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(TrajError::Parse {
                line,
                msg: format!("expected at least 7 comma-separated fields, got {}", fields.len()),
            });
        }
        let frame_1based: i64 = fields[0]
            .parse()
            .map_err(|_| TrajError::Parse { line, msg: format!("bad frame `{}`", fields[0]) })?;
        if frame_1based < 1 {
            return Err(TrajError::Parse {
                line,
                msg: format!("frame numbers are 1-based, got {frame_1based}"),
            });
        }
        let track_id: i64 = fields[1]
            .parse()
            .map_err(|_| TrajError::Parse { line, msg: format!("bad track id `{}`", fields[1]) })?;
        let num = |i: usize, name: &str| -> Result<f64, TrajError> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| TrajError::Parse { line, msg: format!("bad {name} `{}`", fields[i]) })?;
            if !v.is_finite() {
                return Err(TrajError::Parse { line, msg: format!("non-finite {name}") });
            }
            Ok(v)
        };
        let left = num(2, "bb_left")?;
        let top = num(3, "bb_top")?;
        let width = num(4, "bb_width")?;
        let height = num(5, "bb_height")?;
        let confidence = num(6, "conf")?;
        if width <= 0.0 || height <= 0.0 {
            return Err(TrajError::Parse { line, msg: "box size must be positive".into() });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TrajError::Parse {
                line,
                msg: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        let frame = (frame_1based - 1) as usize;
        if !seen.insert((frame, track_id)) {
            return Err(TrajError::DuplicateDetection { line, frame, track_id });
        }
        // Clip to the image; a box entirely outside it is a data error.
        let (w, h) = (image_width as f64, image_height as f64);
        let right = (left + width).clamp(0.0, w);
        let bottom = (top + height).clamp(0.0, h);
        let left = left.clamp(0.0, w);
        let top = top.clamp(0.0, h);
        if right - left <= 0.0 || bottom - top <= 0.0 {
            return Err(TrajError::DegenerateBox { line });
        }
        detections.push(Detection {
            frame,
            track_id,
            bb_left: left,
            bb_top: top,
            bb_width: right - left,
            bb_height: bottom - top,
            confidence,
        });
    }
    detections.sort_by(|a, b| (a.track_id, a.frame).cmp(&(b.track_id, b.frame)));
    Ok(TrackletSet { detections, image_width, image_height })
}

/// Read a scene from its CSV text form.
pub fn read_scene(text: &str) -> Result<Scene, TrajError> {
    let mut fps: Option<f64> = None;
    let mut declared_frames: Option<usize> = None;
    let mut header_seen = false;
    let mut columns = 4usize;
    // agent -> rows (frame, x, y, conf, geo)
    let mut rows: BTreeMap<i64, Vec<(usize, f64, f64, Option<f64>, Option<f64>)>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        if let Some(comment) = row.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("fps=") {
                let v: f64 = v.trim().parse().map_err(|_| TrajError::Parse {
                    line,
                    msg: format!("bad fps value `{}`", v.trim()),
                })?;
                fps = Some(v);
            } else if let Some(v) = comment.strip_prefix("frames=") {
                let v: usize = v.trim().parse().map_err(|_| TrajError::Parse {
                    line,
                    msg: format!("bad frame count `{}`", v.trim()),
                })?;
                declared_frames = Some(v);
            }
            continue;
        }
        if !header_seen {
            columns = match row {
                "frame,agent_id,x_m,y_m" => 4,
                "frame,agent_id,x_m,y_m,conf" => 5,
                "frame,agent_id,x_m,y_m,conf,geo_conf" => 6,
                _ => {
                    return Err(TrajError::Parse {
                        line,
                        msg: format!("unrecognized header `{row}`"),
                    })
                }
            };
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != columns {
            return Err(TrajError::Parse {
                line,
                msg: format!("expected {columns} fields, got {}", fields.len()),
            });
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| TrajError::Parse { line, msg: format!("bad frame `{}`", fields[0]) })?;
        let agent: i64 = fields[1]
            .parse()
            .map_err(|_| TrajError::Parse { line, msg: format!("bad agent id `{}`", fields[1]) })?;
        let num = |i: usize, name: &str| -> Result<f64, TrajError> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| TrajError::Parse { line, msg: format!("bad {name} `{}`", fields[i]) })?;
            // "NaN" and "inf" parse as f64 but would poison every mean
            // downstream.
            if !v.is_finite() {
                return Err(TrajError::Parse {
                    line,
                    msg: format!("non-finite {name} `{}`", fields[i]),
                });
            }
            Ok(v)
        };
        let x = num(2, "x_m")?;
        let y = num(3, "y_m")?;
        let conf = if columns >= 5 { Some(num(4, "conf")?) } else { None };
        let geo = if columns >= 6 { Some(num(5, "geo_conf")?) } else { None };
        rows.entry(agent).or_default().push((frame, x, y, conf, geo));
    }

    let fps = fps.ok_or(TrajError::MissingFps)?;
    let mut trajectories = Vec::with_capacity(rows.len());
    for (agent_id, mut pts) in rows {
        pts.sort_by_key(|r| r.0);
        for w in pts.windows(2) {
            match w[1].0 - w[0].0 {
                0 => return Err(TrajError::DuplicateFrame { agent_id, frame: w[0].0 }),
                1 => {}
                _ => {
                    return Err(TrajError::FrameGap { agent_id, prev: w[0].0, next: w[1].0 })
                }
            }
        }
        let start_frame = pts[0].0;
        let positions = pts.iter().map(|r| Point2::new(r.1, r.2)).collect();
        let mut t = Trajectory::new(agent_id, start_frame, positions)?;
        if columns >= 5 {
            t = t.with_mot_conf(pts.iter().map(|r| r.3.unwrap()).collect())?;
        }
        if columns >= 6 {
            t = t.with_geo_conf(pts.iter().map(|r| r.4.unwrap()).collect())?;
        }
        trajectories.push(t);
    }
    Scene::new(trajectories, fps, declared_frames)
}

/// Serialize a scene to CSV text. Confidence columns are emitted when any
/// trajectory carries them; absent values fill with 1.0.
pub fn write_scene(scene: &Scene) -> String {
    let has_geo = scene.trajectories.iter().any(|t| t.geo_conf.is_some());
    let has_mot = has_geo || scene.trajectories.iter().any(|t| t.mot_conf.is_some());
    let mut out = String::new();
    let _ = writeln!(out, "# fps={}", scene.fps);
    let _ = writeln!(out, "# frames={}", scene.frame_count);
    out.push_str(match (has_mot, has_geo) {
        (false, _) => "frame,agent_id,x_m,y_m\n",
        (true, false) => "frame,agent_id,x_m,y_m,conf\n",
        (true, true) => "frame,agent_id,x_m,y_m,conf,geo_conf\n",
    });
    let mut order: Vec<&Trajectory> = scene.trajectories.iter().collect();
    order.sort_by_key(|t| t.agent_id);
    for t in order {
        for (k, p) in t.positions.iter().enumerate() {
            let _ = write!(out, "{},{},{},{}", t.start_frame + k, t.agent_id, p.x, p.y);
            if has_mot {
                let c = t.mot_conf.as_ref().map_or(1.0, |c| c[k]);
                let _ = write!(out, ",{c}");
            }
            if has_geo {
                let g = t.geo_conf.as_ref().map_or(1.0, |g| g[k]);
                let _ = write!(out, ",{g}");
            }
            out.push('\n');
        }
    }
    out
}

/// Aggregate counts used by dataset summaries: the detections-per-frame
/// ratio divides the exact integer totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneStats {
    pub n_detections: u64,
    pub n_unique_agents: usize,
    pub frame_count: usize,
    pub detections_per_frame: f64,
}

pub fn scene_statistics(scene: &Scene) -> SceneStats {
    let n_detections: u64 = scene.trajectories.iter().map(|t| t.len() as u64).sum();
    let frame_count = scene.frame_count();
    let detections_per_frame = if frame_count == 0 {
        0.0
    } else {
        n_detections as f64 / frame_count as f64
    };
    SceneStats {
        n_detections,
        n_unique_agents: scene.agent_count(),
        frame_count,
        detections_per_frame,
    }
}

/// True when the pooled scenes carry enough evidence for distributional
/// comparison. Callers pool scenes sharing one frame rate.
pub fn accumulation_check(scenes: &[Scene], cfg: &AccumulationConfig) -> bool {
    let tracks: u64 = scenes.iter().map(|s| s.agent_count() as u64).sum();
    let detections: u64 = scenes
        .iter()
        .flat_map(|s| s.trajectories.iter())
        .map(|t| t.len() as u64)
        .sum();
    tracks >= cfg.min_unique_tracks || detections >= cfg.min_total_detections
}

/// Per-agent kinematic summary (speeds from smoothed velocities, the
/// stationary flag from raw endpoints).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KinematicSummary {
    pub agent_id: i64,
    /// Mean smoothed speed, m/s; zero for single-detection tracks.
    pub mean_speed: f64,
    /// Mean magnitude of smoothed acceleration, m/s^2; zero below 3 samples.
    pub mean_accel: f64,
    /// Smoothed path length, m.
    pub path_length: f64,
    /// Straight-line distance between smoothed endpoints, m.
    pub displacement: f64,
    /// Raw-endpoint displacement below the stationary threshold.
    pub is_stationary: bool,
}
