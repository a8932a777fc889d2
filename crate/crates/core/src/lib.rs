//! Reconstruction and realism scoring of bird's-eye-view pedestrian trajectories.
//!
//! The crate turns raw multi-object tracker output into metric-scale 2D
//! trajectories on the ground plane and scores how plausible the resulting
//! crowd motion is:
//!
//! * [`trajdata`] — trajectory and tracklet containers plus the CSV formats.
//! * [`geometry`] — homography projection, depth rasters, robust metric-scale
//!   recovery, un-projection, and ground-plane fitting.
//! * [`kinematics`] — Kalman smoothing and per-agent kinematic summaries.
//! * [`metricspace`] — distribution and sequence distances (1-D earth mover's
//!   distance, dynamic time warping, k-NN radii, kernel density modes).
//! * [`metrics`] — the twelve-score realism protocol over scenes.
//! * [`synthgen`] — deterministic social-force scenario generator and
//!   analytic fixtures.
//! * [`pipeline`] — end-to-end image-to-video and text-to-video pipelines.

pub mod config;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod metricspace;
pub mod pipeline;
pub mod synthgen;
pub mod trajdata;

pub use config::Config;
pub use metrics::{Evaluation, MetricReport, Mode};
pub use trajdata::{Detection, KinematicSummary, Scene, TrackletSet, Trajectory};
