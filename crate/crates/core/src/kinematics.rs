//! Constant-velocity Kalman smoothing and per-agent kinematic summaries.
//!
//! Tracker output is noisy at the centimeter scale, which wrecks finite
//! differences; speeds and accelerations therefore come from a forward
//! Kalman filter with a Rauch-Tung-Striebel backward pass over the state
//! [x, y, vx, vy] at dt = 1/fps.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Point2, Vector2, Vector4};
use thiserror::Error;

use crate::config::SmoothingConfig;
use crate::trajdata::{KinematicSummary, Trajectory};

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("covariance update became non-invertible at step {0}")]
    Singular(usize),
}

/// Smoothed positions and velocities, aligned with the source trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrajectory {
    pub agent_id: i64,
    pub start_frame: usize,
    pub positions: Vec<Point2<f64>>,
    pub velocities: Vec<Vector2<f64>>,
}

impl SmoothedTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Forward filter plus RTS backward pass. A single-detection track passes
/// through with zero velocity.
pub fn kalman_smooth(
    traj: &Trajectory,
    fps: f64,
    cfg: &SmoothingConfig,
) -> Result<SmoothedTrajectory, KinematicsError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(KinematicsError::BadFps(fps));
    }
    let n = traj.len();
    if n == 1 {
        return Ok(SmoothedTrajectory {
            agent_id: traj.agent_id,
            start_frame: traj.start_frame,
            positions: traj.positions.clone(),
            velocities: vec![Vector2::zeros()],
        });
    }

    let dt = 1.0 / fps;
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, dt,  0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    // Discretized white-acceleration noise per axis.
    let qa = cfg.process_accel_std * cfg.process_accel_std;
    let (q11, q12, q22) = (dt.powi(4) / 4.0 * qa, dt.powi(3) / 2.0 * qa, dt * dt * qa);
    #[rustfmt::skip]
    let q = Matrix4::new(
        q11, 0.0, q12, 0.0,
        0.0, q11, 0.0, q12,
        q12, 0.0, q22, 0.0,
        0.0, q12, 0.0, q22,
    );
    let rz = cfg.measurement_std * cfg.measurement_std;
    let r = Matrix2::from_diagonal_element(rz);

    let mut pred_x = Vec::with_capacity(n);
    let mut pred_p = Vec::with_capacity(n);
    let mut filt_x = Vec::with_capacity(n);
    let mut filt_p = Vec::with_capacity(n);

    let z0 = traj.positions[0];
    let prior_x = Vector4::new(z0.x, z0.y, 0.0, 0.0);
    let prior_p = Matrix4::from_diagonal(&Vector4::new(
        rz,
        rz,
        cfg.initial_velocity_var,
        cfg.initial_velocity_var,
    ));

    for (k, z) in traj.positions.iter().enumerate() {
        let (xp, pp) = if k == 0 {
            (prior_x, prior_p)
        } else {
            let xl: &Vector4<f64> = &filt_x[k - 1];
            let pl: &Matrix4<f64> = &filt_p[k - 1];
            (f * xl, f * pl * f.transpose() + q)
        };
        let innovation = Vector2::new(z.x, z.y) - h * xp;
        let s = h * pp * h.transpose() + r;
        let s_inv = s.try_inverse().ok_or(KinematicsError::Singular(k))?;
        let gain: Matrix4x2<f64> = pp * h.transpose() * s_inv;
        let xf = xp + gain * innovation;
        let pf = (Matrix4::identity() - gain * h) * pp;
        pred_x.push(xp);
        pred_p.push(pp);
        filt_x.push(xf);
        filt_p.push(pf);
    }

    let mut smooth = vec![Vector4::zeros(); n];
    let mut smooth_p = filt_p[n - 1];
    smooth[n - 1] = filt_x[n - 1];
    for k in (0..n - 1).rev() {
        let pp_inv = pred_p[k + 1]
            .try_inverse()
            .ok_or(KinematicsError::Singular(k))?;
        let g = filt_p[k] * f.transpose() * pp_inv;
        smooth[k] = filt_x[k] + g * (smooth[k + 1] - pred_x[k + 1]);
        smooth_p = filt_p[k] + g * (smooth_p - pred_p[k + 1]) * g.transpose();
    }

    Ok(SmoothedTrajectory {
        agent_id: traj.agent_id,
        start_frame: traj.start_frame,
        positions: smooth.iter().map(|x| Point2::new(x[0], x[1])).collect(),
        velocities: smooth.iter().map(|x| Vector2::new(x[2], x[3])).collect(),
    })
}

/// Summarize one agent. Speeds average `||v_k||` over the L-1 samples after
/// the first, accelerations average consecutive velocity differences over
/// dt for the L-2 samples after the second; tracks too short for a term
/// contribute zero. The stationary flag uses raw endpoints so smoothing
/// cannot reclassify an agent.
pub fn summarize(
    traj: &Trajectory,
    smoothed: &SmoothedTrajectory,
    fps: f64,
    stationary_threshold_m: f64,
) -> KinematicSummary {
    debug_assert_eq!(traj.len(), smoothed.len());
    let n = smoothed.len();
    let dt = 1.0 / fps;
    let v = &smoothed.velocities;
    let p = &smoothed.positions;

    let mean_speed = if n >= 2 {
        (1..n).map(|k| v[k].norm()).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mean_accel = if n >= 3 {
        (2..n).map(|k| (v[k] - v[k - 1]).norm() / dt).sum::<f64>() / (n - 2) as f64
    } else {
        0.0
    };
    let path_length: f64 = (1..n).map(|k| (p[k] - p[k - 1]).norm()).sum();
    let displacement = if n >= 2 { (p[n - 1] - p[0]).norm() } else { 0.0 };

    KinematicSummary {
        agent_id: traj.agent_id,
        mean_speed,
        mean_accel,
        path_length,
        displacement,
        is_stationary: traj.displacement() < stationary_threshold_m,
    }
}
