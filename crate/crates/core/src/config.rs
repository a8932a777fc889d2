//! Runtime configuration.
//!
//! Every threshold used by the pipelines and the metric suite lives here so a
//! single TOML file can override any of them. The defaults are the reference
//! operating point; reports echo the full resolved configuration so results
//! stay reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Top-level configuration. All sections have full defaults; a config file
/// only needs to name the values it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed for every stochastic step (RANSAC sampling, subsampling).
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    pub metrics: MetricConfig,
    pub scale: ScaleConfig,
    pub anthropometric: AnthropometricConfig,
    pub plane: PlaneFitConfig,
    pub staticity: StaticityConfig,
    pub accumulation: AccumulationConfig,
    pub los: LosConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            smoothing: SmoothingConfig::default(),
            metrics: MetricConfig::default(),
            scale: ScaleConfig::default(),
            anthropometric: AnthropometricConfig::default(),
            plane: PlaneFitConfig::default(),
            staticity: StaticityConfig::default(),
            accumulation: AccumulationConfig::default(),
            los: LosConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("smoothing.process_accel_std", self.smoothing.process_accel_std),
            ("smoothing.measurement_std", self.smoothing.measurement_std),
            ("metrics.collision_threshold_m", self.metrics.collision_threshold_m),
            ("metrics.stationary_threshold_m", self.metrics.stationary_threshold_m),
            ("metrics.nn_radius_m", self.metrics.nn_radius_m),
            ("scale.huber_delta_m", self.scale.huber_delta_m),
            ("plane.inlier_threshold_m", self.plane.inlier_threshold_m),
            ("anthropometric.target_mean_height_m", self.anthropometric.target_mean_height_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.anthropometric.min_mean_height_m >= self.anthropometric.max_mean_height_m {
            return Err(ConfigError::Invalid(
                "anthropometric.min_mean_height_m must be below max_mean_height_m".into(),
            ));
        }
        if self.metrics.density_neighbors == 0 {
            return Err(ConfigError::Invalid("metrics.density_neighbors must be at least 1".into()));
        }
        if self.scale.ransac_sample_size == 0 || self.scale.ransac_iterations == 0 {
            return Err(ConfigError::Invalid("scale RANSAC parameters must be nonzero".into()));
        }
        let t = &self.los.thresholds;
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid("los.thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Constant-velocity Kalman smoother parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// White-acceleration process noise, m/s^2.
    pub process_accel_std: f64,
    /// Position measurement noise, m.
    pub measurement_std: f64,
    /// Initial variance of each velocity component, (m/s)^2.
    pub initial_velocity_var: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            process_accel_std: 1.0,
            measurement_std: 0.1,
            initial_velocity_var: 10.0,
        }
    }
}

/// Metric-suite thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Two agents closer than this are in collision, m.
    pub collision_threshold_m: f64,
    /// Endpoint displacement below this marks an agent stationary, m.
    pub stationary_threshold_m: f64,
    /// Speed above this marks an agent as moving, m/s.
    pub moving_speed_threshold_mps: f64,
    /// Nearest-neighbor distances beyond this radius are discarded, m.
    pub nn_radius_m: f64,
    /// Neighbor count K for local density K/(pi r^2).
    pub density_neighbors: usize,
    /// Cap on trajectories entering pairwise internal diversity; the subset
    /// is drawn with the run seed. `None` disables subsampling.
    pub internal_diversity_subsample: Option<usize>,
    /// Optional Sakoe-Chiba band half-width for DTW, in samples.
    pub dtw_band: Option<usize>,
    /// Kernel density bandwidth override; `None` selects Silverman's rule.
    pub kde_bandwidth: Option<f64>,
    /// Upper edge of the fundamental-diagram density axis, ped/m^2.
    pub fd_density_max: f64,
    /// Number of fundamental-diagram density bins.
    pub fd_bins: usize,
    /// Angular bins of the nearest-neighbor polar histogram.
    pub polar_angle_bins: usize,
    /// Radial bins of the nearest-neighbor polar histogram.
    pub polar_radius_bins: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            collision_threshold_m: 0.1,
            stationary_threshold_m: 0.2,
            moving_speed_threshold_mps: 0.1,
            nn_radius_m: 10.0,
            density_neighbors: 4,
            internal_diversity_subsample: Some(200),
            dtw_band: None,
            kde_bandwidth: None,
            fd_density_max: 5.0,
            fd_bins: 10,
            polar_angle_bins: 24,
            polar_radius_bins: 10,
        }
    }
}

/// Robust scale-alignment parameters (RANSAC over joint-valid depth pixels
/// with a Huber-weighted refit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub ransac_iterations: usize,
    /// Pixels drawn per RANSAC hypothesis.
    pub ransac_sample_size: usize,
    /// Huber loss corner, m.
    pub huber_delta_m: f64,
    /// Reweighting steps per fit.
    pub irls_steps: usize,
    /// Minimum jointly valid pixels; fewer rejects the frame.
    pub min_valid_pixels: usize,
    /// Minimum inlier fraction; less rejects the frame.
    pub min_inlier_fraction: f64,
    /// Inlier residual bound as a fraction of the median metric depth.
    pub residual_median_fraction: f64,
    /// Metric-depth keyframe cadence, frames.
    pub keyframe_every: usize,
    /// Search radius for the nearest valid depth pixel when bilinear
    /// sampling lands on masked values, px.
    pub depth_fallback_radius_px: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            ransac_iterations: 200,
            ransac_sample_size: 50,
            huber_delta_m: 0.5,
            irls_steps: 10,
            min_valid_pixels: 100,
            min_inlier_fraction: 0.30,
            residual_median_fraction: 0.10,
            keyframe_every: 8,
            depth_fallback_radius_px: 3.0,
        }
    }
}

/// Plausible-stature prior applied to per-detection height estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnthropometricConfig {
    /// Open-interval lower bound on the mean estimated height, m.
    pub min_mean_height_m: f64,
    /// Open-interval upper bound on the mean estimated height, m.
    pub max_mean_height_m: f64,
    /// Mean height imposed when the bounds are violated, m.
    pub target_mean_height_m: f64,
}

impl Default for AnthropometricConfig {
    fn default() -> Self {
        AnthropometricConfig {
            min_mean_height_m: 1.4,
            max_mean_height_m: 2.0,
            target_mean_height_m: 1.7,
        }
    }
}

/// Ground-plane RANSAC + total-least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneFitConfig {
    pub ransac_iterations: usize,
    /// Point-to-plane inlier distance, m.
    pub inlier_threshold_m: f64,
}

impl Default for PlaneFitConfig {
    fn default() -> Self {
        PlaneFitConfig { ransac_iterations: 100, inlier_threshold_m: 0.2 }
    }
}

/// Static-camera gate on pose deltas between consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticityConfig {
    /// Maximum inter-frame translation, m (after metric scaling).
    pub max_translation_m: f64,
    /// Maximum inter-frame rotation, degrees.
    pub max_rotation_deg: f64,
}

impl Default for StaticityConfig {
    fn default() -> Self {
        StaticityConfig { max_translation_m: 0.05, max_rotation_deg: 0.5 }
    }
}

/// Minimum pooled evidence before distributional scores are trustworthy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccumulationConfig {
    pub min_unique_tracks: u64,
    pub min_total_detections: u64,
}

impl Default for AccumulationConfig {
    fn default() -> Self {
        AccumulationConfig { min_unique_tracks: 150, min_total_detections: 1500 }
    }
}

/// Fruin level-of-service boundaries, ped/m^2, grades A..F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosConfig {
    pub thresholds: [f64; 5],
}

impl Default for LosConfig {
    fn default() -> Self {
        LosConfig { thresholds: [0.83, 1.08, 1.79, 3.59, 5.38] }
    }
}
