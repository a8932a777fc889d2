//! Report assembly: the metric values plus everything needed to reproduce
//! them (mode, seed, thresholds, and per-rule exclusion diagnostics).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    I2V,
    T2V,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "i2v" => Ok(Mode::I2V),
            "t2v" => Ok(Mode::T2V),
            other => Err(format!("unknown mode `{other}` (i2v|t2v)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::I2V => "i2v",
            Mode::T2V => "t2v",
        })
    }
}

/// Everything excluded, substituted, or worth flagging during evaluation.
/// Optional fields serialize only when set, keeping reports small.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Diagnostics {
    /// Metric name -> reason it is missing from `values`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub absent: BTreeMap<String, String>,
    /// Pooled input meets the track/detection accumulation floor.
    pub accumulation_met: bool,
    pub n_gen_scenes: usize,
    pub n_gen_agents: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_gt_agents: Option<usize>,
    /// Agents too short for a speed (length 1); they contribute zeros.
    pub gen_agents_single_detection: usize,
    /// Agents too short for an acceleration (length < 3); zeros contributed.
    pub gen_agents_no_acceleration: usize,
    /// Set when generated trajectories were resampled to another frame rate
    /// for sequence comparisons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resampled_gen_to_fps: Option<f64>,
    /// Directional flow fell back to one axis ("x" or "y").
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_single_direction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_samples_gen: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_samples_gt: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nn_samples_gen: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nn_samples_gt: Option<usize>,
    /// Actual subset size when internal diversity was subsampled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub internal_diversity_subsample: Option<usize>,
    /// Mean/stddev walking speed over non-stationary generated agents, m/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walking_speed_mean_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walking_speed_std_mps: Option<f64>,
    /// Mean local density over generated flow samples, ped/m^2, and its
    /// Fruin level-of-service grade.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_density_gen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub los_gen: Option<String>,
    /// Geometric confidence sits at the bottom of its scale (values near 1
    /// mean the depth model is guessing).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geo_conf_low: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mode: Mode,
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
    pub config: Config,
}

impl MetricReport {
    /// Flatten into one JSON object: metric names at top level alongside
    /// `mode`, `seed`, `diagnostics`, and `config`. Keys are sorted, so the
    /// serialization is byte-stable.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.values {
            map.insert(k.clone(), serde_json::json!(v));
        }
        map.insert("mode".into(), serde_json::json!(self.mode));
        map.insert("seed".into(), serde_json::json!(self.seed));
        map.insert(
            "diagnostics".into(),
            serde_json::to_value(&self.diagnostics).expect("diagnostics serialize"),
        );
        map.insert(
            "config".into(),
            serde_json::to_value(&self.config).expect("config serialize"),
        );
        serde_json::Value::Object(map)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("report serialize");
        s.push('\n');
        s
    }
}
