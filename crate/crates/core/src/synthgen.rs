//! Synthetic crowd generation: a social-force simulator for configurable
//! scenarios, plus small closed-form fixtures with known metric values.

use nalgebra::{Point2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajdata::{Scene, Trajectory};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scenario: {0}")]
    Toml(String),
    #[error("scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Sparse,
    Moderate,
    Crowded,
}

impl std::str::FromStr for Density {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sparse" => Ok(Density::Sparse),
            "moderate" => Ok(Density::Moderate),
            "crowded" => Ok(Density::Crowded),
            other => Err(format!("unknown density `{other}` (sparse|moderate|crowded)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interaction {
    Directional,
    Multidirectional,
    Converging,
}

impl std::str::FromStr for Interaction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "directional" => Ok(Interaction::Directional),
            "multidirectional" => Ok(Interaction::Multidirectional),
            "converging" => Ok(Interaction::Converging),
            other => Err(format!(
                "unknown interaction `{other}` (directional|multidirectional|converging)"
            )),
        }
    }
}

/// Full description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_agents: usize,
    /// Side length of the square arena, m.
    pub arena_m: f64,
    pub duration_s: f64,
    pub fps: f64,
    pub interaction: Interaction,
    pub desired_speed_mps: f64,
    pub max_speed_mps: f64,
    /// Driving-force relaxation time, s.
    pub relaxation_s: f64,
    /// Repulsion amplitude, m/s^2.
    pub repulsion_strength: f64,
    /// Repulsion decay length, m.
    pub repulsion_scale_m: f64,
    /// Preferred clearance between body centers, m.
    pub body_distance_m: f64,
    pub arrival_radius_m: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_agents: 6,
            arena_m: 6.0,
            duration_s: 3.0,
            fps: 25.0,
            interaction: Interaction::Directional,
            desired_speed_mps: 1.3,
            max_speed_mps: 2.0,
            relaxation_s: 0.5,
            repulsion_strength: 2.0,
            repulsion_scale_m: 0.3,
            body_distance_m: 0.5,
            arrival_radius_m: 0.3,
        }
    }
}

impl ScenarioSpec {
    pub fn preset(density: Density, interaction: Interaction) -> Self {
        let n_agents = match density {
            Density::Sparse => 6,
            Density::Moderate => 43,
            Density::Crowded => 130,
        };
        ScenarioSpec { n_agents, interaction, ..ScenarioSpec::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| SynthError::Toml(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_agents == 0 {
            return Err(SynthError::Invalid("n_agents must be positive".into()));
        }
        for (name, v) in [
            ("arena_m", self.arena_m),
            ("duration_s", self.duration_s),
            ("fps", self.fps),
            ("max_speed_mps", self.max_speed_mps),
            ("relaxation_s", self.relaxation_s),
            ("repulsion_scale_m", self.repulsion_scale_m),
            ("arrival_radius_m", self.arrival_radius_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("desired_speed_mps", self.desired_speed_mps),
            ("repulsion_strength", self.repulsion_strength),
            ("body_distance_m", self.body_distance_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::Invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

struct Agent {
    pos: Point2<f64>,
    vel: Vector2<f64>,
    goal: Point2<f64>,
    /// Directional agents keep walking past their goal line; others stop or
    /// retarget on arrival.
    retarget: bool,
}

/// Run the social-force model and record every agent at every frame.
/// Deterministic in (`spec`, `seed`).
pub fn simulate(spec: &ScenarioSpec, seed: u64) -> Result<Scene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = spec.arena_m / 2.0;
    let n = spec.n_agents;

    // Spawn without overlaps where the arena allows it.
    let random_spawn = |rng: &mut ChaCha20Rng| -> Vec<Point2<f64>> {
        let min_gap = 0.4f64.min(spec.arena_m / (n as f64).sqrt() * 0.5);
        let mut positions: Vec<Point2<f64>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut placed = Point2::origin();
            for attempt in 0..200 {
                let cand =
                    Point2::new(rng.gen_range(-half..half), rng.gen_range(-half..half));
                let clear = positions.iter().all(|p| (cand - p).norm() >= min_gap);
                placed = cand;
                if clear || attempt == 199 {
                    break;
                }
            }
            positions.push(placed);
        }
        positions
    };

    let mut starts: Vec<(Point2<f64>, Point2<f64>, bool)> = Vec::with_capacity(n);
    match spec.interaction {
        Interaction::Directional => {
            // Horizontal lanes with alternating walking direction; members of
            // a lane are spread evenly along it so nobody spawns on top of a
            // neighbor.
            let n_lanes = (n / 4).max(1);
            for i in 0..n {
                let lane = i % n_lanes;
                let member = i / n_lanes;
                let members_in_lane = (n - 1 - lane) / n_lanes + 1;
                let y = -half + (lane as f64 + 0.5) / n_lanes as f64 * spec.arena_m;
                let x = -half
                    + (member as f64 + 0.5) / members_in_lane as f64 * spec.arena_m
                    + rng.gen_range(-0.1..0.1);
                let dir = if lane % 2 == 0 { 1.0 } else { -1.0 };
                let pos = Point2::new(x, y);
                starts.push((pos, Point2::new(dir * (half + 100.0), y), false));
            }
        }
        Interaction::Multidirectional => {
            for pos in random_spawn(&mut rng) {
                let goal =
                    Point2::new(rng.gen_range(-half..half), rng.gen_range(-half..half));
                starts.push((pos, goal, true));
            }
        }
        Interaction::Converging => {
            for pos in random_spawn(&mut rng) {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = 0.4 * rng.gen::<f64>().sqrt();
                starts.push((pos, Point2::new(r * theta.cos(), r * theta.sin()), false));
            }
        }
    }
    simulate_agents(spec, starts, rng)
}

/// Run the model from explicit starts and goals. `retarget` agents draw a
/// fresh random goal on arrival; the rest stop there.
pub fn simulate_with_starts(
    spec: &ScenarioSpec,
    starts: &[(Point2<f64>, Point2<f64>)],
    seed: u64,
) -> Result<Scene, SynthError> {
    spec.validate()?;
    if starts.is_empty() {
        return Err(SynthError::Invalid("no agents".into()));
    }
    let rng = ChaCha20Rng::seed_from_u64(seed);
    let starts = starts.iter().map(|(p, g)| (*p, *g, false)).collect();
    simulate_agents(spec, starts, rng)
}

fn simulate_agents(
    spec: &ScenarioSpec,
    starts: Vec<(Point2<f64>, Point2<f64>, bool)>,
    mut rng: ChaCha20Rng,
) -> Result<Scene, SynthError> {
    let half = spec.arena_m / 2.0;
    let n = starts.len();
    let mut agents: Vec<Agent> = starts
        .into_iter()
        .map(|(pos, goal, retarget)| Agent { pos, vel: Vector2::zeros(), goal, retarget })
        .collect();

    let dt = 1.0 / spec.fps;
    let n_frames = (spec.duration_s * spec.fps).round() as usize + 1;
    let cutoff = spec.body_distance_m + 5.0 * spec.repulsion_scale_m;
    let mut tracks: Vec<Vec<Point2<f64>>> = vec![Vec::with_capacity(n_frames); n];

    for _ in 0..n_frames {
        for (i, a) in agents.iter().enumerate() {
            tracks[i].push(a.pos);
        }
        // Repulsion from current positions, before anyone moves.
        let snapshot: Vec<Point2<f64>> = agents.iter().map(|a| a.pos).collect();
        for (i, a) in agents.iter_mut().enumerate() {
            let to_goal = a.goal - a.pos;
            let dist = to_goal.norm();
            let desired = if dist < spec.arrival_radius_m {
                if a.retarget {
                    a.goal = Point2::new(
                        rng.gen_range(-half..half),
                        rng.gen_range(-half..half),
                    );
                    let again = a.goal - a.pos;
                    let d = again.norm();
                    if d > 1e-9 { again / d * spec.desired_speed_mps } else { Vector2::zeros() }
                } else {
                    Vector2::zeros()
                }
            } else {
                to_goal / dist * spec.desired_speed_mps
            };
            let mut force = (desired - a.vel) / spec.relaxation_s;
            for (j, other) in snapshot.iter().enumerate() {
                if i == j {
                    continue;
                }
                let away = a.pos - other;
                let d = away.norm();
                if d < 1e-9 || d > cutoff {
                    continue;
                }
                let mag = spec.repulsion_strength
                    * ((spec.body_distance_m - d) / spec.repulsion_scale_m).exp();
                force += away / d * mag;
            }
            a.vel += force * dt;
            let speed = a.vel.norm();
            if speed > spec.max_speed_mps {
                a.vel *= spec.max_speed_mps / speed;
            }
        }
        for a in agents.iter_mut() {
            let step = a.vel * dt;
            a.pos += step;
        }
    }

    let trajectories: Vec<Trajectory> = tracks
        .into_iter()
        .enumerate()
        .map(|(i, positions)| Trajectory::new(i as i64 + 1, 0, positions))
        .collect::<Result<_, _>>()
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    Scene::new(trajectories, spec.fps, None).map_err(|e| SynthError::Invalid(e.to_string()))
}

/// Closed-form fixtures with hand-computable metric values.
pub mod fixtures {
    use super::*;

    fn scene(fps: f64, tracks: Vec<(i64, Vec<Point2<f64>>)>) -> Scene {
        let trajectories = tracks
            .into_iter()
            .map(|(id, ps)| Trajectory::new(id, 0, ps).unwrap())
            .collect();
        Scene::new(trajectories, fps, None).unwrap()
    }

    /// One agent walking +x at `speed` m/s.
    pub fn single_line(speed: f64, n_frames: usize, fps: f64) -> Scene {
        let ps = (0..n_frames)
            .map(|k| Point2::new(speed * k as f64 / fps, 0.0))
            .collect();
        scene(fps, vec![(1, ps)])
    }

    /// Two agents standing on the same spot: a collision in every frame.
    pub fn colocated_pair(n_frames: usize, fps: f64) -> Scene {
        let ps: Vec<Point2<f64>> = (0..n_frames).map(|_| Point2::new(1.0, 1.0)).collect();
        scene(fps, vec![(1, ps.clone()), (2, ps)])
    }

    /// One agent walking a full circle: long path, near-zero displacement.
    pub fn circle(radius: f64, n_frames: usize, fps: f64) -> Scene {
        let ps = (0..n_frames)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / (n_frames - 1) as f64;
                Point2::new(radius * th.cos(), radius * th.sin())
            })
            .collect();
        scene(fps, vec![(1, ps)])
    }

    /// `nx * ny` grid at `spacing`, everyone walking +x at `speed`. Interior
    /// agents see their 4th nearest neighbor at exactly `spacing`.
    pub fn lattice(
        nx: usize,
        ny: usize,
        spacing: f64,
        speed: f64,
        n_frames: usize,
        fps: f64,
    ) -> Scene {
        let mut tracks = Vec::new();
        let mut id = 1i64;
        for gy in 0..ny {
            for gx in 0..nx {
                let ps = (0..n_frames)
                    .map(|k| {
                        Point2::new(
                            gx as f64 * spacing + speed * k as f64 / fps,
                            gy as f64 * spacing,
                        )
                    })
                    .collect();
                tracks.push((id, ps));
                id += 1;
            }
        }
        scene(fps, tracks)
    }

    /// Two agents `separation` apart in y, both walking +x at `speed`.
    pub fn parallel_walkers(separation: f64, speed: f64, n_frames: usize, fps: f64) -> Scene {
        let walk = |y: f64| -> Vec<Point2<f64>> {
            (0..n_frames).map(|k| Point2::new(speed * k as f64 / fps, y)).collect()
        };
        scene(fps, vec![(1, walk(0.0)), (2, walk(separation))])
    }

    /// Two agents walking head-on through each other along x. At 25 fps the
    /// closing speed of 2.6 m/s guarantees at least one frame with the pair
    /// closer than 0.1 m.
    pub fn head_on_pair(fps: f64) -> Scene {
        let n_frames = (3.0 * fps).round() as usize + 1;
        let a: Vec<Point2<f64>> = (0..n_frames)
            .map(|k| Point2::new(-2.0 + 1.3 * k as f64 / fps, 0.0))
            .collect();
        let b: Vec<Point2<f64>> = (0..n_frames)
            .map(|k| Point2::new(2.0 - 1.3 * k as f64 / fps, 0.0))
            .collect();
        scene(fps, vec![(1, a), (2, b)])
    }

    /// Ten widely separated single-file lines whose local density rises while
    /// their speed falls, planting a strictly decreasing speed-density
    /// relation (Spearman correlation -1 across bins).
    pub fn planted_fd() -> Scene {
        let fps = 10.0;
        let n_frames = 21;
        let mut tracks = Vec::new();
        let mut id = 1i64;
        for line in 0..10usize {
            let rho = 0.25 + 0.5 * line as f64;
            let spacing = 1.0 / (std::f64::consts::PI * rho).sqrt();
            let speed = (1.4 * (1.0 - rho / 5.4)).max(0.0);
            let y = 50.0 * line as f64;
            for i in 0..30usize {
                let x0 = i as f64 * spacing;
                let ps = (0..n_frames)
                    .map(|k| Point2::new(x0 + speed * k as f64 / fps, y))
                    .collect();
                tracks.push((id, ps));
                id += 1;
            }
        }
        scene(fps, tracks)
    }
}
