//! Shared fixtures and independent reference implementations for the
//! integration suite. The reference code here deliberately uses different
//! algorithms than the library (network flow instead of CDF integration,
//! path enumeration instead of dynamic programming, quadratic scans instead
//! of anything clever) so agreement is evidence, not tautology.

// Each integration test binary compiles this module and uses its own subset.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{Matrix3, Point2, Vector2};

use crowdtraj::geometry::{write_pfm, DepthRaster, Homography};
use crowdtraj::metrics::FrameSample;
use crowdtraj::trajdata::Scene;

// ---------------------------------------------------------------- CLI runner

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdtraj"))
        .args(args)
        .output()
        .expect("spawn crowdtraj");
    CliRun {
        code: out.status.code().expect("process terminated by signal"),
        stdout: String::from_utf8(out.stdout).expect("utf8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf8 stderr"),
    }
}

pub fn parse_json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("bad JSON ({e}): {text}"))
}

/// Pull a numeric metric out of a report JSON object.
pub fn metric(report: &serde_json::Value, key: &str) -> f64 {
    report
        .get(key)
        .and_then(|v| v.as_f64())
        .unwrap_or_else(|| panic!("report lacks numeric `{key}`: {report}"))
}

// --------------------------------------------- transport (EMD) reference

/// Wasserstein-1 distance via an explicit minimum-cost flow.
///
/// Each value of `a` supplies `b.len()` integer units and each value of `b`
/// absorbs `a.len()`, so both sides total `n*m` units of 1/(n*m) probability
/// mass each. Successive shortest paths with Johnson potentials give the
/// optimum for this small bipartite network. Dijkstra (rather than plain
/// Bellman-Ford) matters: a node's predecessor is always finalized before the
/// node itself, so the augmenting-path walk cannot cycle even when rounding
/// noise perturbs tie-heavy cost structures.
pub fn emd_flow_reference(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let m = b.len();
    assert!(n > 0 && m > 0, "empty distribution");

    // Node ids: 0 source, 1..=n the a-side, n+1..=n+m the b-side, n+m+1 sink.
    let source = 0usize;
    let sink = n + m + 1;
    let n_nodes = n + m + 2;

    struct Arc {
        to: usize,
        cap: i64,
        cost: f64,
        rev: usize,
    }
    let mut graph: Vec<Vec<Arc>> = (0..n_nodes).map(|_| Vec::new()).collect();
    let add = |graph: &mut Vec<Vec<Arc>>, u: usize, v: usize, cap: i64, cost: f64| {
        let ru = graph[v].len();
        let rv = graph[u].len();
        graph[u].push(Arc { to: v, cap, cost, rev: ru });
        graph[v].push(Arc { to: u, cap: 0, cost: -cost, rev: rv });
    };
    for (i, &av) in a.iter().enumerate() {
        add(&mut graph, source, 1 + i, m as i64, 0.0);
        for (j, &bv) in b.iter().enumerate() {
            add(&mut graph, 1 + i, 1 + n + j, (n * m) as i64, (av - bv).abs());
        }
    }
    for j in 0..m {
        add(&mut graph, 1 + n + j, sink, n as i64, 0.0);
    }

    let mut potential = vec![0.0f64; n_nodes];
    let mut remaining = (n * m) as i64;
    let mut total_cost = 0.0;
    while remaining > 0 {
        // Dijkstra on reduced costs. All original costs are nonnegative and
        // potentials keep residual reduced costs nonnegative up to rounding,
        // which the clamp absorbs.
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut done = vec![false; n_nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
        dist[source] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for (k, arc) in graph[u].iter().enumerate() {
                if arc.cap > 0 && !done[arc.to] {
                    let reduced = (arc.cost + potential[u] - potential[arc.to]).max(0.0);
                    if dist[u] + reduced < dist[arc.to] {
                        dist[arc.to] = dist[u] + reduced;
                        prev[arc.to] = Some((u, k));
                    }
                }
            }
        }
        assert!(dist[sink].is_finite(), "transport network must stay feasible");
        for v in 0..n_nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }

        let mut bottleneck = remaining;
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            bottleneck = bottleneck.min(graph[u][k].cap);
            v = u;
        }
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            graph[u][k].cap -= bottleneck;
            let rev = graph[u][k].rev;
            let to = graph[u][k].to;
            graph[to][rev].cap += bottleneck;
            total_cost += bottleneck as f64 * graph[u][k].cost;
            v = u;
        }
        remaining -= bottleneck;
    }
    total_cost / (n * m) as f64
}

// --------------------------------------------------- alignment reference

/// Minimum warping cost by walking every monotone path from (0,0) to the
/// opposite corner (steps: advance a, advance b, advance both). Prefixes
/// already at or above the best complete path are cut, which is exact
/// because every remaining step adds a nonnegative cost.
pub fn dtw_enumeration_reference(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    fn walk(a: &[Point2<f64>], b: &[Point2<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).norm();
        if acc >= *best {
            return;
        }
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = acc;
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

// ------------------------------------------- quadratic social references

pub fn collision_counts_reference(frames: &[Vec<FrameSample>], threshold: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut count = 0usize;
        for i in 0..frame.len() {
            let mut hit = false;
            for j in 0..frame.len() {
                if i != j && (frame[i].pos - frame[j].pos).norm() < threshold {
                    hit = true;
                }
            }
            if hit {
                count += 1;
            }
        }
        out.push(count);
    }
    out
}

pub struct FlowReference {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// (density, speed, flow) for every defined sample.
    pub triples: Vec<(f64, f64, f64)>,
}

pub fn flow_reference(frames: &[Vec<FrameSample>], k: usize) -> FlowReference {
    let mut out = FlowReference { x: Vec::new(), y: Vec::new(), triples: Vec::new() };
    for frame in frames {
        if frame.len() < k + 1 {
            continue;
        }
        for (i, a) in frame.iter().enumerate() {
            let mut dists: Vec<f64> = frame
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (b.pos - a.pos).norm())
                .collect();
            dists.sort_by(f64::total_cmp);
            let r = dists[k - 1];
            if r <= 0.0 {
                continue;
            }
            let density = k as f64 / (std::f64::consts::PI * r * r);
            let speed = a.vel.norm();
            let flow = density * speed;
            out.triples.push((density, speed, flow));
            if a.vel.x.abs() > a.vel.y.abs() {
                out.x.push(flow);
            } else if a.vel.y.abs() > a.vel.x.abs() {
                out.y.push(flow);
            }
        }
    }
    out
}

pub fn nn_distances_reference(
    frames: &[Vec<FrameSample>],
    moving_eps: f64,
    radius: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for frame in frames {
        let moving: Vec<&FrameSample> =
            frame.iter().filter(|s| s.vel.norm() > moving_eps).collect();
        if moving.len() < 2 {
            continue;
        }
        for (i, a) in moving.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, b) in moving.iter().enumerate() {
                if i != j {
                    best = best.min((b.pos - a.pos).norm());
                }
            }
            if best <= radius {
                out.push(best);
            }
        }
    }
    out
}

// -------------------------------------------------------------- statistics

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

// -------------------------------------------------------- pinhole fixture

pub const H_CAM: f64 = 4.0;
pub const FOCAL: f64 = 50.0;
pub const CX: f64 = 32.0;
pub const CY: f64 = 24.0;
pub const IMG_W: u32 = 64;
pub const IMG_H: u32 = 48;
/// Box height that makes the estimated stature exactly 1.7 m at the rig's
/// camera height, keeping the plausibility screen quiet.
pub const BB_PLAUSIBLE: f64 = 1.7 * FOCAL / H_CAM;

/// On-disk inputs for `reconstruct-t2v`: detections, cameras, and PFM depth
/// directories, all under one root.
pub struct PinholeFixture {
    pub tracklets: PathBuf,
    pub cameras: PathBuf,
    pub depth_dir: PathBuf,
    pub metric_dir: PathBuf,
}

/// Straight-down camera `lambda_planted` from metric scale, centered over
/// the origin at height `H_CAM`. With R = diag(1, -1, -1) a ground point
/// (X, Y, 0) lands at pixel (CX + f(X - camx)/H, CY - fY/H).
pub fn camera_record(frame: usize, lambda_planted: f64) -> serde_json::Value {
    serde_json::json!({
        "frame": frame,
        "fx": FOCAL, "fy": FOCAL, "cx": CX, "cy": CY,
        "R": [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
        "t": [0.0, 0.0, H_CAM / lambda_planted],
    })
}

pub fn pixel_of(world_x: f64, world_y: f64) -> (f64, f64) {
    (CX + FOCAL * world_x / H_CAM, CY - FOCAL * world_y / H_CAM)
}

pub fn constant_raster(value: f32) -> DepthRaster {
    DepthRaster::new(IMG_W as usize, IMG_H as usize, vec![value; (IMG_W * IMG_H) as usize])
        .unwrap()
}

pub fn write_raster(path: &Path, raster: &DepthRaster) {
    let mut buf = Vec::new();
    write_pfm(raster, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

/// One MOTChallenge row (1-based frame in the file).
pub fn mot_row(frame0: usize, id: i64, u: f64, v: f64, bb_h: f64, conf: f64) -> String {
    let left = u - 4.0;
    let top = v - bb_h;
    format!("{},{},{left},{top},8,{bb_h},{conf}\n", frame0 + 1, id)
}

/// Build the walking fixture on disk: `agents` are (id, y, x0, vx) walking
/// along x for `n_frames` at `fps`; relative depth exists every frame and
/// metric depth on the first and last frame only, with the planted scale
/// tying them together.
pub fn write_pinhole_fixture(
    root: &Path,
    agents: &[(i64, f64, f64, f64)],
    n_frames: usize,
    fps: f64,
    bb_h: f64,
    lambda: f64,
) -> PinholeFixture {
    let mut rows = String::new();
    for &(id, y, x0, vx) in agents {
        for k in 0..n_frames {
            let x = x0 + vx * k as f64 / fps;
            let (u, v) = pixel_of(x, y);
            rows.push_str(&mot_row(k, id, u, v, bb_h, 0.9));
        }
    }
    let tracklets = root.join("tracklets.csv");
    fs::write(&tracklets, rows).unwrap();

    let cams: Vec<serde_json::Value> =
        (0..n_frames).map(|k| camera_record(k, lambda)).collect();
    let cameras = root.join("cameras.json");
    fs::write(&cameras, serde_json::to_string_pretty(&cams).unwrap()).unwrap();

    let depth_dir = root.join("depth");
    let metric_dir = root.join("metric");
    fs::create_dir_all(&depth_dir).unwrap();
    fs::create_dir_all(&metric_dir).unwrap();
    let rel = constant_raster((H_CAM / lambda) as f32);
    for k in 0..n_frames {
        write_raster(&depth_dir.join(format!("{k}.pfm")), &rel);
    }
    let metric = constant_raster(H_CAM as f32);
    write_raster(&metric_dir.join("0.pfm"), &metric);
    write_raster(&metric_dir.join(format!("{}.pfm", n_frames - 1)), &metric);

    PinholeFixture { tracklets, cameras, depth_dir, metric_dir }
}

/// Agents spread over the plane (non-collinear, mixed directions) so the
/// ground-plane fit is well conditioned.
pub fn walking_agents() -> Vec<(i64, f64, f64, f64)> {
    vec![
        (1, 0.0, -0.65, 1.3),
        (2, -0.75, -0.65, 1.3),
        (3, -1.5, 0.65, -1.3),
        (4, 0.7, 0.65, -1.3),
    ]
}

// --------------------------------------------------- homography fixtures

/// 50 pixels per meter, pixel -> world.
pub fn metric_homography() -> Homography {
    Homography::new(Matrix3::new(0.02, 0.0, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0, 1.0)).unwrap()
}

pub const METRIC_HOMOGRAPHY_TEXT: &str = "0.02 0 0\n0 0.02 0\n0 0 1\n";

/// Export a scene as MOTChallenge rows whose ground contacts project back to
/// the scene positions through `pixel_to_world`.
pub fn tracklets_via_homography(scene: &Scene, pixel_to_world: &Homography) -> String {
    let world_to_pixel = pixel_to_world.inverse();
    let mut rows = String::new();
    for t in scene.trajectories() {
        for (k, p) in t.positions.iter().enumerate() {
            let px = world_to_pixel.project(p.x, p.y).expect("finite pixel");
            rows.push_str(&mot_row(t.start_frame + k, t.agent_id, px.x, px.y, 20.0, 1.0));
        }
    }
    rows
}

// ----------------------------------------------------- frame generators

pub fn random_frames(
    rng: &mut impl rand::Rng,
    n_frames: usize,
    max_agents: usize,
) -> Vec<Vec<FrameSample>> {
    (0..n_frames)
        .map(|_| {
            let n = rng.gen_range(0..=max_agents);
            (0..n)
                .map(|agent| FrameSample {
                    agent,
                    pos: Point2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)),
                    vel: Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                })
                .collect()
        })
        .collect()
}
