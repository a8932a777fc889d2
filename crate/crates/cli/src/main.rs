//! Batch front end: ingest tracker output, reconstruct metric scenes, score
//! realism, and emit machine-readable reports.
//!
//! Every failure prints one JSON object to stderr, `{"code", "message",
//! "context"}`, and exits with that code: 2 for usage and input validation,
//! 1 for environment or internal faults. A discarded video is not a failure;
//! `reconstruct-t2v` writes the rejection record and exits 0.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crowdtraj::config::Config;
use crowdtraj::geometry::{
    read_cameras, read_pfm, staticity_check, CameraFrame, DepthRaster, DepthSource,
    GeometryError, Homography,
};
use crowdtraj::metrics::{
    evaluate, flow_samples, fundamental_diagram, nn_polar_histogram, nn_samples, Evaluation,
    FlowSamples, MetricsError, Mode, NnSamples,
};
use crowdtraj::pipeline::{
    project_tracklets_to_scene, reconstruct_t2v, PipelineError, ReconstructionOutcome,
};
use crowdtraj::synthgen::{simulate, ScenarioSpec, SynthError};
use crowdtraj::trajdata::{parse_tracklets, read_scene, scene_statistics, write_scene, Scene};

#[derive(Parser)]
#[command(
    name = "crowdtraj",
    version,
    about = "Metric-scale pedestrian trajectory reconstruction and realism scoring"
)]
struct Cli {
    /// Configuration file (TOML); defaults apply for everything unset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every stochastic step; overrides the config file's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    I2v,
    T2v,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::I2v => Mode::I2V,
            ModeArg::T2v => Mode::T2V,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Project tracker pixels to world coordinates through a homography.
    ProjectI2v {
        /// MOTChallenge CSV of tracker detections.
        #[arg(long, value_name = "FILE")]
        tracklets: PathBuf,
        /// Homography sidecar: 9 whitespace-separated reals, row-major.
        #[arg(long, value_name = "FILE")]
        homography: PathBuf,
        /// Frame rate of the source video.
        #[arg(long)]
        fps: f64,
        /// Image width in pixels (detection boxes are clipped to it).
        #[arg(long)]
        width: u32,
        /// Image height in pixels.
        #[arg(long)]
        height: u32,
        /// Per-frame camera poses; when given, non-static viewpoints are
        /// refused (the homography assumes a fixed camera).
        #[arg(long, value_name = "FILE")]
        cameras: Option<PathBuf>,
        /// Output scene CSV.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Recover a metric scene from cameras and depth; may discard the video.
    ReconstructT2v {
        /// MOTChallenge CSV of tracker detections.
        #[arg(long, value_name = "FILE")]
        tracklets: PathBuf,
        /// JSON array of per-frame cameras.
        #[arg(long, value_name = "FILE")]
        cameras: PathBuf,
        /// Directory of relative-depth PFM rasters named by frame.
        #[arg(long, value_name = "DIR")]
        depth: PathBuf,
        /// Directory of metric-depth PFM rasters (keyframes only is fine).
        #[arg(long = "metric-depth", value_name = "DIR")]
        metric_depth: PathBuf,
        /// Directory of per-pixel confidence PFM rasters, if available.
        #[arg(long, value_name = "DIR")]
        confidence: Option<PathBuf>,
        /// Frame rate of the source video.
        #[arg(long)]
        fps: f64,
        /// Image width in pixels.
        #[arg(long)]
        width: u32,
        /// Image height in pixels.
        #[arg(long)]
        height: u32,
        /// Output path: scene CSV on success, rejection record JSON when the
        /// video is discarded.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score generated scenes, against ground truth or standalone.
    Metrics {
        /// Generated scene CSVs; several pool into one report.
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        gen: Vec<PathBuf>,
        /// Ground-truth scene CSV (required by i2v, refused by t2v).
        #[arg(long, value_name = "FILE")]
        gt: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Report path; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Directory for plot-data CSVs (fundamental diagram, polar
        /// nearest-neighbor histogram).
        #[arg(long = "plots-out", value_name = "DIR")]
        plots_out: Option<PathBuf>,
    },
    /// Simulate a synthetic crowd scene.
    Synth {
        /// Scenario TOML; unset fields take the documented defaults.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Output scene CSV.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print dataset statistics for a scene.
    Stats {
        /// Scene CSV.
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
    },
}

/// A terminal failure: `code` is both the process exit code and the JSON
/// `code` field.
struct Failure {
    code: u8,
    message: String,
    context: Value,
}

impl Failure {
    fn usage(message: impl Into<String>, context: Value) -> Failure {
        Failure { code: 2, message: message.into(), context }
    }

    fn internal(message: impl Into<String>, context: Value) -> Failure {
        Failure { code: 1, message: message.into(), context }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        Failure::usage(
            format!("cannot read {}", path.display()),
            json!({ "path": path.display().to_string(), "io": e.to_string() }),
        )
    })
}

fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| {
        Failure::internal(
            format!("cannot write {}", path.display()),
            json!({ "path": path.display().to_string(), "io": e.to_string() }),
        )
    })
}

fn parse_failure(what: &str, path: &Path, err: impl std::fmt::Display) -> Failure {
    Failure::usage(
        format!("{what} {}: {err}", path.display()),
        json!({ "path": path.display().to_string() }),
    )
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_toml_str(&read_input(path)?)
            .map_err(|e| parse_failure("invalid config", path, e))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_scene(path: &Path) -> Result<Scene, Failure> {
    read_scene(&read_input(path)?).map_err(|e| parse_failure("invalid scene", path, e))
}

fn load_cameras(path: &Path) -> Result<Vec<CameraFrame>, Failure> {
    read_cameras(&read_input(path)?).map_err(|e| parse_failure("invalid cameras", path, e))
}

/// Depth rasters stored one PFM per frame, file stem = frame number.
struct DirDepthSource {
    files: BTreeMap<usize, PathBuf>,
}

impl DirDepthSource {
    fn scan(dir: &Path) -> Result<Self, Failure> {
        let entries = fs::read_dir(dir).map_err(|e| {
            Failure::usage(
                format!("cannot read directory {}", dir.display()),
                json!({ "path": dir.display().to_string(), "io": e.to_string() }),
            )
        })?;
        let mut files = BTreeMap::new();
        for entry in entries {
            let entry = entry.map_err(|e| {
                Failure::internal(
                    format!("cannot list {}", dir.display()),
                    json!({ "io": e.to_string() }),
                )
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("pfm") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let frame: usize = stem.parse().map_err(|_| {
                Failure::usage(
                    format!("depth file name `{stem}.pfm` is not a frame number"),
                    json!({ "path": path.display().to_string() }),
                )
            })?;
            files.insert(frame, path);
        }
        Ok(DirDepthSource { files })
    }
}

impl DepthSource for DirDepthSource {
    fn depth(&mut self, frame: usize) -> Result<Option<DepthRaster>, GeometryError> {
        match self.files.get(&frame) {
            Some(path) => {
                let file = fs::File::open(path)?;
                read_pfm(&mut BufReader::new(file)).map(Some)
            }
            None => Ok(None),
        }
    }
}

fn pipeline_failure(err: PipelineError) -> Failure {
    match err {
        PipelineError::NoKeyframes | PipelineError::NoAgents => {
            Failure::usage(err.to_string(), json!({}))
        }
        PipelineError::Geometry(GeometryError::Io(e)) => {
            Failure::internal(format!("io failure: {e}"), json!({}))
        }
        PipelineError::Geometry(e) => Failure::usage(e.to_string(), json!({})),
        PipelineError::Traj(e) => Failure::usage(e.to_string(), json!({})),
    }
}

fn load_tracklets(
    path: &Path,
    width: u32,
    height: u32,
) -> Result<crowdtraj::TrackletSet, Failure> {
    parse_tracklets(&read_input(path)?, width, height)
        .map_err(|e| parse_failure("invalid tracklets", path, e))
}

fn cmd_project_i2v(
    cfg: &Config,
    tracklets: &Path,
    homography: &Path,
    fps: f64,
    width: u32,
    height: u32,
    cameras: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let tset = load_tracklets(tracklets, width, height)?;
    let h = Homography::from_text(&read_input(homography)?)
        .map_err(|e| parse_failure("invalid homography", homography, e))?;
    if let Some(path) = cameras {
        let cams = load_cameras(path)?;
        let report = staticity_check(&cams, &cfg.staticity, 1.0);
        if !report.is_static {
            return Err(Failure::usage(
                "camera is not static; the homography path requires a fixed viewpoint",
                serde_json::to_value(&report).unwrap_or(Value::Null),
            ));
        }
    }
    let (scene, diagnostics) =
        project_tracklets_to_scene(&tset, &h, fps).map_err(pipeline_failure)?;
    write_output(out, &write_scene(&scene))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "outcome": "projected",
            "out": out.display().to_string(),
            "diagnostics": diagnostics,
        }))
        .expect("diagnostics serialize")
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct_t2v(
    cfg: &Config,
    tracklets: &Path,
    cameras: &Path,
    depth: &Path,
    metric_depth: &Path,
    confidence: Option<&Path>,
    fps: f64,
    width: u32,
    height: u32,
    out: &Path,
) -> Result<(), Failure> {
    let tset = load_tracklets(tracklets, width, height)?;
    let cams = load_cameras(cameras)?;
    let mut rel = DirDepthSource::scan(depth)?;
    let mut metric = DirDepthSource::scan(metric_depth)?;
    let mut conf = match confidence {
        Some(dir) => Some(DirDepthSource::scan(dir)?),
        None => None,
    };
    let outcome = reconstruct_t2v(
        &tset,
        &cams,
        &mut rel,
        &mut metric,
        conf.as_mut().map(|c| c as &mut dyn DepthSource),
        fps,
        cfg,
    )
    .map_err(pipeline_failure)?;
    match outcome {
        ReconstructionOutcome::Reconstructed { scene, diagnostics } => {
            write_output(out, &write_scene(&scene))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "outcome": "reconstructed",
                    "out": out.display().to_string(),
                    "diagnostics": diagnostics,
                }))
                .expect("diagnostics serialize")
            );
        }
        ReconstructionOutcome::Rejected(record) => {
            let body = serde_json::to_string_pretty(&json!({
                "outcome": "rejected",
                "record": record,
            }))
            .expect("record serialize");
            write_output(out, &(body.clone() + "\n"))?;
            println!("{body}");
        }
    }
    Ok(())
}

fn metrics_failure(err: MetricsError) -> Failure {
    match err {
        MetricsError::NeedGroundTruth
        | MetricsError::UnexpectedGroundTruth
        | MetricsError::NoScenes
        | MetricsError::EmptyScene(_) => Failure::usage(err.to_string(), json!({})),
        MetricsError::Kinematics(e) => Failure::internal(e.to_string(), json!({})),
    }
}

fn format_csv_field(v: f64) -> String {
    // Shortest round-trip decimal keeps files diff-friendly and exact.
    format!("{v}")
}

fn write_plot_csvs(dir: &Path, label: &str, ev: &Evaluation, cfg: &Config) -> Result<(), Failure> {
    let analyses: Vec<&crowdtraj::metrics::SceneAnalysis> = match label {
        "gt" => ev.gt.iter().collect(),
        _ => ev.gen.iter().collect(),
    };
    let mut flow = FlowSamples::default();
    let mut nn = NnSamples::default();
    for a in analyses {
        flow.append(flow_samples(&a.frames, &cfg.metrics));
        nn.append(nn_samples(&a.frames, &cfg.metrics));
    }
    let fd = fundamental_diagram(&flow.triples, cfg.metrics.fd_density_max, cfg.metrics.fd_bins);
    let mut speed_csv = String::from("bin,median,q1,q3\n");
    let mut flow_csv = String::from("bin,median,q1,q3\n");
    for bin in &fd {
        speed_csv.push_str(&format!(
            "{},{},{},{}\n",
            format_csv_field(bin.density_center),
            format_csv_field(bin.speed.median),
            format_csv_field(bin.speed.q1),
            format_csv_field(bin.speed.q3),
        ));
        flow_csv.push_str(&format!(
            "{},{},{},{}\n",
            format_csv_field(bin.density_center),
            format_csv_field(bin.flow.median),
            format_csv_field(bin.flow.q1),
            format_csv_field(bin.flow.q3),
        ));
    }
    let polar = nn_polar_histogram(
        &nn.heading_offsets,
        cfg.metrics.polar_angle_bins,
        cfg.metrics.polar_radius_bins,
        cfg.metrics.nn_radius_m,
    );
    let mut polar_csv = String::from("angle_bin,radius_bin,mass\n");
    for (a, row) in polar.mass.iter().enumerate() {
        for (r, mass) in row.iter().enumerate() {
            polar_csv.push_str(&format!("{a},{r},{}\n", format_csv_field(*mass)));
        }
    }
    write_output(&dir.join(format!("fd_speed_{label}.csv")), &speed_csv)?;
    write_output(&dir.join(format!("fd_flow_{label}.csv")), &flow_csv)?;
    write_output(&dir.join(format!("nn_polar_{label}.csv")), &polar_csv)?;
    Ok(())
}

fn cmd_metrics(
    cfg: &Config,
    gen: &[PathBuf],
    gt: Option<&Path>,
    mode: Mode,
    out: Option<&Path>,
    plots_out: Option<&Path>,
) -> Result<(), Failure> {
    let gen_scenes: Vec<Scene> =
        gen.iter().map(|p| load_scene(p)).collect::<Result<_, _>>()?;
    let gt_scene = gt.map(load_scene).transpose()?;
    let ev = evaluate(&gen_scenes, gt_scene.as_ref(), mode, cfg).map_err(metrics_failure)?;
    let report = ev.report.to_json_pretty();
    match out {
        Some(path) => write_output(path, &report)?,
        None => print!("{report}"),
    }
    if let Some(dir) = plots_out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::internal(
                format!("cannot create {}", dir.display()),
                json!({ "io": e.to_string() }),
            )
        })?;
        write_plot_csvs(dir, "gen", &ev, cfg)?;
        if ev.gt.is_some() {
            write_plot_csvs(dir, "gt", &ev, cfg)?;
        }
    }
    Ok(())
}

fn cmd_synth(cfg: &Config, spec: &Path, out: &Path) -> Result<(), Failure> {
    let parsed = ScenarioSpec::from_toml_str(&read_input(spec)?)
        .map_err(|e| parse_failure("invalid scenario", spec, e))?;
    let scene = simulate(&parsed, cfg.seed).map_err(|e| match e {
        SynthError::Invalid(_) | SynthError::Toml(_) => {
            parse_failure("invalid scenario", spec, e)
        }
    })?;
    write_output(out, &write_scene(&scene))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "outcome": "simulated",
            "out": out.display().to_string(),
            "stats": scene_statistics(&scene),
        }))
        .expect("stats serialize")
    );
    Ok(())
}

fn cmd_stats(scene: &Path) -> Result<(), Failure> {
    let s = load_scene(scene)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&scene_statistics(&s)).expect("stats serialize")
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::ProjectI2v { tracklets, homography, fps, width, height, cameras, out } => {
            cmd_project_i2v(
                &cfg,
                tracklets,
                homography,
                *fps,
                *width,
                *height,
                cameras.as_deref(),
                out,
            )
        }
        Command::ReconstructT2v {
            tracklets,
            cameras,
            depth,
            metric_depth,
            confidence,
            fps,
            width,
            height,
            out,
        } => cmd_reconstruct_t2v(
            &cfg,
            tracklets,
            cameras,
            depth,
            metric_depth,
            confidence.as_deref(),
            *fps,
            *width,
            *height,
            out,
        ),
        Command::Metrics { gen, gt, mode, out, plots_out } => cmd_metrics(
            &cfg,
            gen,
            gt.as_deref(),
            (*mode).into(),
            out.as_deref(),
            plots_out.as_deref(),
        ),
        Command::Synth { spec, out } => cmd_synth(&cfg, spec, out),
        Command::Stats { scene } => cmd_stats(scene),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let failure = Failure::usage(e.to_string(), json!({ "kind": "argument parsing" }));
            eprintln!(
                "{}",
                json!({
                    "code": failure.code,
                    "message": failure.message,
                    "context": failure.context,
                })
            );
            return ExitCode::from(failure.code);
        }
        Err(e) => {
            // --help and --version land here.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!(
                "{}",
                json!({
                    "code": failure.code,
                    "message": failure.message,
                    "context": failure.context,
                })
            );
            ExitCode::from(failure.code)
        }
    }
}

// Validation errors must exit 2, internal faults 1, and rejection is success;
// the integration tests drive the compiled binary to hold this contract.
#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mode_argument_maps_to_metric_modes() {
        assert!(matches!(Mode::from(ModeArg::I2v), Mode::I2V));
        assert!(matches!(Mode::from(ModeArg::T2v), Mode::T2V));
    }
}
