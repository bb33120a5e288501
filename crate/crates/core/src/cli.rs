//! `nlheat` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 numerical overflow, 4 verification failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, RunConfig};
use crate::grid::{Boundary, RadialField, RadialGrid};
use crate::lemmas::{
    exponent_identity_residual, gronwall_suite, integral_sweep, reference_decay_fit, semigroup_smoothing_check,
    sweep_cases, write_sweep_csv, DecayFit,
};
use crate::params::ModelParams;
use crate::similarity::{
    default_delta, extract_frame, final_profile_extract, frame_report, solve_t0, FinalProfileTable, FrameReport,
};
use crate::solver::{
    estimate_t, load_checkpoint, profile_seed, resume, run_until_blowup, save_checkpoint, BlowupEstimate, Status,
    Trajectory,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Failure = 1,
    Config = 2,
    Overflow = 3,
    Verification = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
    fn config(message: impl std::fmt::Display) -> Self {
        Self::new(ExitCode::Config, message.to_string())
    }
    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(ExitCode::Failure, format!("{}: {e}", path.display()))
    }
}

type CliResult = Result<ExitCode, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nlheat", version, about = "Blow-up laboratory for a non-local gradient-perturbed semilinear heat equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Configuration file (flat `key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Print machine-readable JSON only.
    #[arg(long)]
    pub json: bool,
    /// Validate inputs and describe the work without doing it.
    #[arg(long)]
    pub dry_run: bool,
    /// Override a configuration key, e.g. `--set intervals=512`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate until blow-up and fit the blow-up time.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint instead of the profile seed.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a parameter grid in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axes as `key=lo:hi:n` (or `key=value`), comma separated.
        #[arg(long)]
        grid: String,
    },
    /// Similarity-frame diagnostics for a finished run.
    Frames {
        #[command(flatten)]
        common: Common,
        /// Directory of the run (defaults to --out).
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value = "0.05,0.1,0.2", allow_hyphen_values = true)]
        x0: String,
        #[arg(long = "K0", default_value = "4")]
        k0: String,
        /// Frame half-width in xi (default `2 |log(T - t0)|^{1/4}`).
        #[arg(long)]
        window: Option<f64>,
        /// Plateau radius (default: where `T - t0 = e^-2`).
        #[arg(long)]
        delta: Option<f64>,
        /// Radii for the final-profile table.
        #[arg(long, default_value = "0.05,0.075,0.1,0.15,0.2")]
        radii: String,
    },
    /// Numerical checks of the analytic lemmas.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true, default_value_t = 1.0)]
        fault_scale: f64,
    },
    /// Summarize the artifacts of a run directory.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Config } else { ExitCode::Ok };
            let _ = e.print();
            return code as i32;
        }
    };
    match execute(cli.command) {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code as i32
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Run { common, resume } => cmd_run(&common, resume.as_deref()),
        Command::Sweep { common, grid } => cmd_sweep(&common, &grid),
        Command::Frames {
            common,
            run,
            x0,
            k0,
            window,
            delta,
            radii,
        } => cmd_frames(&common, run.as_deref(), &x0, &k0, window, delta, &radii),
        Command::Verify { common, fault_scale } => cmd_verify(&common, fault_scale),
        Command::Report { common, run } => cmd_report(&common, run.as_deref()),
    }
}

fn load_config(common: &Common) -> Result<ConfigFile, CliError> {
    let mut file = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::new(ExitCode::Config, format!("{}: {e}", path.display())))?;
            ConfigFile::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    for o in &common.overrides {
        file.set(o).map_err(CliError::config)?;
    }
    Ok(file)
}

/// Comment header for CSV artifacts; deterministic for a given command and
/// parameter set.
pub fn csv_header(command: &str, params: &ModelParams) -> String {
    let p = serde_json::to_string(params).expect("params serialize");
    format!("# nlheat {VERSION}\n# command: {command}\n# params: {p}\n")
}

/// JSON artifact wrapper carrying the tool version and parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: ModelParams,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, params: ModelParams, body: T) -> Self {
        Self {
            tool: "nlheat".into(),
            version: VERSION.into(),
            command: command.into(),
            params,
            body,
        }
    }
}

fn write_file(path: &Path, content: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(ExitCode::Failure, format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    /// Stepping is deterministic; there is no random seed to record.
    pub deterministic: bool,
    pub resumed_from: Option<PathBuf>,
    pub config: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: Status,
    pub steps: u64,
    pub t_final: f64,
    pub final_supnorm: f64,
    pub estimate: Option<BlowupEstimate>,
    pub estimate_error: Option<String>,
    pub overflow: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Derived {
    b: f64,
    gamma: f64,
    kappa: f64,
    beta: f64,
    beta_window: String,
    seed_sup: f64,
    diffusion_dt_limit: f64,
}

fn derived(cfg: &RunConfig) -> Derived {
    let p = cfg.params();
    Derived {
        b: p.b(),
        gamma: p.gamma(),
        kappa: p.kappa(),
        beta: p.beta(),
        beta_window: p.beta_window().to_string(),
        seed_sup: cfg.t_star.powf(-p.rate()) * crate::profile::f_profile(0.0, p),
        diffusion_dt_limit: cfg.solver.grid.diffusion_dt_limit(),
    }
}

/// Runs the configured simulation from the profile seed.
pub fn simulate(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let u0 = profile_seed(cfg.solver.grid, cfg.params(), cfg.t_star).map_err(CliError::config)?;
    run_until_blowup(&u0, cfg.solver).map_err(CliError::config)
}

fn summarize(traj: &Trajectory) -> RunSummary {
    let (estimate, estimate_error) = match estimate_t(&traj.history, &traj.config.params) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let last = traj.history.last().expect("history starts with the initial state");
    RunSummary {
        status: traj.status,
        steps: traj.steps,
        t_final: last.t,
        final_supnorm: last.supnorm,
        estimate,
        estimate_error,
        overflow: traj.overflow.clone(),
    }
}

fn write_run_artifacts(dir: &Path, command: &str, traj: &Trajectory, summary: &RunSummary) -> Result<(), CliError> {
    let params = traj.config.params;
    let mut csv = Vec::new();
    traj.write_history_csv(&mut csv, &csv_header(command, &params))
        .expect("writing to memory");
    write_file(&dir.join("trajectory.csv"), &csv)?;
    write_file(&dir.join("checkpoint.json"), save_checkpoint(traj).as_bytes())?;
    write_json(&dir.join("estimate.json"), &Envelope::new(command, params, summary))
}

fn cmd_run(common: &Common, resume_from: Option<&Path>) -> CliResult {
    let file = load_config(common)?;
    let cfg = file.build().map_err(CliError::config)?;
    if common.dry_run {
        let d = derived(&cfg);
        if common.json {
            println!("{}", serde_json::to_string_pretty(&Envelope::new("run", *cfg.params(), &d)).expect("serializes"));
        } else {
            println!("{}", cfg.params());
            println!("b = {}\ngamma = {}\nkappa = {}\nbeta = {}\nbeta window = {}", d.b, d.gamma, d.kappa, d.beta, d.beta_window);
            println!("seed sup-norm = {}\ndiffusion dt limit = {:e}", d.seed_sup, d.diffusion_dt_limit);
        }
        return Ok(ExitCode::Ok);
    }
    let traj = match resume_from {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let start = load_checkpoint(&text).map_err(CliError::config)?;
            resume(&start, cfg.solver.budget).map_err(CliError::config)?
        }
        None => simulate(&cfg)?,
    };
    let summary = summarize(&traj);
    let manifest = Manifest {
        config_path: common.config.clone(),
        out: common.out.clone(),
        deterministic: true,
        resumed_from: resume_from.map(Path::to_path_buf),
        config: file.to_text(),
    };
    write_file(&common.out.join("config.toml"), file.to_text().as_bytes())?;
    write_json(&common.out.join("manifest.json"), &Envelope::new("run", *cfg.params(), &manifest))?;
    write_run_artifacts(&common.out, "run", &traj, &summary)?;
    if common.json {
        println!("{}", serde_json::to_string_pretty(&Envelope::new("run", *cfg.params(), &summary)).expect("serializes"));
    } else {
        print_summary(&summary);
        println!("artifacts in {}", common.out.display());
    }
    Ok(if traj.status == Status::Overflowed {
        ExitCode::Overflow
    } else {
        ExitCode::Ok
    })
}

fn print_summary(s: &RunSummary) {
    println!("status: {:?} after {} steps, t = {}, sup = {:e}", s.status, s.steps, s.t_final, s.final_supnorm);
    match (&s.estimate, &s.estimate_error) {
        (Some(e), _) => println!(
            "T_est = {}  kappa_est = {}  residual = {:.3e}  ({} points)",
            e.t_est, e.kappa_est, e.residual, e.points
        ),
        (None, Some(err)) => println!("no blow-up estimate: {err}"),
        _ => {}
    }
    if let Some(o) = &s.overflow {
        println!("overflow: {o}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

/// Parses `key=lo:hi:n` or `key=value` axes separated by commas.
pub fn parse_grid(spec: &str) -> Result<Vec<Axis>, String> {
    let mut axes = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, range) = part.split_once('=').ok_or_else(|| format!("axis `{part}` lacks `=`"))?;
        let nums: Vec<&str> = range.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("axis `{part}`: {e}"));
        let values = match nums.as_slice() {
            [v] => vec![num(v)?],
            [lo, hi, n] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let n: usize = n.trim().parse().map_err(|e| format!("axis `{part}`: count: {e}"))?;
                match n {
                    0 => return Err(format!("axis `{part}` has zero points")),
                    1 => vec![lo],
                    _ => (0..n)
                        .map(|k| if k == n - 1 { hi } else { tidy(lo + (hi - lo) * k as f64 / (n - 1) as f64) })
                        .collect(),
                }
            }
            _ => return Err(format!("axis `{part}`: expected lo:hi:n or a single value")),
        };
        if axes.iter().any(|a: &Axis| a.key == key.trim()) {
            return Err(format!("axis `{}` given twice", key.trim()));
        }
        axes.push(Axis {
            key: key.trim().to_string(),
            values,
        });
    }
    if axes.is_empty() {
        return Err("empty sweep grid".into());
    }
    Ok(axes)
}

// drops linspace rounding noise such as 0.10000000000000003
fn tidy(v: f64) -> f64 {
    format!("{v:.12e}").parse().expect("formatted float parses")
}

/// Cartesian product, last axis fastest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    points
}

fn format_value(key: &str, v: f64) -> String {
    let integral = matches!(key, "dim" | "intervals" | "record_stride" | "max_steps");
    if integral {
        format!("{}", v as i64)
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn cmd_sweep(common: &Common, spec: &str) -> CliResult {
    let base = load_config(common)?;
    let axes = parse_grid(spec).map_err(CliError::config)?;
    let points = grid_points(&axes);
    let mut configs = Vec::with_capacity(points.len());
    for (i, point) in points.iter().enumerate() {
        let mut file = base.clone();
        for (axis, v) in axes.iter().zip(point) {
            file.set(&format!("{}={}", axis.key, format_value(&axis.key, *v)))
                .map_err(|e| CliError::config(format!("sweep point {i}: {e}")))?;
        }
        let cfg = file
            .build()
            .map_err(|e| CliError::config(format!("sweep point {i} ({}): {e}", describe(&axes, point))))?;
        configs.push((file, cfg));
    }
    if common.dry_run {
        for (i, point) in points.iter().enumerate() {
            println!("{i:03}: {}", describe(&axes, point));
        }
        return Ok(ExitCode::Ok);
    }
    let results: Vec<Result<RunSummary, CliError>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, (file, cfg))| {
            let dir = common.out.join(format!("point_{i:03}"));
            let traj = simulate(cfg)?;
            let summary = summarize(&traj);
            write_file(&dir.join("config.toml"), file.to_text().as_bytes())?;
            write_run_artifacts(&dir, "sweep", &traj, &summary)?;
            Ok(summary)
        })
        .collect();

    let mut csv = String::new();
    let params = *configs[0].1.params();
    csv.push_str(&format!("# nlheat {VERSION}\n# command: sweep\n# grid: {spec}\n"));
    let keys: Vec<&str> = axes.iter().map(|a| a.key.as_str()).collect();
    writeln!(csv, "index,{},status,steps,t_est,kappa_est,residual", keys.join(",")).expect("string");
    let mut code = ExitCode::Ok;
    let mut rows = Vec::new();
    for (i, (point, result)) in points.iter().zip(&results).enumerate() {
        let summary = result.as_ref().map_err(|e| CliError::new(e.code, e.message.clone()))?;
        if summary.status == Status::Overflowed {
            code = ExitCode::Overflow;
        }
        let vals: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        let (t, k, r) = summary
            .estimate
            .map_or((String::new(), String::new(), String::new()), |e| {
                (e.t_est.to_string(), e.kappa_est.to_string(), format!("{:e}", e.residual))
            });
        let status = serde_json::to_value(summary.status).expect("status");
        let status = status.as_str().unwrap_or_default().to_string();
        writeln!(csv, "{i},{},{status},{},{t},{k},{r}", vals.join(","), summary.steps).expect("string");
        rows.push((i, status, summary.steps, summary.estimate));
    }
    write_file(&common.out.join("sweep.csv"), csv.as_bytes())?;
    if common.json {
        let body = serde_json::json!({
            "grid": spec,
            "points": rows.iter().map(|(i, s, steps, e)| serde_json::json!({
                "index": i, "status": s, "steps": steps, "estimate": e
            })).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&Envelope::new("sweep", params, body)).expect("serializes"));
    } else {
        print!("{}", csv.lines().skip(3).map(|l| format!("{l}\n")).collect::<String>());
    }
    Ok(code)
}

fn describe(axes: &[Axis], point: &[f64]) -> String {
    axes.iter()
        .zip(point)
        .map(|(a, v)| format!("{}={}", a.key, v))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::config(format!("{what}: `{s}`: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub x0: f64,
    pub k0: f64,
    pub csv: Option<String>,
    pub report: Option<FrameReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramesOutput {
    pub blowup_time: f64,
    pub frames: Vec<FrameEntry>,
    pub final_profile: Option<FinalProfileTable>,
    pub final_profile_error: Option<String>,
}

/// Default frame half-width for remaining time `s`.
pub fn default_window(s: f64) -> f64 {
    2.0 * s.ln().abs().powf(0.25)
}

fn cmd_frames(
    common: &Common,
    run: Option<&Path>,
    x0_list: &str,
    k0_list: &str,
    window: Option<f64>,
    delta: Option<f64>,
    radii: &str,
) -> CliResult {
    let xs = parse_list(x0_list, "--x0")?;
    let ks = parse_list(k0_list, "--K0")?;
    let radii = parse_list(radii, "--radii")?;
    if let Some(bad) = xs.iter().find(|x| **x == 0.0 || !x.is_finite()) {
        return Err(CliError::config(format!(
            "x0 = {bad} rejected: frames are centered away from the blow-up point (x0 != 0)"
        )));
    }
    if let Some(bad) = ks.iter().find(|k| !(**k > 0.0)) {
        return Err(CliError::config(format!("K0 = {bad} rejected: K0 must be positive")));
    }
    if xs.is_empty() {
        if !common.json {
            println!("no x0 values given; nothing to do");
        }
        return Ok(ExitCode::Ok);
    }
    let run_dir = run.unwrap_or(&common.out);
    let (cfg, stored) = load_run(run_dir)?;
    let t_est = stored
        .body
        .estimate
        .map(|e| e.t_est)
        .ok_or_else(|| CliError::new(ExitCode::Failure, "the run has no blow-up estimate; frames need T"))?;
    if common.dry_run {
        for &x0 in &xs {
            for &k0 in &ks {
                let d = delta.unwrap_or_else(|| default_delta(k0));
                match solve_t0(x0, k0, t_est, d) {
                    Ok(sol) => println!("x0 = {x0}, K0 = {k0}: t0 = {}, T - t0 = {:e}", sol.t0, sol.remaining),
                    Err(e) => println!("x0 = {x0}, K0 = {k0}: {e}"),
                }
            }
        }
        return Ok(ExitCode::Ok);
    }
    let traj = simulate(&cfg)?;
    let again = summarize(&traj);
    if again.estimate.map(|e| e.t_est) != Some(t_est) || again.steps != stored.body.steps {
        return Err(CliError::new(
            ExitCode::Failure,
            format!("{}: re-simulation does not reproduce the stored run (stale artifacts?)", run_dir.display()),
        ));
    }
    let pairs: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ks.iter().map(move |&k| (x, k))).collect();
    let header = csv_header("frames", cfg.params());
    let frames: Vec<FrameEntry> = pairs
        .par_iter()
        .map(|&(x0, k0)| frame_entry(&traj, x0, k0, t_est, window, delta, &common.out, &header))
        .collect::<Result<_, _>>()?;
    let (final_profile, final_profile_error) = match final_profile_extract(&traj, &radii) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let output = FramesOutput {
        blowup_time: t_est,
        frames,
        final_profile,
        final_profile_error,
    };
    write_json(&common.out.join("frames.json"), &Envelope::new("frames", *cfg.params(), &output))?;
    if common.json {
        println!("{}", serde_json::to_string_pretty(&Envelope::new("frames", *cfg.params(), &output)).expect("serializes"));
    } else {
        print_frames(&output);
    }
    Ok(ExitCode::Ok)
}

#[allow(clippy::too_many_arguments)]
fn frame_entry(
    traj: &Trajectory,
    x0: f64,
    k0: f64,
    t_est: f64,
    window: Option<f64>,
    delta: Option<f64>,
    out: &Path,
    header: &str,
) -> Result<FrameEntry, CliError> {
    let d = delta.unwrap_or_else(|| default_delta(k0));
    let failed = |e: String| FrameEntry {
        x0,
        k0,
        csv: None,
        report: None,
        error: Some(e),
    };
    let sol = match solve_t0(x0, k0, t_est, d) {
        Ok(s) => s,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let w = window.unwrap_or_else(|| default_window(sol.remaining));
    let frame = match extract_frame(traj, x0, k0, t_est, d, w) {
        Ok(f) => f,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let name = format!("frame_x0_{x0}_K0_{k0}.csv");
    let mut csv = Vec::new();
    frame.write_csv(&mut csv, header, true).expect("writing to memory");
    write_file(&out.join(&name), &csv)?;
    Ok(FrameEntry {
        x0,
        k0,
        csv: Some(name),
        report: Some(frame_report(&frame, 1.0)),
        error: None,
    })
}

fn print_frames(out: &FramesOutput) {
    println!("T_est = {}", out.blowup_time);
    println!(
        "{:>8} {:>5} {:>12} {:>10} {:>10} {:>10} {:>10}",
        "x0", "K0", "T-t0", "eps0", "M", "w_small", "v_sharp"
    );
    for f in &out.frames {
        match (&f.report, &f.error) {
            (Some(r), _) => println!(
                "{:>8} {:>5} {:>12.4e} {:>10.4} {:>10.4} {:>10.4} {:>10.4}{}",
                f.x0,
                f.k0,
                r.remaining,
                r.eps0_measured,
                r.m_measured,
                r.w_sup_decay.value,
                r.v_minus_vk0_sup.value,
                if r.window_clipped { "  (window clipped)" } else { "" }
            ),
            (None, Some(e)) => println!("{:>8} {:>5} {e}", f.x0, f.k0),
            _ => {}
        }
    }
    if let Some(t) = &out.final_profile {
        println!("{:>8} {:>12} {:>12} {:>8}", "r", "u_last", "u_final", "ratio");
        for row in &t.rows {
            println!("{:>8} {:>12.5} {:>12.5} {:>8.4}", row.r, row.u_last, row.predicted, row.ratio);
        }
    }
    if let Some(e) = &out.final_profile_error {
        println!("final profile: {e}");
    }
}

fn load_run(dir: &Path) -> Result<(RunConfig, Envelope<RunSummary>), CliError> {
    let manifest: Envelope<Manifest> = read_json(&dir.join("manifest.json"))?;
    if manifest.body.resumed_from.is_some() {
        return Err(CliError::new(
            ExitCode::Failure,
            "frames re-simulate from the profile seed; resumed runs are not supported",
        ));
    }
    let file = ConfigFile::parse(&manifest.body.config).map_err(CliError::config)?;
    let cfg = file.build().map_err(CliError::config)?;
    let stored: Envelope<RunSummary> = read_json(&dir.join("estimate.json"))?;
    Ok((cfg, stored))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Distance to failure; negative when failing.
    pub worst_margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub decay_fit: DecayFit,
}

/// The verification battery; `fault_scale` multiplies every bound (1 for
/// a real run).
pub fn verify_all(fault_scale: f64) -> (VerifyReport, Vec<crate::lemmas::SweepPoint>) {
    let mut checks = Vec::new();

    let mut sweep = integral_sweep(&sweep_cases());
    for p in &mut sweep {
        p.bound *= fault_scale;
        p.margin = p.bound - p.numeric;
    }
    let worst = sweep
        .iter()
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .expect("non-empty sweep");
    checks.push(CheckResult {
        name: "integral bound".into(),
        passed: worst.margin >= -1e-6,
        worst_margin: worst.margin + 1e-6,
        detail: format!(
            "{} points; tightest at alpha = {}, theta = {}, tau = {} (numeric {}, bound {})",
            sweep.len(),
            worst.case.alpha,
            worst.case.theta,
            worst.case.tau,
            worst.numeric,
            worst.bound
        ),
    });

    let g = gronwall_suite(1000, 64, 0x5eed, fault_scale);
    checks.push(CheckResult {
        name: "gronwall".into(),
        passed: g.worst_excess <= 1e-10,
        worst_margin: 1e-10 - g.worst_excess,
        detail: format!("{} instances x {} samples", g.instances, g.samples + 1),
    });

    let e = exponent_identity_residual(1000, 11);
    checks.push(CheckResult {
        name: "exponent identity".into(),
        passed: e <= 1e-14,
        worst_margin: 1e-14 - e,
        detail: format!("max residual {e:e} over 1000 parameter tuples"),
    });

    checks.extend(semigroup_checks(fault_scale));

    let fit = reference_decay_fit(65536).expect("reference window is populated");
    let slack = 0.05 * fault_scale;
    let off = (fit.slope - fit.predicted_slope).abs();
    checks.push(CheckResult {
        name: "non-local decay".into(),
        passed: off <= slack && fit.c_eta.is_finite(),
        worst_margin: slack - off,
        detail: format!(
            "slope {} vs {} (log corrected), C_eta = {} at eta = {}",
            fit.slope, fit.predicted_slope, fit.c_eta, fit.eta
        ),
    });

    let passed = checks.iter().all(|c| c.passed);
    (
        VerifyReport {
            passed,
            checks,
            decay_fit: fit,
        },
        sweep,
    )
}

fn semigroup_checks(fault_scale: f64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let grid = RadialGrid::new(1.0, 200, 1).expect("grid");
    let spike: Vec<f64> = (0..grid.len())
        .map(|i| match i {
            90..=110 if i % 2 == 0 => 1.0,
            90..=110 => -1.0,
            _ => 0.0,
        })
        .collect();
    let spike = RadialField::new(grid, spike, 0.0).expect("finite");
    let r = semigroup_smoothing_check(&[1e-5, 1e-4, 1e-3, 1e-2], &[spike], Boundary::DirichletZero)
        .expect("valid smoothing setup");
    let limit = 1.0 + 1e-6;
    out.push(CheckResult {
        name: "maximum principle".into(),
        passed: r.worst_sup_ratio <= limit * fault_scale,
        worst_margin: limit * fault_scale - r.worst_sup_ratio,
        detail: format!("alternating spike, worst sup ratio {}", r.worst_sup_ratio),
    });

    let ones = RadialField::from_fn(RadialGrid::new(1.0, 64, 1).expect("grid"), 0.0, |_| 1.0).expect("finite");
    let r = semigroup_smoothing_check(&[0.01, 0.1, 1.0], &[ones], Boundary::NeumannZero).expect("valid smoothing setup");
    let dev = r.samples.iter().map(|s| (s.sup_ratio - 1.0).abs()).fold(0.0, f64::max);
    out.push(CheckResult {
        name: "constants invariant".into(),
        passed: dev <= 1e-12,
        worst_margin: 1e-12 - dev,
        detail: "f = 1 with zero-flux closure".into(),
    });

    let s0: f64 = 0.05;
    let grid = RadialGrid::new(8.0, 1600, 1).expect("grid");
    let gauss = RadialField::from_fn(grid, 0.0, |r| (-r * r / (2.0 * s0 * s0)).exp()).expect("finite");
    let times: Vec<f64> = (0..=40).map(|k| 10f64.powf(-4.0 + f64::from(k) / 10.0)).collect();
    let r = semigroup_smoothing_check(&times, &[gauss], Boundary::DirichletZero).expect("valid smoothing setup");
    let bound = 2.0 * (2.0 * std::f64::consts::E).powf(-0.5) * fault_scale;
    out.push(CheckResult {
        name: "gradient smoothing".into(),
        passed: r.grad_constant <= bound && r.worst_sup_ratio <= 1.0 + 1e-12,
        worst_margin: bound - r.grad_constant,
        detail: format!(
            "narrow Gaussian: sup sqrt(t)|d_r S(t)f| / |f| = {} (closed form peak (8e)^-1/2 = {})",
            r.grad_constant,
            (8.0 * std::f64::consts::E).powf(-0.5)
        ),
    });
    out
}

fn cmd_verify(common: &Common, fault_scale: f64) -> CliResult {
    if common.dry_run {
        println!("checks: integral bound (675 points), gronwall (1000 instances), exponent identity, maximum principle, constants invariant, gradient smoothing, non-local decay");
        return Ok(ExitCode::Ok);
    }
    let params = ModelParams::default();
    let (report, sweep) = verify_all(fault_scale);
    write_json(&common.out.join("verify.json"), &Envelope::new("verify", params, &report))?;
    let mut csv = Vec::new();
    write_sweep_csv(&sweep, &mut csv, &csv_header("verify", &params)).expect("writing to memory");
    write_file(&common.out.join("lemma_sweep.csv"), &csv)?;
    if common.json {
        println!("{}", serde_json::to_string_pretty(&Envelope::new("verify", params, &report)).expect("serializes"));
    } else {
        println!("{:<20} {:<6} {:>12}  detail", "check", "result", "margin");
        for c in &report.checks {
            println!(
                "{:<20} {:<6} {:>12.3e}  {}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.worst_margin,
                c.detail
            );
        }
    }
    if report.passed {
        Ok(ExitCode::Ok)
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        Err(CliError::new(
            ExitCode::Verification,
            format!("verification failed: {}", failed.join("; ")),
        ))
    }
}

fn cmd_report(common: &Common, run: Option<&Path>) -> CliResult {
    let dir = run.unwrap_or(&common.out);
    let summary: Envelope<RunSummary> = read_json(&dir.join("estimate.json"))?;
    let frames_path = dir.join("frames.json");
    let frames: Option<Envelope<FramesOutput>> = if frames_path.exists() {
        Some(read_json(&frames_path)?)
    } else {
        None
    };
    if common.json {
        let body = serde_json::json!({
            "run": summary.body,
            "frames": frames.as_ref().map(|f| &f.body),
        });
        println!("{}", serde_json::to_string_pretty(&Envelope::new("report", summary.params, body)).expect("serializes"));
    } else {
        println!("nlheat {} run in {}", summary.version, dir.display());
        println!("{}", summary.params);
        print_summary(&summary.body);
        if let Some(f) = frames {
            print_frames(&f.body);
        }
    }
    Ok(ExitCode::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        let axes = parse_grid("p=3.5:4.5:3,mu=-0.2:0.2:5").unwrap();
        assert_eq!(axes[0].values, vec![3.5, 4.0, 4.5]);
        assert_eq!(axes[1].values.len(), 5);
        assert_eq!(axes[1].values[0], -0.2);
        assert_eq!(axes[1].values[4], 0.2);
        assert_eq!(axes[1].values[3], 0.1);
        assert_eq!(grid_points(&axes).len(), 15);
        assert_eq!(grid_points(&axes)[1], vec![3.5, axes[1].values[1]]);
        assert_eq!(parse_grid("intervals=256").unwrap()[0].values, vec![256.0]);
        assert!(parse_grid("p").is_err());
        assert!(parse_grid("p=1:2").is_err());
        assert!(parse_grid("p=1:2:0").is_err());
        assert!(parse_grid("p=1,p=2").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn header_is_deterministic() {
        let p = ModelParams::default();
        assert_eq!(csv_header("run", &p), csv_header("run", &p));
        assert!(csv_header("run", &p).contains("\"p\":4"));
    }

    #[test]
    fn override_values_format() {
        assert_eq!(format_value("intervals", 512.0), "512");
        assert_eq!(format_value("p", 4.0), "4.0");
        assert_eq!(format_value("mu", -0.1), "-0.1");
    }
}
