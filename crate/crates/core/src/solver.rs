//! Method-of-lines integration of
//! `u_t = Lap u + |u|^{p-1} u + mu |u_r| J(r)` under radial symmetry,
//! where `J(r)` is the integral of `|u|^{q-1}` over the ball of radius `r`.
//!
//! Time stepping is the three-stage strong-stability-preserving Runge-Kutta
//! scheme. Each stage is a convex combination of forward-Euler steps, so the
//! heat part keeps the discrete maximum principle whenever
//! `dt <= h^2/(2N)`. The step is
//! `dt = dt_safety * min(h^2/(2N), 1/(1 + p |u|_inf^{p-1}))`; the second
//! bound resolves the local ODE time scale as `|u|_inf` grows.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    check_finite, gradient_into, laplacian_into, prefix_into, sup_abs, Power, Boundary, GridError, RadialField,
    RadialGrid,
};
use crate::params::ModelParams;
use crate::profile::f_profile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("numerical overflow at t = {time}: {detail}")]
    Overflow { time: f64, detail: String },
    #[error("insufficient growth: {0}")]
    InsufficientGrowth(String),
}

/// Which right-hand-side terms are active. Everything is on for the model;
/// the heat-only setting drives the semigroup checks and the pure-diffusion
/// tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terms {
    pub reaction: bool,
    pub nonlocal: bool,
}

impl Terms {
    pub const FULL: Terms = Terms {
        reaction: true,
        nonlocal: true,
    };
    pub const HEAT_ONLY: Terms = Terms {
        reaction: false,
        nonlocal: false,
    };
}

impl Default for Terms {
    fn default() -> Self {
        Self::FULL
    }
}

/// Stopping budget other than blow-up. A run that exhausts it ends with
/// [`Status::Completed`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Budget {
    pub max_steps: Option<u64>,
    /// Final simulated time; the last step is shortened to land on it.
    pub t_end: Option<f64>,
    /// Wall-clock limit in seconds. Runs cut by it are not reproducible.
    pub wall_secs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: RadialGrid,
    pub params: ModelParams,
    pub dt_safety: f64,
    pub blowup_cap: f64,
    pub boundary: Boundary,
    pub record_stride: u64,
    /// Also snapshot whenever the sup-norm has grown by this factor since the
    /// previous snapshot; keeps the final approach to blow-up resolved.
    #[serde(default)]
    pub record_growth: Option<f64>,
    #[serde(default)]
    pub t_hint: Option<f64>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub terms: Terms,
}

impl SolverConfig {
    pub const DEFAULT_CAP: f64 = 1e8;

    pub fn new(grid: RadialGrid, params: ModelParams) -> Self {
        Self {
            grid,
            params,
            dt_safety: 0.5,
            blowup_cap: Self::DEFAULT_CAP,
            boundary: Boundary::DirichletZero,
            record_stride: 1000,
            record_growth: Some(1.02),
            t_hint: None,
            budget: Budget {
                max_steps: Some(50_000_000),
                ..Budget::default()
            },
            terms: Terms::FULL,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(SolverError::Config(format!(
                "dt_safety must lie in (0, 1], got {}",
                self.dt_safety
            )));
        }
        if self.record_stride == 0 {
            return Err(SolverError::Config("record_stride must be >= 1".into()));
        }
        if !(self.blowup_cap.is_finite() && self.blowup_cap > 0.0) {
            return Err(SolverError::Config(format!("blowup_cap must be positive, got {}", self.blowup_cap)));
        }
        if let Some(g) = self.record_growth {
            if !(g > 1.0) {
                return Err(SolverError::Config(format!("record_growth must exceed 1, got {g}")));
            }
        }
        if self.grid.dim() != self.params.dim() {
            return Err(SolverError::Config(format!(
                "grid dimension {} differs from model dimension {}",
                self.grid.dim(),
                self.params.dim()
            )));
        }
        Ok(())
    }
}

/// Profile-seeded initial data
/// `u0(r) = T*^{-1/(p-1)} f(r / sqrt(T* |log T*|))`, the intermediate
/// profile at remaining time `T*`.
pub fn profile_seed(grid: RadialGrid, params: &ModelParams, t_star: f64) -> Result<RadialField, SolverError> {
    if !(t_star > 0.0 && t_star < 1.0) {
        return Err(SolverError::Config(format!("seed time T* must lie in (0, 1), got {t_star}")));
    }
    let amp = t_star.powf(-params.rate());
    let scale = (t_star * -t_star.ln()).sqrt();
    Ok(RadialField::from_fn(grid, 0.0, |r| amp * f_profile(r / scale, params))?)
}

/// Scratch buffers for right-hand-side evaluations.
#[derive(Debug, Clone)]
struct Workspace {
    lap: Vec<f64>,
    grad: Vec<f64>,
    prefix: Vec<f64>,
    k: Vec<f64>,
    stage1: Vec<f64>,
    stage2: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            lap: vec![0.0; n],
            grad: vec![0.0; n],
            prefix: vec![0.0; n],
            k: vec![0.0; n],
            stage1: vec![0.0; n],
            stage2: vec![0.0; n],
        }
    }
}

struct Rhs {
    config: SolverConfig,
    reaction_pow: Power,
}

impl Rhs {
    fn new(config: SolverConfig) -> Self {
        Self {
            config,
            reaction_pow: Power::new(config.params.p() - 1.0),
        }
    }

    fn eval(&self, u: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let cfg = &self.config;
        laplacian_into(&cfg.grid, u, cfg.boundary, &mut ws.lap);
        out.copy_from_slice(&ws.lap);
        if cfg.terms.reaction {
            self.reaction_pow.for_each(u, |i, m| out[i] += m * u[i]);
        }
        let mu = cfg.params.mu();
        if cfg.terms.nonlocal && mu != 0.0 {
            gradient_into(&cfg.grid, u, &mut ws.grad);
            prefix_into(&cfg.grid, u, cfg.params.q(), &mut ws.prefix);
            for ((o, g), j) in out.iter_mut().zip(&ws.grad).zip(&ws.prefix) {
                *o += mu * g.abs() * j;
            }
        }
        if cfg.boundary == Boundary::DirichletZero {
            *out.last_mut().expect("non-empty grid") = 0.0;
        }
    }
}

/// Right-hand side of the semi-discrete system for `field`.
pub fn rhs(field: &RadialField, config: &SolverConfig) -> Result<RadialField, SolverError> {
    let mut ws = Workspace::new(field.grid().len());
    let mut out = vec![0.0; field.grid().len()];
    Rhs::new(*config).eval(field.values(), &mut ws, &mut out);
    check_finite(field.grid(), &out).map_err(|e| SolverError::Overflow {
        time: field.time(),
        detail: e.to_string(),
    })?;
    Ok(RadialField::new(*field.grid(), out, field.time())?)
}

/// Step size from the stability and stiffness bounds for a state of
/// sup-norm `sup`.
pub fn step_size(config: &SolverConfig, sup: f64) -> f64 {
    let mut dt = config.grid.diffusion_dt_limit();
    if config.terms.reaction {
        let p = config.params.p();
        dt = dt.min(1.0 / (1.0 + p * sup.powf(p - 1.0)));
    }
    config.dt_safety * dt
}

/// Simulated time as an unevaluated sum `hi + lo`. Near blow-up the steps
/// fall far below the spacing of doubles around `t`, so a plain `f64` clock
/// stops advancing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Clock {
    pub hi: f64,
    pub lo: f64,
}

impl Clock {
    pub fn new(t: f64) -> Self {
        Self { hi: t, lo: 0.0 }
    }

    pub fn add(self, dt: f64) -> Self {
        let s = self.hi + dt;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (dt - bb);
        let lo = self.lo + err;
        let hi = s + lo;
        Self {
            hi,
            lo: lo - (hi - s),
        }
    }

    /// `self - other` rounded to a double.
    pub fn minus(self, other: Clock) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        (self.hi, self.lo).partial_cmp(&(other.hi, other.lo))
    }
}

/// Incremental integrator holding the current state.
pub struct Solver {
    rhs: Rhs,
    ws: Workspace,
    u: Vec<f64>,
    clock: Clock,
    sup: (usize, f64),
}

impl Solver {
    pub fn new(u0: &RadialField, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        if *u0.grid() != config.grid {
            return Err(SolverError::Config("initial field grid differs from the solver grid".into()));
        }
        let mut u = u0.values().to_vec();
        if config.boundary == Boundary::DirichletZero {
            *u.last_mut().expect("non-empty grid") = 0.0;
        }
        let sup = sup_abs(&u, config.grid, None);
        Ok(Self {
            rhs: Rhs::new(config),
            ws: Workspace::new(u.len()),
            u,
            clock: Clock::new(u0.time()),
            sup,
        })
    }

    fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.rhs.config
    }
    pub fn time(&self) -> f64 {
        self.clock.hi
    }
    pub fn clock(&self) -> Clock {
        self.clock
    }
    pub fn values(&self) -> &[f64] {
        &self.u
    }
    pub fn field(&self) -> RadialField {
        RadialField::new(self.rhs.config.grid, self.u.clone(), self.clock.hi).expect("solver state is finite")
    }
    /// Index and value of the largest `|u|`.
    pub fn sup(&self) -> (usize, f64) {
        self.sup
    }

    /// Advances one step of at most `dt_max`; returns the step used. On
    /// overflow the state is left unchanged.
    pub fn advance(&mut self, dt_max: Option<f64>) -> Result<f64, SolverError> {
        let mut dt = step_size(&self.rhs.config, self.sup.1);
        if let Some(cap) = dt_max {
            dt = dt.min(cap);
        }
        let ws = &mut self.ws;
        let mut k = std::mem::take(&mut ws.k);
        let mut s1 = std::mem::take(&mut ws.stage1);
        let mut s2 = std::mem::take(&mut ws.stage2);

        self.rhs.eval(&self.u, ws, &mut k);
        for ((a, &u), &ku) in s1.iter_mut().zip(&self.u).zip(&k) {
            *a = u + dt * ku;
        }
        self.rhs.eval(&s1, ws, &mut k);
        for (((b, &u), &a), &ka) in s2.iter_mut().zip(&self.u).zip(&s1).zip(&k) {
            *b = 0.75 * u + 0.25 * (a + dt * ka);
        }
        self.rhs.eval(&s2, ws, &mut k);
        for ((a, &u), (&b, &kb)) in s1.iter_mut().zip(&self.u).zip(s2.iter().zip(&k)) {
            *a = u / 3.0 + 2.0 / 3.0 * (b + dt * kb);
        }
        let finite = check_finite(&self.rhs.config.grid, &s1);
        let result = match finite {
            Ok(()) => {
                std::mem::swap(&mut self.u, &mut s1);
                self.clock = self.clock.add(dt);
                self.sup = sup_abs(&self.u, self.rhs.config.grid, None);
                Ok(dt)
            }
            Err(e) => Err(SolverError::Overflow {
                time: self.clock.hi,
                detail: e.to_string(),
            }),
        };
        ws.k = k;
        ws.stage1 = s1;
        ws.stage2 = s2;
        result
    }
}

/// One explicit step from `field`.
pub fn step(field: &RadialField, config: &SolverConfig) -> Result<(RadialField, f64), SolverError> {
    let mut solver = Solver::new(field, *config)?;
    let dt = solver.advance(None)?;
    Ok((solver.field(), dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    BlownUp,
    Completed,
    Overflowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub t: f64,
    /// Low-order part of the time; the exact time is `t + t_lo`.
    #[serde(default)]
    pub t_lo: f64,
    pub supnorm: f64,
    pub argmax_r: f64,
}

/// Recorded evolution: snapshots every `record_stride` accepted steps (plus
/// growth-triggered ones), and the sup-norm at every accepted step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub snapshots: Vec<RadialField>,
    pub history: Vec<HistoryEntry>,
    pub status: Status,
    pub steps: u64,
    pub overflow: Option<String>,
    last: RadialField,
}

impl Trajectory {
    /// Assembles a trajectory from externally produced snapshots (time
    /// ordered); the history gets one entry per snapshot.
    pub fn from_snapshots(config: SolverConfig, snapshots: Vec<RadialField>, status: Status) -> Self {
        assert!(!snapshots.is_empty(), "need at least one snapshot");
        let history = snapshots
            .iter()
            .map(|f| {
                let (i, m) = sup_abs(f.values(), config.grid, None);
                HistoryEntry {
                    t: f.time(),
                    t_lo: 0.0,
                    supnorm: m,
                    argmax_r: config.grid.node(i),
                }
            })
            .collect();
        Self {
            config,
            last: snapshots[snapshots.len() - 1].clone(),
            steps: snapshots.len() as u64 - 1,
            snapshots,
            history,
            status,
            overflow: None,
        }
    }

    /// Latest state (which is also the last snapshot).
    pub fn last(&self) -> &RadialField {
        &self.last
    }

    pub fn initial(&self) -> &RadialField {
        &self.snapshots[0]
    }

    /// Snapshot indices `(k, k+1)` bracketing time `t`.
    pub fn bracket(&self, t: f64) -> Option<(usize, usize)> {
        let snaps = &self.snapshots;
        if snaps.is_empty() || t < snaps[0].time() || t > snaps[snaps.len() - 1].time() {
            return None;
        }
        let hi = snaps.partition_point(|s| s.time() < t);
        if hi == 0 {
            return Some((0, 0));
        }
        Some((hi - 1, hi))
    }

    /// Writes `t,supnorm,argmax_r,dt` rows; `dt` is the time since the
    /// previous entry.
    pub fn write_history_csv<W: std::io::Write>(&self, mut out: W, header: &str) -> std::io::Result<()> {
        write!(out, "{header}")?;
        writeln!(out, "t,supnorm,argmax_r,dt")?;
        let mut prev: Option<Clock> = None;
        for h in &self.history {
            let dt = prev.map_or(0.0, |p| h.clock().minus(p));
            writeln!(out, "{},{},{},{}", h.t, h.supnorm, h.argmax_r, dt)?;
            prev = Some(h.clock());
        }
        Ok(())
    }
}

impl HistoryEntry {
    pub fn clock(&self) -> Clock {
        Clock { hi: self.t, lo: self.t_lo }
    }
}

fn entry(solver: &Solver) -> HistoryEntry {
    let (i, m) = solver.sup();
    let c = solver.clock();
    HistoryEntry {
        t: c.hi,
        t_lo: c.lo,
        supnorm: m,
        argmax_r: solver.config().grid.node(i),
    }
}

/// Integrates until the sup-norm reaches `blowup_cap`, a non-finite value
/// appears, or the budget runs out.
pub fn run_until_blowup(u0: &RadialField, config: SolverConfig) -> Result<Trajectory, SolverError> {
    let solver = Solver::new(u0, config)?;
    let (_, sup0) = solver.sup();
    if !(config.blowup_cap > sup0) {
        return Err(SolverError::Config(format!(
            "blowup_cap {} must exceed the initial sup-norm {sup0}",
            config.blowup_cap
        )));
    }
    let first = entry(&solver);
    continue_run(solver, vec![first], Vec::new(), 0)
}

fn continue_run(
    mut solver: Solver,
    mut history: Vec<HistoryEntry>,
    mut snapshots: Vec<RadialField>,
    mut steps: u64,
) -> Result<Trajectory, SolverError> {
    let config = *solver.config();
    let started = Instant::now();
    if snapshots.last().map(|s| s.time()) != Some(solver.time()) {
        snapshots.push(solver.field());
    }
    let mut snap_sup = history.last().map_or(0.0, |h| h.supnorm);
    let mut overflow = None;
    let budget = config.budget;

    let status = loop {
        let sup = history.last().map_or(0.0, |h| h.supnorm);
        if sup >= config.blowup_cap {
            break Status::BlownUp;
        }
        if budget.max_steps.is_some_and(|n| steps >= n)
            || budget.t_end.is_some_and(|t| solver.clock() >= Clock::new(t))
            || budget.wall_secs.is_some_and(|w| started.elapsed().as_secs_f64() >= w)
        {
            break Status::Completed;
        }
        let dt_max = budget.t_end.map(|t| Clock::new(t).minus(solver.clock()));
        if let Err(e) = solver.advance(dt_max) {
            overflow = Some(e.to_string());
            break Status::Overflowed;
        }
        steps += 1;
        let h = entry(&solver);
        history.push(h);
        let grown = config.record_growth.is_some_and(|g| h.supnorm >= g * snap_sup);
        if steps.is_multiple_of(config.record_stride) || grown {
            snapshots.push(solver.field());
            snap_sup = h.supnorm;
        }
    };
    if snapshots.last().map(|s| s.time()) != Some(solver.time()) {
        snapshots.push(solver.field());
    }
    Ok(Trajectory {
        config,
        last: solver.field(),
        snapshots,
        history,
        status,
        steps,
        overflow,
    })
}

/// Continues a trajectory (typically restored from a checkpoint) under a new
/// budget. The sup-norm history carries over; only the latest state is
/// needed to continue deterministically.
pub fn resume(trajectory: &Trajectory, budget: Budget) -> Result<Trajectory, SolverError> {
    let mut config = trajectory.config;
    config.budget = budget;
    let mut solver = Solver::new(trajectory.last(), config)?;
    if let Some(h) = trajectory.history.last() {
        if h.t == trajectory.last().time() {
            solver = solver.with_clock(h.clock());
        }
    }
    continue_run(solver, trajectory.history.clone(), vec![trajectory.last().clone()], trajectory.steps)
}

/// Fitted blow-up time and amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub t_est: f64,
    pub kappa_est: f64,
    pub fit_window: (f64, f64),
    /// `T_est` minus the last fitted sample time.
    pub remaining: f64,
    /// Largest `|m (T - t)^{1/(p-1)} / kappa_est - 1|` over the window.
    pub residual: f64,
    pub points: usize,
}

/// Fits `m(t)^{-(p-1)} = a (T - t)` by least squares over the last decade of
/// sup-norm growth, so that `m ~ kappa_est (T - t)^{-1/(p-1)}` with
/// `kappa_est = a^{-1/(p-1)}`. Requires two decades of growth overall.
pub fn estimate_t(history: &[HistoryEntry], params: &ModelParams) -> Result<BlowupEstimate, SolverError> {
    let first = history
        .first()
        .ok_or_else(|| SolverError::InsufficientGrowth("empty history".into()))?;
    let last = history.last().expect("non-empty");
    let min = history.iter().map(|h| h.supnorm).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || last.supnorm < 100.0 * min {
        return Err(SolverError::InsufficientGrowth(format!(
            "sup-norm grew from {} to {} (need two decades over the history starting at t = {})",
            min, last.supnorm, first.t
        )));
    }
    let floor = last.supnorm / 10.0;
    let start = history.iter().rposition(|h| h.supnorm < floor).map_or(0, |i| i + 1);
    let window = &history[start..];
    if window.len() < 3 {
        return Err(SolverError::InsufficientGrowth(format!(
            "only {} samples in the last decade of growth",
            window.len()
        )));
    }
    let e = params.p() - 1.0;
    let n = window.len() as f64;
    // times relative to the last sample keep full resolution near blow-up
    let end = window[window.len() - 1].clock();
    // and scaling by the span keeps the sums out of underflow
    let span = -window[0].clock().minus(end);
    if !(span > 0.0) {
        return Err(SolverError::InsufficientGrowth("the fit window spans no time".into()));
    }
    let rel: Vec<f64> = window.iter().map(|h| h.clock().minus(end) / span).collect();
    let t_mean = rel.iter().sum::<f64>() / n;
    let z: Vec<f64> = window.iter().map(|h| h.supnorm.powf(-e)).collect();
    let z_mean = z.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, zi) in rel.iter().zip(&z) {
        let dt = ti - t_mean;
        sxy += dt * (zi - z_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(SolverError::InsufficientGrowth(format!(
            "m^-(p-1) is not decreasing over the window (slope {slope})"
        )));
    }
    let a = -slope;
    let remaining = (t_mean + z_mean / a) * span;
    let a = a / span;
    if !(remaining > 0.0) {
        return Err(SolverError::InsufficientGrowth(format!(
            "fitted blow-up time precedes the last sample by {}",
            -remaining
        )));
    }
    let kappa_est = a.powf(-1.0 / e);
    let residual = window
        .iter()
        .zip(&rel)
        .map(|(h, ti)| (h.supnorm * (remaining - ti * span).powf(1.0 / e) / kappa_est - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(BlowupEstimate {
        t_est: end.add(remaining).hi,
        kappa_est,
        fit_window: (window[0].t, end.hi),
        remaining,
        residual,
        points: window.len(),
    })
}

/// On-disk checkpoint layout, schema version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: SolverConfig,
    pub time: f64,
    pub values: Vec<f64>,
    pub maxnorm_history: Vec<[f64; 3]>,
    /// Low-order time parts, parallel to `maxnorm_history`.
    #[serde(default)]
    pub maxnorm_history_lo: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("corrupted checkpoint: {0}")]
    Corrupted(String),
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn from_trajectory(trajectory: &Trajectory) -> Self {
        Self {
            version: Self::VERSION,
            config: trajectory.config,
            time: trajectory.last().time(),
            values: trajectory.last().values().to_vec(),
            maxnorm_history: trajectory.history.iter().map(|h| [h.t, h.supnorm, h.argmax_r]).collect(),
            maxnorm_history_lo: trajectory.history.iter().map(|h| h.t_lo).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CheckpointError::Corrupted(e.to_string()))?;
        let version = raw
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CheckpointError::Corrupted("missing version tag".into()))?;
        if version != u64::from(Self::VERSION) {
            return Err(CheckpointError::Version {
                found: version,
                expected: Self::VERSION,
            });
        }
        serde_json::from_value(raw).map_err(|e| CheckpointError::Corrupted(e.to_string()))
    }

    /// Rebuilds a one-snapshot trajectory positioned at the saved state.
    pub fn into_trajectory(self) -> Result<Trajectory, CheckpointError> {
        let field = RadialField::new(self.config.grid, self.values, self.time)
            .map_err(|e| CheckpointError::Corrupted(e.to_string()))?;
        if !self.maxnorm_history_lo.is_empty() && self.maxnorm_history_lo.len() != self.maxnorm_history.len() {
            return Err(CheckpointError::Corrupted("maxnorm_history_lo length mismatch".into()));
        }
        let history: Vec<HistoryEntry> = self
            .maxnorm_history
            .iter()
            .enumerate()
            .map(|(i, &[t, supnorm, argmax_r])| HistoryEntry {
                t,
                t_lo: self.maxnorm_history_lo.get(i).copied().unwrap_or(0.0),
                supnorm,
                argmax_r,
            })
            .collect();
        let sup = history.last().map_or(0.0, |h| h.supnorm);
        let status = if sup >= self.config.blowup_cap {
            Status::BlownUp
        } else {
            Status::Running
        };
        Ok(Trajectory {
            config: self.config,
            snapshots: vec![field.clone()],
            steps: history.len().saturating_sub(1) as u64,
            history,
            status,
            overflow: None,
            last: field,
        })
    }
}

pub fn save_checkpoint(trajectory: &Trajectory) -> String {
    Checkpoint::from_trajectory(trajectory).to_json()
}

pub fn load_checkpoint(text: &str) -> Result<Trajectory, CheckpointError> {
    Checkpoint::from_json(text)?.into_trajectory()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config(m: usize, r: f64, params: ModelParams) -> SolverConfig {
        SolverConfig::new(RadialGrid::new(r, m, params.dim()).unwrap(), params)
    }

    #[test]
    fn rhs_of_constants_is_pure_reaction() {
        for mu in [0.0, 0.1, -0.7] {
            let params = ModelParams::validate(4.0, 3.0, mu, 1, None).unwrap();
            let mut cfg = config(32, 1.0, params);
            cfg.boundary = Boundary::NeumannZero;
            let u = RadialField::from_fn(cfg.grid, 0.0, |_| 1.5).unwrap();
            let out = rhs(&u, &cfg).unwrap();
            for v in out.values() {
                assert_relative_eq!(*v, 1.5f64.powi(4), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn rhs_checks_dirichlet_node() {
        let cfg = config(16, 1.0, ModelParams::default());
        let u = RadialField::from_fn(cfg.grid, 0.0, |r| 1.0 - r * r).unwrap();
        let out = rhs(&u, &cfg).unwrap();
        assert_eq!(*out.values().last().unwrap(), 0.0);
    }

    #[test]
    fn rhs_flags_overflow() {
        let cfg = config(16, 1.0, ModelParams::default());
        let u = RadialField::from_fn(cfg.grid, 0.0, |r| if r < 0.1 { 1e100 } else { 0.0 }).unwrap();
        assert!(matches!(rhs(&u, &cfg), Err(SolverError::Overflow { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(16, 1.0, ModelParams::default());
        cfg.dt_safety = 1.5;
        assert!(cfg.validate().is_err());
        cfg.dt_safety = 0.5;
        cfg.record_stride = 0;
        assert!(cfg.validate().is_err());
        cfg.record_stride = 1;
        cfg.record_growth = Some(1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dt_shrinks_as_sup_grows() {
        let cfg = config(64, 1.0, ModelParams::default());
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let sup = 10f64.powf(f64::from(k) / 6.0);
            let dt = step_size(&cfg, sup);
            assert!(dt <= prev);
            prev = dt;
        }
        assert!(step_size(&cfg, 1e6) < step_size(&cfg, 1e3));
    }

    #[test]
    fn zero_data_completes() {
        let mut cfg = config(32, 1.0, ModelParams::default());
        cfg.budget = Budget {
            max_steps: Some(500),
            ..Budget::default()
        };
        let traj = run_until_blowup(&RadialField::zeros(cfg.grid, 0.0), cfg).unwrap();
        assert_eq!(traj.status, Status::Completed);
        assert_eq!(traj.steps, 500);
        assert!(traj.last().values().iter().all(|v| *v == 0.0));
        assert_eq!(traj.history.len(), 501);
    }

    #[test]
    fn cap_below_initial_sup_is_rejected() {
        let mut cfg = config(32, 1.0, ModelParams::default());
        cfg.blowup_cap = 0.5;
        let u = RadialField::from_fn(cfg.grid, 0.0, |_| 1.0).unwrap();
        assert!(matches!(run_until_blowup(&u, cfg), Err(SolverError::Config(_))));
    }

    #[test]
    fn history_times_increase_and_snapshots_are_strided() {
        let mut cfg = config(64, 1.0, ModelParams::default());
        cfg.record_stride = 7;
        cfg.record_growth = None;
        cfg.budget.max_steps = Some(50);
        let u = profile_seed(cfg.grid, &cfg.params, 0.01).unwrap();
        let traj = run_until_blowup(&u, cfg).unwrap();
        assert!(traj.history.windows(2).all(|w| w[1].clock() > w[0].clock()));
        // initial, steps 7..49 every 7, final
        assert_eq!(traj.snapshots.len(), 1 + 7 + 1);
        assert_eq!(traj.last().time(), traj.history.last().unwrap().t);
    }

    #[test]
    fn estimate_recovers_exact_power_law() {
        let params = ModelParams::default();
        let kappa = params.kappa();
        let history: Vec<HistoryEntry> = (0..400)
            .map(|k| {
                let s = 0.1 * 10f64.powf(-f64::from(k) / 50.0);
                let t = 0.8 - s;
                HistoryEntry {
                    t,
                    t_lo: 0.0,
                    supnorm: kappa * (0.8 - t).powf(-1.0 / 3.0),
                    argmax_r: 0.0,
                }
            })
            .collect();
        let est = estimate_t(&history, &params).unwrap();
        assert!((est.t_est - 0.8).abs() < 1e-9, "{est:?}");
        assert!((est.kappa_est - kappa).abs() < 1e-9, "{est:?}");
        assert!(est.fit_window.1 < est.t_est);
    }

    #[test]
    fn estimate_rejects_short_growth() {
        let params = ModelParams::default();
        let history: Vec<HistoryEntry> = (0..10)
            .map(|k| HistoryEntry {
                t: f64::from(k),
                t_lo: 0.0,
                supnorm: 1.0 + f64::from(k),
                argmax_r: 0.0,
            })
            .collect();
        assert!(matches!(
            estimate_t(&history, &params),
            Err(SolverError::InsufficientGrowth(_))
        ));
    }

    #[test]
    fn checkpoint_version_and_corruption() {
        let mut cfg = config(16, 1.0, ModelParams::default());
        cfg.budget.max_steps = Some(3);
        let u = profile_seed(cfg.grid, &cfg.params, 0.01).unwrap();
        let traj = run_until_blowup(&u, cfg).unwrap();
        let json = save_checkpoint(&traj);
        let back = load_checkpoint(&json).unwrap();
        assert_eq!(back.last().values(), traj.last().values());
        assert_eq!(back.history, traj.history);

        let wrong = json.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            load_checkpoint(&wrong),
            Err(CheckpointError::Version { found: 2, .. })
        ));
        let truncated = &json[..json.len() / 2];
        assert!(matches!(load_checkpoint(truncated), Err(CheckpointError::Corrupted(_))));
    }
}
