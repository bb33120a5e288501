//! Numerical forms of the analytic lemmas: the singular-integral bound,
//! the Gronwall lemma for step functions, the decay of the non-local
//! integral, and the smoothing estimates of the discrete heat semigroup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gradient, nonlocal_prefix, sup_norm, Boundary, RadialField, RadialGrid};
use crate::params::{gamma_of, ModelParams};
use crate::profile::intermediate_prediction;
use crate::solver::{resume, run_until_blowup, Budget, SolverConfig, SolverError, Terms, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LemmaError {
    #[error("invalid integral case: {0}")]
    Case(String),
    #[error("invalid step function: {0}")]
    StepFunction(String),
    #[error("insufficient window: {0}")]
    InsufficientWindow(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Sign of `alpha + theta - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Gt1,
    Eq1,
    Lt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralCase {
    pub alpha: f64,
    pub theta: f64,
    pub tau: f64,
    pub case: CaseKind,
}

impl IntegralCase {
    /// `alpha + theta` within 1e-12 of 1 counts as the borderline case.
    pub const EQ_TOL: f64 = 1e-12;

    pub fn new(alpha: f64, theta: f64, tau: f64) -> Result<Self, LemmaError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(LemmaError::Case(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(LemmaError::Case(format!("theta must be positive, got {theta}")));
        }
        if !(0.0..1.0).contains(&tau) {
            return Err(LemmaError::Case(format!("tau must lie in [0, 1), got {tau}")));
        }
        let d = alpha + theta - 1.0;
        let case = if d.abs() <= Self::EQ_TOL {
            CaseKind::Eq1
        } else if d > 0.0 {
            CaseKind::Gt1
        } else {
            CaseKind::Lt1
        };
        Ok(Self {
            alpha,
            theta,
            tau,
            case,
        })
    }
}

/// `I(tau) = int_0^tau (tau - s)^{-alpha} (1 - s)^{-theta} ds`.
///
/// With `sigma = (tau - s)^{1 - alpha}` the endpoint singularity disappears:
/// `I = (1 - alpha)^{-1} int_0^{tau^{1-alpha}} (1 - tau + sigma^{1/(1-alpha)})^{-theta} dsigma`,
/// which is integrated by tanh-sinh quadrature to 1e-12 requested accuracy.
pub fn integral_i_numeric(c: &IntegralCase) -> f64 {
    if c.tau == 0.0 {
        return 0.0;
    }
    let e = 1.0 / (1.0 - c.alpha);
    let gap = 1.0 - c.tau;
    let upper = c.tau.powf(1.0 - c.alpha);
    let out = quadrature::double_exponential::integrate(|s: f64| (gap + s.powf(e)).powf(-c.theta), 0.0, upper, 1e-12);
    e * out.integral
}

pub fn integral_i_bound(c: &IntegralCase) -> f64 {
    let (a, th) = (c.alpha, c.theta);
    match c.case {
        CaseKind::Gt1 => (1.0 / (1.0 - a) + 1.0 / (a + th - 1.0)) * (1.0 - c.tau).powf(1.0 - a - th),
        CaseKind::Eq1 => 1.0 / (1.0 - a) + (1.0 - c.tau).ln().abs(),
        CaseKind::Lt1 => 1.0 / (1.0 - a - th),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(flatten)]
    pub case: IntegralCase,
    pub numeric: f64,
    pub bound: f64,
    /// `bound - numeric`.
    pub margin: f64,
}

pub const SWEEP_TAUS: [f64; 5] = [0.0, 0.25, 0.5, 0.9, 0.99];

/// The 9 x 15 x 5 grid `alpha in {0.1..0.9}`, `theta in {0.1..1.5}`,
/// `tau in SWEEP_TAUS`.
pub fn sweep_cases() -> Vec<IntegralCase> {
    let mut out = Vec::with_capacity(9 * 15 * 5);
    for i in 1..=9 {
        for j in 1..=15 {
            for &tau in &SWEEP_TAUS {
                out.push(IntegralCase::new(f64::from(i) / 10.0, f64::from(j) / 10.0, tau).expect("grid is valid"));
            }
        }
    }
    out
}

pub fn integral_sweep(cases: &[IntegralCase]) -> Vec<SweepPoint> {
    cases
        .iter()
        .map(|c| {
            let numeric = integral_i_numeric(c);
            let bound = integral_i_bound(c);
            SweepPoint {
                case: *c,
                numeric,
                bound,
                margin: bound - numeric,
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], mut out: W, header: &str) -> std::io::Result<()> {
    write!(out, "{header}")?;
    writeln!(out, "alpha,theta,tau,case,numeric,bound,margin")?;
    for p in points {
        let case = match p.case.case {
            CaseKind::Gt1 => "gt1",
            CaseKind::Eq1 => "eq1",
            CaseKind::Lt1 => "lt1",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.case.alpha, p.case.theta, p.case.tau, case, p.numeric, p.bound, p.margin
        )?;
    }
    Ok(())
}

/// Right-continuous step function on `[breaks[0], breaks[n]]` taking
/// `values[k]` on `[breaks[k], breaks[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, LemmaError> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() {
            return Err(LemmaError::StepFunction(format!(
                "{} breakpoints need {} values, got {}",
                breaks.len(),
                breaks.len().saturating_sub(1),
                values.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(LemmaError::StepFunction("breakpoints must be finite and increasing".into()));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(t0: f64, t1: f64, value: f64) -> Result<Self, LemmaError> {
        Self::new(vec![t0, t1], vec![value])
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }
    pub fn end(&self) -> f64 {
        self.breaks[self.breaks.len() - 1]
    }
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= t).clamp(1, self.values.len());
        self.values[k - 1]
    }
}

/// Segment data shared by the Gronwall bound and the equality solution.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    a: f64,
    b: f64,
    r: f64,
    q: f64,
}

fn merged_segments(r: &StepFunction, q: &StepFunction) -> Result<Vec<Segment>, LemmaError> {
    if r.start() != q.start() || r.end() != q.end() {
        return Err(LemmaError::StepFunction("r and q must share their interval".into()));
    }
    let mut cuts: Vec<f64> = r.breaks.iter().chain(&q.breaks).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Ok(cuts
        .windows(2)
        .map(|w| Segment {
            a: w[0],
            b: w[1],
            r: r.eval(w[0]),
            q: q.eval(w[0]),
        })
        .collect())
}

/// `int_0^d e^{-r x} dx`, stable for small `r d`.
fn decay_integral(r: f64, d: f64) -> f64 {
    if r == 0.0 {
        d
    } else {
        -(-r * d).exp_m1() / r
    }
}

/// `int_0^d e^{r x} dx`.
fn growth_integral(r: f64, d: f64) -> f64 {
    if r == 0.0 {
        d
    } else {
        (r * d).exp_m1() / r
    }
}

/// `exp(R(t)) [y0 + int_{t0}^t q e^{-R}]` with `R(t) = int_{t0}^t r`,
/// evaluated exactly segment by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallBound {
    y0: f64,
    segments: Vec<Segment>,
    /// `R` and the accumulated integral at each segment start.
    r_at: Vec<f64>,
    acc_at: Vec<f64>,
}

impl GronwallBound {
    pub fn eval(&self, t: f64) -> f64 {
        let last = self.segments.len() - 1;
        let k = self.segments.partition_point(|s| s.b <= t).min(last);
        let seg = self.segments[k];
        let d = (t - seg.a).clamp(0.0, seg.b - seg.a);
        let big_r = self.r_at[k] + seg.r * d;
        let acc = self.acc_at[k] + seg.q * (-self.r_at[k]).exp() * decay_integral(seg.r, d);
        big_r.exp() * (self.y0 + acc)
    }
}

pub fn gronwall_bound(y0: f64, r: &StepFunction, q: &StepFunction) -> Result<GronwallBound, LemmaError> {
    let segments = merged_segments(r, q)?;
    let mut r_at = Vec::with_capacity(segments.len());
    let mut acc_at = Vec::with_capacity(segments.len());
    let (mut big_r, mut acc) = (0.0f64, 0.0);
    for s in &segments {
        r_at.push(big_r);
        acc_at.push(acc);
        let d = s.b - s.a;
        acc += s.q * (-big_r).exp() * decay_integral(s.r, d);
        big_r += s.r * d;
    }
    Ok(GronwallBound {
        y0,
        segments,
        r_at,
        acc_at,
    })
}

/// Solution of `y(t) = y0 + int r y + int q`: on each segment
/// `y = y_a e^{r (t - a)} + q (e^{r (t - a)} - 1)/r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallEquality {
    segments: Vec<Segment>,
    y_at: Vec<f64>,
}

impl GronwallEquality {
    pub fn eval(&self, t: f64) -> f64 {
        let last = self.segments.len() - 1;
        let k = self.segments.partition_point(|s| s.b <= t).min(last);
        let seg = self.segments[k];
        let d = (t - seg.a).clamp(0.0, seg.b - seg.a);
        self.y_at[k] * (seg.r * d).exp() + seg.q * growth_integral(seg.r, d)
    }
}

pub fn gronwall_equality(y0: f64, r: &StepFunction, q: &StepFunction) -> Result<GronwallEquality, LemmaError> {
    let segments = merged_segments(r, q)?;
    let mut y_at = Vec::with_capacity(segments.len());
    let mut y = y0;
    for s in &segments {
        y_at.push(y);
        let d = s.b - s.a;
        y = y * (s.r * d).exp() + s.q * growth_integral(s.r, d);
    }
    Ok(GronwallEquality { segments, y_at })
}

/// Random nonnegative step functions `r, q` with values in `[0, 2]` on
/// `[0, 1]`, and `y0` in `[0, 2]`.
pub fn random_gronwall_instance(rng: &mut impl Rng) -> (f64, StepFunction, StepFunction) {
    let make = |rng: &mut dyn rand::RngCore| {
        let pieces = rng.gen_range(1..=8);
        let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.0..1.0)).collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let values = (0..cuts.len() - 1).map(|_| rng.gen_range(0.0..=2.0)).collect();
        StepFunction::new(cuts, values).expect("sorted distinct cuts")
    };
    let r = make(rng);
    let q = make(rng);
    (rng.gen_range(0.0..=2.0), r, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallSuite {
    pub instances: usize,
    pub samples: usize,
    /// Largest `y(t) - bound(t)` seen (at most rounding noise).
    pub worst_excess: f64,
}

/// Compares the equality solution with the bound on `samples` points per
/// instance.
pub fn gronwall_suite(instances: usize, samples: usize, seed: u64, bound_scale: f64) -> GronwallSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let (y0, r, q) = random_gronwall_instance(&mut rng);
        let bound = gronwall_bound(y0, &r, &q).expect("shared interval");
        let exact = gronwall_equality(y0, &r, &q).expect("shared interval");
        for k in 0..=samples {
            let t = k as f64 / samples as f64;
            worst = worst.max(exact.eval(t) - bound_scale * bound.eval(t));
        }
    }
    GronwallSuite {
        instances,
        samples,
        worst_excess: worst,
    }
}

/// `max |(gamma - 1/2) - (N/2 - (q-1)/(p-1))|` over `count` random valid
/// parameter tuples.
pub fn exponent_identity_residual(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < count {
        let dim = rng.gen_range(1..=4u32);
        let p = rng.gen_range(3.0f64..12.0);
        let lo = f64::from(dim) * (p - 1.0) / 2.0 + 1.0;
        let q = lo + rng.gen_range(0.0..1.0) * (p + 1.0) / 2.0;
        let mu = rng.gen_range(-1.0..1.0);
        let Ok(params) = ModelParams::validate(p, q, mu, dim, None) else {
            continue;
        };
        let n = f64::from(dim);
        let lhs = params.gamma() - 0.5;
        let rhs = n / 2.0 - (params.q() - 1.0) / (params.p() - 1.0);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        done += 1;
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log J - (N/2) log|log s|` against `log s`.
    pub slope: f64,
    /// Slope of `log J` against `log s` without the log correction.
    pub plain_slope: f64,
    pub predicted_slope: f64,
    pub eta: f64,
    /// Smallest `C` with `J <= C s^{gamma - 1/2 - eta}` on the window.
    pub c_eta: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Smallest remaining time at which the intermediate profile still spans
/// eight cells: `sqrt(s |log s|) = 8 h`.
pub fn resolved_remaining(grid: &RadialGrid) -> f64 {
    let target = (8.0 * grid.spacing()).powi(2);
    let (mut lo, mut hi) = (-700.0f64, -1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.exp() * -mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.exp()
}

/// Fits the decay of `J(t) = int_{B(0,R)} |u|^{q-1}` in `s = T - t` over the
/// snapshots with `s` in `window` (default: two decades upward from
/// [`resolved_remaining`]).
pub fn nonlocal_decay_fit(
    trajectory: &Trajectory,
    params: &ModelParams,
    blowup_time: f64,
    eta: f64,
    window: Option<(f64, f64)>,
) -> Result<DecayFit, LemmaError> {
    let gamma = params.gamma();
    if !(eta > 0.0 && eta < gamma) {
        return Err(LemmaError::InsufficientWindow(format!("eta must lie in (0, gamma = {gamma}), got {eta}")));
    }
    let (lo, hi) = window.unwrap_or_else(|| {
        let lo = resolved_remaining(&trajectory.config.grid);
        (lo, 100.0 * lo)
    });
    let mut xs = Vec::new();
    let mut js = Vec::new();
    for snap in &trajectory.snapshots {
        let s = blowup_time - snap.time();
        if s >= lo * (1.0 - 1e-9) && s <= hi * (1.0 + 1e-9) {
            let j = nonlocal_prefix(snap, params).total();
            if !(j > 0.0 && j.is_finite()) {
                return Err(LemmaError::InsufficientWindow(format!(
                    "J = {j} at t = {} cannot be fitted on a log scale",
                    snap.time()
                )));
            }
            xs.push(s);
            js.push(j);
        }
    }
    if xs.len() < 3 {
        return Err(LemmaError::InsufficientWindow(format!(
            "{} snapshots with T - t in [{lo:e}, {hi:e}]",
            xs.len()
        )));
    }
    let half_n = f64::from(params.dim()) / 2.0;
    let x: Vec<f64> = xs.iter().map(|s| s.ln()).collect();
    let plain: Vec<f64> = js.iter().map(|j| j.ln()).collect();
    let corrected: Vec<f64> = plain
        .iter()
        .zip(&xs)
        .map(|(y, s)| y - half_n * s.ln().abs().ln())
        .collect();
    let predicted = gamma - 0.5;
    let exponent = predicted - eta;
    let c_eta = xs
        .iter()
        .zip(&js)
        .map(|(s, j)| j / s.powf(exponent))
        .fold(0.0, f64::max);
    Ok(DecayFit {
        slope: ls_slope(&x, &corrected),
        plain_slope: ls_slope(&x, &plain),
        predicted_slope: predicted,
        eta,
        c_eta,
        window: (lo, hi),
        points: xs.len(),
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Snapshots of the intermediate profile field
/// `s^{-1/(p-1)} f(r / sqrt(s |log s|))` at `t = T - s` for each `s`
/// (given in decreasing order).
pub fn profile_field_trajectory(
    grid: RadialGrid,
    params: ModelParams,
    blowup_time: f64,
    remaining: &[f64],
) -> Result<Trajectory, LemmaError> {
    let mut snaps = Vec::with_capacity(remaining.len());
    for &s in remaining {
        let t = blowup_time - s;
        let field = RadialField::from_fn(grid, t, |r| {
            intermediate_prediction(r, t, blowup_time, &params, 0.0)
                .map(|p| p.value)
                .unwrap_or(f64::NAN)
        })
        .map_err(SolverError::from)?;
        snaps.push(field);
    }
    Ok(Trajectory::from_snapshots(
        SolverConfig::new(grid, params),
        snaps,
        crate::solver::Status::Running,
    ))
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_spaced_desc(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSample {
    pub field: usize,
    pub t: f64,
    /// `|S(t) f|_inf / |f|_inf`.
    pub sup_ratio: f64,
    /// `sqrt(t) |d_r S(t) f|_inf / |f|_inf`.
    pub grad_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub samples: Vec<SmoothingSample>,
    pub worst_sup_ratio: f64,
    pub grad_constant: f64,
}

/// Parameters for a heat-only run in dimension `dim` (reaction terms are
/// switched off, so only the dimension matters).
fn heat_params(dim: u32) -> ModelParams {
    let n = f64::from(dim);
    ModelParams::validate(4.0, 1.5 * n + 1.75, 0.0, dim, None).expect("admissible for every dimension")
}

/// Evolves each field under the discrete heat flow alone and records the
/// sup-norm and gradient smoothing ratios at the requested times (each
/// field on its own grid, start time 0).
pub fn semigroup_smoothing_check(
    t_values: &[f64],
    fields: &[RadialField],
    boundary: Boundary,
) -> Result<SmoothingReport, LemmaError> {
    let mut times = t_values.to_vec();
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(LemmaError::Case("smoothing times must be positive".into()));
    }
    times.sort_by(f64::total_cmp);
    let mut samples = Vec::new();
    for (idx, f) in fields.iter().enumerate() {
        let norm = sup_norm(f, None).value;
        if !(norm > 0.0) {
            return Err(LemmaError::Case(format!("field {idx} vanishes identically")));
        }
        let grid = *f.grid();
        let mut config = SolverConfig::new(grid, heat_params(grid.dim()));
        config.terms = Terms::HEAT_ONLY;
        config.boundary = boundary;
        config.dt_safety = 1.0;
        config.record_stride = u64::MAX;
        config.record_growth = None;
        config.blowup_cap = f64::MAX;
        let start = RadialField::new(grid, f.values().to_vec(), 0.0).map_err(SolverError::from)?;
        let mut traj: Option<Trajectory> = None;
        for &t in &times {
            let budget = Budget {
                t_end: Some(t),
                ..Budget::default()
            };
            let next = match &traj {
                None => {
                    config.budget = budget;
                    run_until_blowup(&start, config)?
                }
                Some(prev) => resume(prev, budget)?,
            };
            let state = next.last();
            let sup_ratio = sup_norm(state, None).value / norm;
            let grad = sup_norm(&gradient(state), None).value;
            samples.push(SmoothingSample {
                field: idx,
                t,
                sup_ratio,
                grad_constant: t.sqrt() * grad / norm,
            });
            traj = Some(next);
        }
    }
    let worst_sup_ratio = samples.iter().map(|s| s.sup_ratio).fold(0.0, f64::max);
    let grad_constant = samples.iter().map(|s| s.grad_constant).fold(0.0, f64::max);
    Ok(SmoothingReport {
        samples,
        worst_sup_ratio,
        grad_constant,
    })
}

/// The exact profile-field decay setup: p = 4, q = 3, N = 1 on `[0, 20]`,
/// 41 log-spaced remaining times in `[1e-6, 1e-2]`.
pub fn reference_decay_fit(intervals: usize) -> Result<DecayFit, LemmaError> {
    let params = ModelParams::validate(4.0, 3.0, 0.1, 1, None).expect("reference parameters are admissible");
    let grid = RadialGrid::new(20.0, intervals, 1).map_err(SolverError::from)?;
    let remaining = log_spaced_desc(1e-6, 1e-2, 41);
    let traj = profile_field_trajectory(grid, params, 0.02, &remaining)?;
    let eta = gamma_of(params.p(), params.q(), params.dim()) / 4.0;
    nonlocal_decay_fit(&traj, &params, 0.02, eta, Some((1e-6, 1e-2)))
}
