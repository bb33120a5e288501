//! Local rescaling around a point `x0 != 0`:
//! `v(xi, tau) = s^{1/(p-1)} u(x0 + xi sqrt(s), t0 + tau s)` and
//! `w = d v / d xi`, with `s = T - t0` fixed by `|x0| = K0 sqrt(s |log s|)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gradient_into, RadialGrid};
use crate::params::ModelParams;
use crate::profile::{final_grad_bound, final_profile, v_k0};
use crate::solver::{Status, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("x0 must be finite and nonzero, got {0}")]
    InvalidX0(f64),
    #[error("K0 must be positive, got {0}")]
    InvalidK0(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-monotone regime: |x0| = {x0} needs T - t0 > e^-1 (map peaks at {peak})")]
    NonMonotone { x0: f64, peak: f64 },
    #[error("unreachable: |x0| = {x0} exceeds {limit}, the largest value reached for t0 >= 0")]
    Unreachable { x0: f64, limit: f64 },
    #[error("coverage gap: trajectory lacks tau in [{from}, {to}]")]
    CoverageGap { from: f64, to: f64 },
    #[error("trajectory has not blown up (status {0:?})")]
    NotBlownUp(Status),
    #[error("not converged at r = {r}: last two snapshots differ by {change:.3e} (relative)")]
    NotConverged { r: f64, change: f64 },
    #[error("radius {0} outside the grid interior")]
    Radius(f64),
}

/// `K0 sqrt(s |log s|)`, the radius attached to remaining time `s`.
pub fn x0_of_remaining(s: f64, k0: f64) -> f64 {
    k0 * (s * s.ln().abs()).sqrt()
}

/// Default plateau radius: the `|x0|` at which `T - t0 = e^-2`.
pub fn default_delta(k0: f64) -> f64 {
    x0_of_remaining((-2.0f64).exp(), k0)
}

/// Solution of the `t0(x0)` relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T0Solution {
    pub t0: f64,
    /// `T - t0`, kept separately since `t0` alone loses its digits when it
    /// is small against `T`.
    pub remaining: f64,
    /// True when `|x0| > delta` and the plateau value `t0(delta)` was used.
    pub plateau: bool,
}

/// Solves `|x0| = K0 sqrt((T - t0) |log(T - t0)|)` by bisection in
/// `log(T - t0)`; for `|x0| > delta` returns `t0(delta)`.
pub fn solve_t0(x0: f64, k0: f64, blowup_time: f64, delta: f64) -> Result<T0Solution, SimilarityError> {
    if !(x0.is_finite() && x0 != 0.0) {
        return Err(SimilarityError::InvalidX0(x0));
    }
    if !(k0 > 0.0 && k0.is_finite()) {
        return Err(SimilarityError::InvalidK0(k0));
    }
    if !(blowup_time > 0.0 && blowup_time.is_finite()) {
        return Err(SimilarityError::Invalid(format!("blow-up time must be positive, got {blowup_time}")));
    }
    if !(delta > 0.0) {
        return Err(SimilarityError::Invalid(format!("delta must be positive, got {delta}")));
    }
    let plateau = x0.abs() > delta;
    let target = x0.abs().min(delta);
    let turn = (-1.0f64).exp();
    let peak = x0_of_remaining(turn, k0);
    if target > peak {
        return Err(SimilarityError::NonMonotone { x0: target, peak });
    }
    let s_max = turn.min(blowup_time);
    let limit = x0_of_remaining(s_max, k0);
    if target > limit {
        return Err(SimilarityError::Unreachable { x0: target, limit });
    }
    let (mut lo, mut hi) = (-700.0f64, s_max.ln());
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if x0_of_remaining(mid.exp(), k0) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = x0_of_remaining(lo.exp(), k0);
    let b = x0_of_remaining(hi.exp(), k0);
    let remaining = if (target - a).abs() <= (b - target).abs() { lo.exp() } else { hi.exp() };
    Ok(T0Solution {
        t0: blowup_time - remaining,
        remaining,
        plateau,
    })
}

pub fn t0_of_x0(x0: f64, k0: f64, blowup_time: f64, delta: f64) -> Result<f64, SimilarityError> {
    solve_t0(x0, k0, blowup_time, delta).map(|s| s.t0)
}

/// How frame entries were filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpolation {
    pub space_order: u32,
    pub time_order: u32,
    pub gradient_stencil: String,
}

impl Default for Interpolation {
    fn default() -> Self {
        Self {
            space_order: 1,
            time_order: 1,
            gradient_stencil: "central 3-point, one-sided 3-point at r = R, zero at r = 0".into(),
        }
    }
}

/// Sampling choices for [`extract_frame_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    /// Number of `xi` samples across `[-window, window]` (odd keeps `xi = 0`).
    pub xi_points: usize,
    /// Uniform `tau` samples in `[0, tau_max]`; `None` samples at
    /// `tau = 0` and at every snapshot time.
    pub tau_points: Option<usize>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            xi_points: 81,
            tau_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFrame {
    pub params: ModelParams,
    pub x0: f64,
    pub k0: f64,
    pub t0: f64,
    pub remaining: f64,
    pub blowup_time: f64,
    pub plateau: bool,
    pub tau: Vec<f64>,
    pub xi: Vec<f64>,
    /// `v[k][j]` at `(tau[k], xi[j])`.
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub window_requested: f64,
    pub window_used: f64,
    /// Largest `tau` the trajectory covers.
    pub tau_covered: f64,
    pub interpolation: Interpolation,
}

impl SimilarityFrame {
    pub fn window_clipped(&self) -> bool {
        self.window_used < self.window_requested
    }

    /// `|log(T - t0)|`.
    pub fn log_scale(&self) -> f64 {
        self.remaining.ln().abs()
    }

    fn sup_where(&self, radius: f64, mut value: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut best: f64 = 0.0;
        for k in 0..self.tau.len() {
            for (j, xi) in self.xi.iter().enumerate() {
                if xi.abs() <= radius {
                    best = best.max(value(k, j));
                }
            }
        }
        best
    }

    /// Writes `x0,K0,t0,tau,xi,v,w` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, header: &str, with_columns: bool) -> std::io::Result<()> {
        write!(out, "{header}")?;
        if with_columns {
            writeln!(out, "x0,K0,t0,tau,xi,v,w")?;
        }
        for (k, tau) in self.tau.iter().enumerate() {
            for (j, xi) in self.xi.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    self.x0, self.k0, self.t0, tau, xi, self.v[k][j], self.w[k][j]
                )?;
            }
        }
        Ok(())
    }
}

fn sample_linear(grid: &RadialGrid, values: &[f64], r: f64) -> f64 {
    let (i, w) = grid.locate(r).expect("radius checked against the grid");
    if w == 0.0 {
        values[i]
    } else {
        (1.0 - w) * values[i] + w * values[i + 1]
    }
}

pub fn extract_frame(
    trajectory: &Trajectory,
    x0: f64,
    k0: f64,
    blowup_time: f64,
    delta: f64,
    window: f64,
) -> Result<SimilarityFrame, SimilarityError> {
    extract_frame_with(trajectory, x0, k0, blowup_time, delta, window, FrameOptions::default())
}

/// Fills `v` and `w` by linear interpolation in `r` and in `t` between
/// snapshots. The window shrinks to stay inside the grid; the `tau` range
/// stops at the last snapshot before `T`.
pub fn extract_frame_with(
    trajectory: &Trajectory,
    x0: f64,
    k0: f64,
    blowup_time: f64,
    delta: f64,
    window: f64,
    options: FrameOptions,
) -> Result<SimilarityFrame, SimilarityError> {
    if !(window > 0.0) {
        return Err(SimilarityError::Invalid(format!("window must be positive, got {window}")));
    }
    if options.xi_points < 2 {
        return Err(SimilarityError::Invalid("need at least two xi samples".into()));
    }
    let sol = solve_t0(x0, k0, blowup_time, delta)?;
    let s = sol.remaining;
    let params = trajectory.config.params;
    let grid = trajectory.config.grid;
    let snaps: Vec<_> = trajectory.snapshots.iter().filter(|f| f.time() < blowup_time).collect();
    let first = snaps.first().map_or(f64::INFINITY, |f| f.time());
    if snaps.is_empty() || sol.t0 < first {
        let to = if snaps.is_empty() { 1.0 } else { (first - sol.t0) / s };
        return Err(SimilarityError::CoverageGap { from: 0.0, to });
    }
    let t_last = snaps[snaps.len() - 1].time();
    if t_last < sol.t0 {
        return Err(SimilarityError::CoverageGap { from: 0.0, to: 1.0 });
    }
    let tau_covered = (t_last - sol.t0) / s;

    let sqrt_s = s.sqrt();
    let room = (grid.radius() - x0.abs()) / sqrt_s;
    if !(room > 0.0) {
        return Err(SimilarityError::Invalid(format!("x0 = {x0} lies outside the grid")));
    }
    let window_used = window.min(room);
    let n = options.xi_points;
    let xi: Vec<f64> = (0..n)
        .map(|j| -window_used + 2.0 * window_used * j as f64 / (n - 1) as f64)
        .collect();

    let tau: Vec<f64> = match options.tau_points {
        Some(m) => {
            let m = m.max(2);
            (0..m).map(|k| tau_covered * k as f64 / (m - 1) as f64).collect()
        }
        None => {
            let mut t = vec![0.0];
            t.extend(
                snaps
                    .iter()
                    .map(|f| (f.time() - sol.t0) / s)
                    .filter(|&tau| tau > 0.0),
            );
            t.dedup();
            t
        }
    };

    let amp = s.powf(params.rate());
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; snaps.len()];
    let mut grad_of = |k: usize| -> Vec<f64> {
        grads[k]
            .get_or_insert_with(|| {
                let mut g = vec![0.0; grid.len()];
                gradient_into(&grid, snaps[k].values(), &mut g);
                g
            })
            .clone()
    };

    let mut v = Vec::with_capacity(tau.len());
    let mut w = Vec::with_capacity(tau.len());
    for &tk in &tau {
        let t = sol.t0 + tk * s;
        let hi = snaps.partition_point(|f| f.time() < t).min(snaps.len() - 1);
        let lo = hi.saturating_sub(1);
        let (ta, tb) = (snaps[lo].time(), snaps[hi].time());
        let theta = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 1.0 };
        let (ga, gb) = (grad_of(lo), grad_of(hi));
        let mut row_v = Vec::with_capacity(n);
        let mut row_w = Vec::with_capacity(n);
        for &x in &xi {
            let pos = x0 + x * sqrt_s;
            let r = pos.abs().min(grid.radius());
            let ua = sample_linear(&grid, snaps[lo].values(), r);
            let ub = sample_linear(&grid, snaps[hi].values(), r);
            let da = sample_linear(&grid, &ga, r);
            let db = sample_linear(&grid, &gb, r);
            let u = (1.0 - theta) * ua + theta * ub;
            let du = (1.0 - theta) * da + theta * db;
            let sign = if pos > 0.0 {
                1.0
            } else if pos < 0.0 {
                -1.0
            } else {
                0.0
            };
            row_v.push(amp * u);
            row_w.push(amp * sqrt_s * sign * du);
        }
        v.push(row_v);
        w.push(row_w);
    }

    Ok(SimilarityFrame {
        params,
        x0,
        k0,
        t0: sol.t0,
        remaining: s,
        blowup_time,
        plateau: sol.plateau,
        tau,
        xi,
        v,
        w,
        window_requested: window,
        window_used,
        tau_covered,
        interpolation: Interpolation::default(),
    })
}

/// Smallest `eps0` with `(|v| + sqrt(1 - tau)|w|)(1 - tau)^{1/(p-1)} <= eps0`
/// on the sampled frame for `|xi| <= 1`.
pub fn threshold_check(frame: &SimilarityFrame) -> f64 {
    let rate = frame.params.rate();
    frame.sup_where(1.0, |k, j| {
        let left = 1.0 - frame.tau[k];
        (frame.v[k][j].abs() + left.sqrt() * frame.w[k][j].abs()) * left.powf(rate)
    })
}

/// `sup |v| + |w|` over `|xi| <= inner_radius` and all sampled `tau`.
pub fn boundedness_report(frame: &SimilarityFrame, inner_radius: f64) -> f64 {
    frame.sup_where(inner_radius, |k, j| frame.v[k][j].abs() + frame.w[k][j].abs())
}

/// A measured constant together with the `xi` radius it was taken over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub radius_requested: f64,
    pub radius_used: f64,
}

impl Measured {
    pub fn clipped(&self) -> bool {
        self.radius_used < self.radius_requested
    }
}

/// `sup |w| |log(T - t0)|^{1/4}` over `|xi| <= 2 |log(T - t0)|^{1/4}`.
pub fn w_smallness(frame: &SimilarityFrame) -> Measured {
    let l4 = frame.log_scale().powf(0.25);
    let requested = 2.0 * l4;
    let used = requested.min(frame.window_used);
    let sup = frame.sup_where(used, |k, j| frame.w[k][j].abs());
    Measured {
        value: sup * l4,
        radius_requested: requested,
        radius_used: used,
    }
}

/// `sup |v - v_K0(tau)| |log(T - t0)|^{1/4}` over `|xi| <= |log(T - t0)|^{1/4}`.
pub fn v_sharp_behavior(frame: &SimilarityFrame) -> Measured {
    let l4 = frame.log_scale().powf(0.25);
    let used = l4.min(frame.window_used);
    let sup = frame.sup_where(used, |k, j| (frame.v[k][j] - v_k0(frame.tau[k], frame.k0, &frame.params)).abs());
    Measured {
        value: sup * l4,
        radius_requested: l4,
        radius_used: used,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub x0: f64,
    pub k0: f64,
    pub t0: f64,
    pub remaining: f64,
    pub tau_covered: f64,
    pub window_used: f64,
    pub window_clipped: bool,
    pub eps0_measured: f64,
    pub m_measured: f64,
    pub w_sup_decay: Measured,
    pub v_minus_vk0_sup: Measured,
}

pub fn frame_report(frame: &SimilarityFrame, inner_radius: f64) -> FrameReport {
    FrameReport {
        x0: frame.x0,
        k0: frame.k0,
        t0: frame.t0,
        remaining: frame.remaining,
        tau_covered: frame.tau_covered,
        window_used: frame.window_used,
        window_clipped: frame.window_clipped(),
        eps0_measured: threshold_check(frame),
        m_measured: boundedness_report(frame, inner_radius),
        w_sup_decay: w_smallness(frame),
        v_minus_vk0_sup: v_sharp_behavior(frame),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileRow {
    pub r: f64,
    pub u_last: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub grad_last: f64,
    /// `final_grad_bound(r, C)` with the smallest `C` admissible on all rows.
    pub grad_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileTable {
    pub rows: Vec<FinalProfileRow>,
    pub grad_constant: f64,
}

/// Compares the last snapshot with the limiting profile at each radius.
pub fn final_profile_extract(trajectory: &Trajectory, radii: &[f64]) -> Result<FinalProfileTable, SimilarityError> {
    if trajectory.status != Status::BlownUp {
        return Err(SimilarityError::NotBlownUp(trajectory.status));
    }
    let params = trajectory.config.params;
    let grid = trajectory.config.grid;
    let n = trajectory.snapshots.len();
    let last = &trajectory.snapshots[n - 1];
    let prev = &trajectory.snapshots[n.saturating_sub(2)];
    let mut grad = vec![0.0; grid.len()];
    gradient_into(&grid, last.values(), &mut grad);
    let mut rows = Vec::with_capacity(radii.len());
    let mut constant: f64 = 0.0;
    for &r in radii {
        if !(r > 0.0 && r < grid.radius()) {
            return Err(SimilarityError::Radius(r));
        }
        let u = sample_linear(&grid, last.values(), r);
        let before = sample_linear(&grid, prev.values(), r);
        let change = (u - before).abs() / u.abs().max(f64::MIN_POSITIVE);
        if change > 0.01 {
            return Err(SimilarityError::NotConverged { r, change });
        }
        let predicted = final_profile(r, &params).map_err(|_| SimilarityError::Radius(r))?;
        let g = sample_linear(&grid, &grad, r).abs();
        let shape = final_grad_bound(r, &params, 1.0).map_err(|_| SimilarityError::Radius(r))?;
        constant = constant.max(g / shape);
        rows.push(FinalProfileRow {
            r,
            u_last: u,
            predicted,
            ratio: u / predicted,
            grad_last: g,
            grad_bound: 0.0,
        });
    }
    for row in &mut rows {
        row.grad_bound = final_grad_bound(row.r, &params, constant).expect("radius validated above");
    }
    Ok(FinalProfileTable {
        rows,
        grad_constant: constant,
    })
}
