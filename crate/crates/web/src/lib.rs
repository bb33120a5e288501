//! Browser bindings for three small operations: the profile explorer, a
//! coarse blow-up run, and the weighted-integral bound check.
//!
//! Everything here is plain Rust behind thin `#[wasm_bindgen]` wrappers, so
//! the logic is testable natively.

use nlheat::grid::RadialGrid;
use nlheat::lemmas::{integral_i_bound, integral_i_numeric, IntegralCase};
use nlheat::profile::{final_profile, intermediate_prediction};
use nlheat::similarity::final_profile_extract;
use nlheat::solver::{estimate_t, profile_seed, run_until_blowup, Budget, SolverConfig};
use nlheat::ModelParams;
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps a run under a second or so.
pub const MAX_INTERVALS: usize = 512;

fn params(p: f64, q: f64, mu: f64, dim: u32) -> Result<ModelParams, String> {
    ModelParams::validate(p, q, mu, dim, None).map_err(|e| e.to_string())
}

/// `[b, gamma, kappa, beta, beta_lo, beta_hi]`.
pub fn constants(p: f64, q: f64, mu: f64, dim: u32) -> Result<Vec<f64>, String> {
    let m = params(p, q, mu, dim)?;
    let w = m.beta_window();
    Ok(vec![m.b(), m.gamma(), m.kappa(), m.beta(), w.lo, w.hi])
}

/// Samples `n` radii in `(0, r_max]` and returns `[r.., intermediate.., final..]`
/// with the intermediate profile taken at remaining time `s`. The final
/// profile is `NaN` where it is undefined (`r >= 1`).
pub fn profile_curves(p: f64, q: f64, mu: f64, dim: u32, s: f64, r_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let m = params(p, q, mu, dim)?;
    if !(s > 0.0 && s < 1.0) {
        return Err(format!("remaining time must lie in (0, 1), got {s}"));
    }
    if r_max.is_nan() || r_max <= 0.0 || n < 2 {
        return Err("need r_max > 0 and at least two samples".into());
    }
    let r: Vec<f64> = (1..=n).map(|i| r_max * i as f64 / n as f64).collect();
    let mut out = r.clone();
    for &x in &r {
        out.push(intermediate_prediction(x, 0.0, s, &m, 1.0).map_err(|e| e.to_string())?.value);
    }
    out.extend(r.iter().map(|&x| final_profile(x, &m).unwrap_or(f64::NAN)));
    Ok(out)
}

/// Outcome of a coarse blow-up run.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct RunResult {
    t_est: f64,
    kappa_est: f64,
    kappa: f64,
    steps: u64,
    remaining: Vec<f64>,
    history_sup: Vec<f64>,
    radii: Vec<f64>,
    ratios: Vec<f64>,
}

#[wasm_bindgen]
impl RunResult {
    #[wasm_bindgen(getter)]
    pub fn t_est(&self) -> f64 {
        self.t_est
    }
    #[wasm_bindgen(getter)]
    pub fn kappa_est(&self) -> f64 {
        self.kappa_est
    }
    #[wasm_bindgen(getter)]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> f64 {
        self.steps as f64
    }
    /// Remaining time `T_est - t` of each thinned history sample.
    pub fn history_remaining(&self) -> Vec<f64> {
        self.remaining.clone()
    }
    pub fn history_sup(&self) -> Vec<f64> {
        self.history_sup.clone()
    }
    pub fn radii(&self) -> Vec<f64> {
        self.radii.clone()
    }
    /// `u(r, t_last) / u*(r)` at [`RunResult::radii`].
    pub fn ratios(&self) -> Vec<f64> {
        self.ratios.clone()
    }
}

/// Profile-seeded run on `[0, 1]` until the sup-norm reaches `1e8`.
pub fn blowup_run(p: f64, q: f64, mu: f64, intervals: usize, t_star: f64) -> Result<RunResult, String> {
    if !(16..=MAX_INTERVALS).contains(&intervals) {
        return Err(format!("intervals must lie in [16, {MAX_INTERVALS}]"));
    }
    let m = params(p, q, mu, 1)?;
    let grid = RadialGrid::new(1.0, intervals, 1).map_err(|e| e.to_string())?;
    let mut cfg = SolverConfig::new(grid, m);
    cfg.budget = Budget {
        max_steps: Some(2_000_000),
        t_end: None,
        wall_secs: None,
    };
    let seed = profile_seed(grid, &m, t_star).map_err(|e| e.to_string())?;
    let traj = run_until_blowup(&seed, cfg).map_err(|e| e.to_string())?;
    let est = estimate_t(&traj.history, &m).map_err(|e| e.to_string())?;
    let end = traj.history.last().expect("history is never empty").clock();
    // log-spaced thinning keeps the plot small
    let (mut remaining, mut history_sup) = (Vec::new(), Vec::new());
    let mut next = f64::INFINITY;
    for h in traj.history.iter().rev() {
        let s = est.remaining + end.minus(h.clock());
        if s < next && s > 0.0 {
            remaining.push(s);
            history_sup.push(h.supnorm);
            next = s / 1.05;
        }
    }
    remaining.reverse();
    history_sup.reverse();
    let radii = vec![0.05, 0.075, 0.1, 0.15, 0.2, 0.3];
    let ratios = match final_profile_extract(&traj, &radii) {
        Ok(t) => t.rows.iter().map(|r| r.ratio).collect(),
        Err(_) => vec![f64::NAN; radii.len()],
    };
    Ok(RunResult {
        t_est: est.t_est,
        kappa_est: est.kappa_est,
        kappa: m.kappa(),
        steps: traj.steps,
        remaining,
        history_sup,
        radii,
        ratios,
    })
}

/// `[numeric, bound]` for the weighted singular integral.
pub fn integral_pair(alpha: f64, theta: f64, tau: f64) -> Result<Vec<f64>, String> {
    let c = IntegralCase::new(alpha, theta, tau).map_err(|e| e.to_string())?;
    Ok(vec![integral_i_numeric(&c), integral_i_bound(&c)])
}

#[wasm_bindgen(js_name = constants)]
pub fn constants_js(p: f64, q: f64, mu: f64, dim: u32) -> Result<Vec<f64>, JsError> {
    constants(p, q, mu, dim).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = profileCurves)]
pub fn profile_curves_js(p: f64, q: f64, mu: f64, dim: u32, s: f64, r_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    profile_curves(p, q, mu, dim, s, r_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = blowupRun)]
pub fn blowup_run_js(p: f64, q: f64, mu: f64, intervals: usize, t_star: f64) -> Result<RunResult, JsError> {
    blowup_run(p, q, mu, intervals, t_star).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = integralPair)]
pub fn integral_pair_js(alpha: f64, theta: f64, tau: f64) -> Result<Vec<f64>, JsError> {
    integral_pair(alpha, theta, tau).map_err(|e| JsError::new(&e))
}
