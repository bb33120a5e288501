//! Model parameters `(p, q, mu, N, beta)` and the constants derived from them.
//!
//! Every derived constant (`b`, `gamma`, `kappa`) is computed exactly once in
//! [`ModelParams::validate`] and is read-only afterwards.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A hypothesis on the parameters that failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("dimension must be >= 1 (got {0})")]
    Dimension(i64),
    #[error("p>3 violated (p = {0})")]
    PTooSmall(f64),
    #[error("q lower bound violated: need q > N(p-1)/2 + 1 = {bound} (q = {q})")]
    QLowerBound { q: f64, bound: f64 },
    #[error("q upper bound violated: need q < N(p-1)/2 + (p+1)/2 = {bound} (q = {q})")]
    QUpperBound { q: f64, bound: f64 },
    #[error("q must exceed 1 for the beta window to exist (q = {0})")]
    QNotAboveOne(f64),
    #[error("empty beta window: N/(q-1) = {lo} >= 2/(p-1) = {hi}")]
    EmptyBetaWindow { lo: f64, hi: f64 },
    #[error("beta = {beta} outside the admissible window {window}")]
    BetaOutsideWindow { beta: f64, window: BetaWindow },
}

/// Admissible interval for the weight exponent `beta`.
///
/// The upper end is always open. The lower end is open when `mu != 0`
/// (`N/(q-1) < beta`) and closed at zero when `mu == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWindow {
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
}

impl BetaWindow {
    pub fn contains(&self, beta: f64) -> bool {
        let above = if self.lo_inclusive {
            beta >= self.lo
        } else {
            beta > self.lo
        };
        above && beta < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_empty(&self) -> bool {
        if self.lo_inclusive {
            self.lo >= self.hi
        } else {
            !(self.lo < self.hi)
        }
    }
}

impl fmt::Display for BetaWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_inclusive { '[' } else { '(' };
        write!(f, "{open}{}, {})", self.lo, self.hi)
    }
}

/// `(p - q)/(p - 1) + (N - 1)/2`, the scaling gain of the non-local term.
pub fn gamma_of(p: f64, q: f64, dim: u32) -> f64 {
    (p - q) / (p - 1.0) + (f64::from(dim) - 1.0) / 2.0
}

/// Admissible `beta` interval; errors when it is empty.
pub fn beta_window(p: f64, q: f64, dim: u32, mu: f64) -> Result<BetaWindow, ParamError> {
    if !(q > 1.0) {
        return Err(ParamError::QNotAboveOne(q));
    }
    let hi = 2.0 / (p - 1.0);
    let window = if mu != 0.0 {
        BetaWindow {
            lo: f64::from(dim) / (q - 1.0),
            hi,
            lo_inclusive: false,
        }
    } else {
        BetaWindow {
            lo: 0.0,
            hi,
            lo_inclusive: true,
        }
    };
    if window.is_empty() {
        return Err(ParamError::EmptyBetaWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    Ok(window)
}

/// Raw, unvalidated parameter inputs. This is also the serialized form of
/// [`ModelParams`]: derived constants are never read back from disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub dim: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl Default for ParamSpec {
    /// `(p, q, mu, N) = (4, 3, 0.1, 1)`, the reference instance used across
    /// the test and acceptance suites.
    fn default() -> Self {
        Self {
            p: 4.0,
            q: 3.0,
            mu: 0.1,
            dim: 1,
            beta: None,
        }
    }
}

/// Validated model parameters with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamSpec", into = "ParamSpec")]
pub struct ModelParams {
    p: f64,
    q: f64,
    mu: f64,
    dim: u32,
    beta: f64,
    b: f64,
    gamma: f64,
    kappa: f64,
    window: BetaWindow,
}

impl ModelParams {
    /// Checks `p > 3`, `N(p-1)/2 + 1 < q < N(p-1)/2 + (p+1)/2` and the `beta`
    /// window, all with strict inequalities. A missing `beta` becomes the
    /// window midpoint.
    pub fn validate(
        p: f64,
        q: f64,
        mu: f64,
        dim: u32,
        beta: Option<f64>,
    ) -> Result<Self, ParamError> {
        for (name, value) in [("p", p), ("q", q), ("mu", mu)] {
            if !value.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        if let Some(beta) = beta {
            if !beta.is_finite() {
                return Err(ParamError::NonFinite("beta"));
            }
        }
        if dim == 0 {
            return Err(ParamError::Dimension(0));
        }
        if !(p > 3.0) {
            return Err(ParamError::PTooSmall(p));
        }
        let n = f64::from(dim);
        let q_lo = n * (p - 1.0) / 2.0 + 1.0;
        let q_hi = n * (p - 1.0) / 2.0 + (p + 1.0) / 2.0;
        if !(q > q_lo) {
            return Err(ParamError::QLowerBound { q, bound: q_lo });
        }
        if !(q < q_hi) {
            return Err(ParamError::QUpperBound { q, bound: q_hi });
        }
        let window = beta_window(p, q, dim, mu)?;
        let beta = beta.unwrap_or_else(|| window.midpoint());
        if !window.contains(beta) {
            return Err(ParamError::BetaOutsideWindow { beta, window });
        }
        Ok(Self {
            p,
            q,
            mu,
            dim,
            beta,
            b: (p - 1.0) * (p - 1.0) / (4.0 * p),
            gamma: gamma_of(p, q, dim),
            kappa: (p - 1.0).powf(-1.0 / (p - 1.0)),
            window,
        })
    }

    pub fn from_spec(spec: ParamSpec) -> Result<Self, ParamError> {
        Self::validate(spec.p, spec.q, spec.mu, spec.dim, spec.beta)
    }

    pub fn spec(&self) -> ParamSpec {
        ParamSpec {
            p: self.p,
            q: self.q,
            mu: self.mu,
            dim: self.dim,
            beta: Some(self.beta),
        }
    }

    /// Same parameters with a different perturbation strength.
    pub fn with_mu(&self, mu: f64) -> Result<Self, ParamError> {
        Self::validate(self.p, self.q, mu, self.dim, None)
    }

    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn dim(&self) -> u32 {
        self.dim
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// `(p-1)^2 / (4p)`.
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Flat blow-up amplitude `(p-1)^{-1/(p-1)}`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn beta_window(&self) -> BetaWindow {
        self.window
    }
    /// `1/(p-1)`, the blow-up rate exponent.
    pub fn rate(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::from_spec(ParamSpec::default()).expect("reference parameters are admissible")
    }
}

impl TryFrom<ParamSpec> for ModelParams {
    type Error = ParamError;

    fn try_from(spec: ParamSpec) -> Result<Self, Self::Error> {
        Self::from_spec(spec)
    }
}

impl From<ModelParams> for ParamSpec {
    fn from(params: ModelParams) -> Self {
        params.spec()
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={} q={} mu={} dim={} beta={} b={} gamma={} kappa={} beta_window={}",
            self.p, self.q, self.mu, self.dim, self.beta, self.b, self.gamma, self.kappa, self.window
        )
    }
}
