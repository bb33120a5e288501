//! Uniform radial grid, finite-difference operators for radially symmetric
//! fields, and the prefix integral that evaluates the non-local term.
//!
//! Fields are even in the radial coordinate: the ghost value at `r = -h`
//! equals the value at `r = h`, which closes the Laplacian at the origin as
//! `N u''(0)` and forces `u_r(0) = 0`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid radius must be positive and finite (got {0})")]
    Radius(f64),
    #[error("grid needs at least {min} intervals (got {got})")]
    TooFewIntervals { got: usize, min: usize },
    #[error("dimension must be >= 1")]
    Dimension,
    #[error("field has {got} values, grid has {expected} nodes")]
    Length { got: usize, expected: usize },
    #[error("non-finite value {value} at node {index} (r = {r})")]
    NonFinite { index: usize, r: f64, value: f64 },
}

/// Outer boundary closure at `r = R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `u(R) = 0`; the boundary node is never evolved.
    #[default]
    DirichletZero,
    /// `u_r(R) = 0` through a mirrored ghost node.
    NeumannZero,
}

impl std::str::FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirichlet-zero" | "dirichlet" => Ok(Self::DirichletZero),
            "neumann-zero" | "neumann" => Ok(Self::NeumannZero),
            other => Err(format!("unknown boundary `{other}` (expected dirichlet-zero or neumann-zero)")),
        }
    }
}

/// Nodes `r_i = i h`, `i = 0..=M`, with `h = R/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct RadialGrid {
    radius: f64,
    intervals: usize,
    spacing: f64,
    dim: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpec {
    radius: f64,
    intervals: usize,
    dim: u32,
}

impl TryFrom<GridSpec> for RadialGrid {
    type Error = GridError;

    fn try_from(spec: GridSpec) -> Result<Self, Self::Error> {
        RadialGrid::new(spec.radius, spec.intervals, spec.dim)
    }
}

impl From<RadialGrid> for GridSpec {
    fn from(grid: RadialGrid) -> Self {
        GridSpec {
            radius: grid.radius,
            intervals: grid.intervals,
            dim: grid.dim,
        }
    }
}

impl RadialGrid {
    pub const MIN_INTERVALS: usize = 8;

    pub fn new(radius: f64, intervals: usize, dim: u32) -> Result<Self, GridError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GridError::Radius(radius));
        }
        if intervals < Self::MIN_INTERVALS {
            return Err(GridError::TooFewIntervals {
                got: intervals,
                min: Self::MIN_INTERVALS,
            });
        }
        if dim == 0 {
            return Err(GridError::Dimension);
        }
        Ok(Self {
            radius,
            intervals,
            spacing: radius / intervals as f64,
            dim,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn intervals(&self) -> usize {
        self.intervals
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn dim(&self) -> u32 {
        self.dim
    }
    /// Number of nodes, `M + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// Area of the unit sphere `S^{N-1}`, `2 pi^{N/2} / Gamma(N/2)`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// Explicit-Euler stability limit `h^2 / (2N)` of the discrete Laplacian.
    pub fn diffusion_dt_limit(&self) -> f64 {
        self.spacing * self.spacing / (2.0 * f64::from(self.dim))
    }

    /// Index `i` and weight `w` with `r = (1 - w) r_i + w r_{i+1}`;
    /// `None` outside `[0, R]`.
    pub fn locate(&self, r: f64) -> Option<(usize, f64)> {
        if !(r >= 0.0 && r <= self.radius) {
            return None;
        }
        let x = r / self.spacing;
        let i = (x.floor() as usize).min(self.intervals - 1);
        Some((i, (x - i as f64).clamp(0.0, 1.0)))
    }
}

pub fn sphere_area(dim: u32) -> f64 {
    use std::f64::consts::PI;
    // A(n + 2) = A(n) * 2 pi / n, A(1) = 2, A(2) = 2 pi.
    let (mut n, mut area) = if dim % 2 == 1 { (1, 2.0) } else { (2, 2.0 * PI) };
    while n < dim {
        area *= 2.0 * PI / f64::from(n);
        n += 2;
    }
    area
}

/// Values of a radial scalar at the grid nodes at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<f64>,
    time: f64,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>, time: f64) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                got: values.len(),
                expected: grid.len(),
            });
        }
        check_finite(&grid, &values)?;
        Ok(Self { grid, values, time })
    }

    pub fn from_fn(grid: RadialGrid, time: f64, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, time)
    }

    pub fn zeros(grid: RadialGrid, time: f64) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            time,
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation at radius `r`; `None` outside the grid.
    pub fn sample(&self, r: f64) -> Option<f64> {
        let (i, w) = self.grid.locate(r)?;
        Some((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }
}

/// `x^e` for `x >= 0`, using `powi` when `e` is a small integer.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Power {
    Int(i32),
    Real(f64),
}

impl Power {
    pub(crate) fn new(e: f64) -> Self {
        if e.fract() == 0.0 && e.abs() <= 16.0 {
            Power::Int(e as i32)
        } else {
            Power::Real(e)
        }
    }

    /// `f(i, |x_i|^e)` for every index, with the exponent dispatch hoisted
    /// out of the loop.
    #[inline]
    pub(crate) fn for_each(self, xs: &[f64], mut f: impl FnMut(usize, f64)) {
        macro_rules! each {
            ($p:expr) => {
                for (i, &x) in xs.iter().enumerate() {
                    let x = x.abs();
                    f(i, $p(x));
                }
            };
        }
        match self {
            Power::Int(0) => each!(|_x: f64| 1.0),
            Power::Int(1) => each!(|x: f64| x),
            Power::Int(2) => each!(|x: f64| x * x),
            Power::Int(3) => each!(|x: f64| x * x * x),
            other => each!(|x: f64| other.apply(x)),
        }
    }

    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Power::Int(0) => 1.0,
            Power::Int(1) => x,
            Power::Int(2) => x * x,
            Power::Int(3) => x * x * x,
            Power::Int(4) => {
                let x2 = x * x;
                x2 * x2
            }
            Power::Int(k) => x.powi(k),
            Power::Real(e) => x.powf(e),
        }
    }
}

pub(crate) fn check_finite(grid: &RadialGrid, values: &[f64]) -> Result<(), GridError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(GridError::NonFinite {
            index,
            r: grid.node(index),
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Discrete Laplacian into `out`. Second-order central differences in the
/// interior, `2N (u_1 - u_0)/h^2` at the origin; the outer node follows
/// `boundary` (zero for Dirichlet, mirrored ghost for Neumann).
pub(crate) fn laplacian_into(grid: &RadialGrid, u: &[f64], boundary: Boundary, out: &mut [f64]) {
    let m = grid.intervals();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let nm1 = f64::from(grid.dim()) - 1.0;
    out[0] = 2.0 * f64::from(grid.dim()) * (u[1] - u[0]) * inv_h2;
    if nm1 == 0.0 {
        for i in 1..m {
            out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2;
        }
    } else {
        for i in 1..m {
            let second = u[i + 1] - 2.0 * u[i] + u[i - 1];
            let first = u[i + 1] - u[i - 1];
            out[i] = (second + nm1 / (2.0 * i as f64) * first) * inv_h2;
        }
    }
    out[m] = match boundary {
        Boundary::DirichletZero => 0.0,
        Boundary::NeumannZero => 2.0 * (u[m - 1] - u[m]) * inv_h2,
    };
}

/// Radial derivative into `out`: zero at the origin, central in the
/// interior, one-sided second order at `r = R`.
pub(crate) fn gradient_into(grid: &RadialGrid, u: &[f64], out: &mut [f64]) {
    let m = grid.intervals();
    let inv_2h = 0.5 / grid.spacing();
    out[0] = 0.0;
    for i in 1..m {
        out[i] = (u[i + 1] - u[i - 1]) * inv_2h;
    }
    out[m] = (3.0 * u[m] - 4.0 * u[m - 1] + u[m - 2]) * inv_2h;
}

/// Trapezoid prefix sums of `sigma_{N-1} |u|^{q-1} r^{N-1}` into `out`.
pub(crate) fn prefix_into(grid: &RadialGrid, u: &[f64], q: f64, out: &mut [f64]) {
    let half = 0.5 * grid.spacing() * grid.sphere_area();
    let h = grid.spacing();
    Power::new(q - 1.0).for_each(u, |i, v| out[i] = v);
    if grid.dim() > 1 {
        let weight = Power::new(f64::from(grid.dim()) - 1.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o *= weight.apply(i as f64 * h);
        }
    }
    let mut prev = out[0];
    out[0] = 0.0;
    for i in 1..out.len() {
        let cur = out[i];
        out[i] = out[i - 1] + half * (prev + cur);
        prev = cur;
    }
}

pub fn laplacian(field: &RadialField, boundary: Boundary) -> RadialField {
    let mut out = vec![0.0; field.grid.len()];
    laplacian_into(&field.grid, &field.values, boundary, &mut out);
    RadialField {
        grid: field.grid,
        values: out,
        time: field.time,
    }
}

pub fn gradient(field: &RadialField) -> RadialField {
    let mut out = vec![0.0; field.grid.len()];
    gradient_into(&field.grid, &field.values, &mut out);
    RadialField {
        grid: field.grid,
        values: out,
        time: field.time,
    }
}

/// `J_i = integral of |u|^{q-1} over the ball of radius r_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalPrefix {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl NonlocalPrefix {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    /// Integral over the whole grid ball, the largest prefix value.
    pub fn total(&self) -> f64 {
        *self.values.last().expect("grids have at least 9 nodes")
    }
}

pub fn nonlocal_prefix(field: &RadialField, params: &ModelParams) -> NonlocalPrefix {
    let mut out = vec![0.0; field.grid.len()];
    prefix_into(&field.grid, &field.values, params.q(), &mut out);
    NonlocalPrefix {
        grid: field.grid,
        values: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNorm {
    pub value: f64,
    pub index: usize,
    pub radius: f64,
}

/// Maximum of `|u|` over nodes with `r_i <= radius` (all nodes when `None`).
/// Ties go to the smallest radius.
pub fn sup_norm(field: &RadialField, radius: Option<f64>) -> SupNorm {
    let (index, value) = sup_abs(&field.values, field.grid, radius);
    SupNorm {
        value,
        index,
        radius: field.grid.node(index),
    }
}

pub(crate) fn sup_abs(values: &[f64], grid: RadialGrid, radius: Option<f64>) -> (usize, f64) {
    let last = match radius {
        Some(r) => ((r / grid.spacing() + 1e-9).floor() as usize).min(grid.intervals()),
        None => grid.intervals(),
    };
    let mut best = (0, values[0].abs());
    for (i, v) in values.iter().enumerate().take(last + 1).skip(1) {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best
}

/// Writes the `r,u,du_dr,J` snapshot table with a `#` comment header.
pub fn write_snapshot_csv<W: Write>(
    mut out: W,
    field: &RadialField,
    params: &ModelParams,
    header: &str,
) -> io::Result<()> {
    write!(out, "{header}")?;
    writeln!(out, "# time: {}", field.time)?;
    writeln!(out, "r,u,du_dr,J")?;
    let grad = gradient(field);
    let prefix = nonlocal_prefix(field, params);
    for i in 0..field.grid.len() {
        writeln!(
            out,
            "{},{},{},{}",
            field.grid.node(i),
            field.values[i],
            grad.values[i],
            prefix.values[i]
        )?;
    }
    Ok(())
}
