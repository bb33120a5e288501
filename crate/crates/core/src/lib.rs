//! Radial finite-difference solver and verification toolkit for the
//! semilinear heat equation with a non-local gradient perturbation,
//! `u_t = Lap u + |u|^{p-1} u + mu |grad u| J(r)`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod grid;
pub mod lemmas;
pub mod params;
pub mod profile;
pub mod similarity;
pub mod solver;

pub use grid::{Boundary, RadialField, RadialGrid};
pub use params::{ModelParams, ParamSpec};
