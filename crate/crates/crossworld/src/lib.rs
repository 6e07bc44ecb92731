//! Prediction intervals for individual treatment effects (ITE) under a
//! cross-world correlation assumption.
//!
//! The observed data never reveal the joint distribution of the two
//! potential outcomes `Y(0)` and `Y(1)`; their conditional correlation
//! `rho` has to be supplied or bounded by domain knowledge. Given a value
//! (or lower bound) for `rho`, the `cw` module combines per-arm conformal
//! prediction bands into intervals for `Y(1) - Y(0)` through the
//! correlation-adjusted distance `D_rho(a, b) = sqrt(a^2 + b^2 - 2*rho*a*b)`.
//!
//! Module map:
//! - [`core`]: `Interval`, `Rho` and `d_rho`.
//! - [`learners`]: quantile regression forests and linear pinball regression.
//! - [`conformal`]: split CQR bands per treatment arm, plus the naive and
//!   sqrt-level baseline combinations.
//! - [`cate`]: CATE point estimates and bootstrap confidence radii.
//! - [`cw`]: the `CW(rho)` / `CW+CI(rho)` constructors, the Monte-Carlo
//!   convolution baseline and the rho-misspecification rule.
//! - [`datagen`]: synthetic benchmark generators with controllable
//!   cross-world correlation, copula noise, CSV ingestion and the rho
//!   diagnostics.
//! - [`oracle`]: closed-form Gaussian ground truth used for validation.
//! - [`eval`]: coverage/width metrics and the replication engine.

pub mod cate;
pub mod conformal;
pub mod core;
pub mod cw;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod learners;
pub mod oracle;
pub mod seed;
pub(crate) mod stats;

pub use crate::core::{d_rho, interval_contains, Interval, Rho};
pub use crate::error::{Error, Result};
