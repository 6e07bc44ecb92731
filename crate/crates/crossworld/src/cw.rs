//! Cross-world interval constructors.
//!
//! `cw_interval` combines per-arm conformal band widths through the
//! correlation-adjusted distance `D_rho`; `cw_ci_interval` additionally
//! widens by c-scaled CATE confidence radii. `cmc_interval` is the
//! Monte-Carlo convolution baseline, and `misspecify_rho` the shifted-rho
//! robustness protocol.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::BandAt;
use crate::core::{d_rho, Interval, Rho};
use crate::datagen::{sample_uniform_pairs, Copula};
use crate::error::{Error, Result};
use crate::learners::QuantileModel;
use crate::stats::quantile;

/// How the CI-widening coefficient c is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CRule {
    /// c = ((1 + rho) / 2)^2 — the default.
    Auto,
    /// c = (1 + rho) / 2.
    Linear,
    /// A fixed c in [0, 1].
    Fixed(f64),
}

impl Default for CRule {
    fn default() -> Self {
        CRule::Auto
    }
}

impl CRule {
    /// Effective coefficient at the given rho; always inside [0, 1].
    pub fn effective_c(self, rho: Rho) -> Result<f64> {
        let c = match self {
            CRule::Auto => ((1.0 + rho.value()) / 2.0).powi(2),
            CRule::Linear => (1.0 + rho.value()) / 2.0,
            CRule::Fixed(c) => c,
        };
        validate_c(c)?;
        Ok(c)
    }
}

fn validate_c(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::config(format!("c must lie in [0, 1], got {c}")));
    }
    Ok(())
}

/// Parameters of the cross-world constructions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CwConfig {
    /// Target ITE miscoverage.
    pub alpha: f64,
    /// The rho plugged into the construction (possibly misspecified).
    pub rho_used: Rho,
    pub c: CRule,
    /// Bootstrap resamples behind the CATE CI.
    pub b: usize,
    /// CATE CI miscoverage.
    pub beta: f64,
}

impl Default for CwConfig {
    fn default() -> Self {
        CwConfig {
            alpha: 0.1,
            rho_used: Rho::new(0.0).unwrap(),
            c: CRule::Auto,
            b: 200,
            beta: 0.1,
        }
    }
}

impl CwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        self.c.effective_c(self.rho_used)?;
        Ok(())
    }
}

/// CW(rho) interval
/// `[tau_hat - D_rho(l1, u0), tau_hat + D_rho(l0, u1)]` from per-arm
/// bands evaluated at the query point. Each band must be two-sided and
/// calibrated so each endpoint holds at level 1 - alpha/2.
pub fn cw_interval(tau_hat: f64, band1: &BandAt, band0: &BandAt, rho: Rho) -> Result<Interval> {
    if !tau_hat.is_finite() {
        return Err(Error::input("tau_hat must be finite"));
    }
    let down = d_rho(band1.lower, band0.upper, rho)?;
    let up = d_rho(band0.lower, band1.upper, rho)?;
    Interval::new(tau_hat - down, tau_hat + up)
}

/// CW+CI(rho): `cw_interval` enlarged by `c * r_l` below and `c * r_u`
/// above, where (r_l, r_u) are CATE confidence radii at the query point.
/// With c = 0 this equals `cw_interval` exactly.
pub fn cw_ci_interval(
    tau_hat: f64,
    r_l: f64,
    r_u: f64,
    band1: &BandAt,
    band0: &BandAt,
    rho: Rho,
    c: f64,
) -> Result<Interval> {
    validate_c(c)?;
    if r_l < 0.0 || r_u < 0.0 || !r_l.is_finite() || !r_u.is_finite() {
        return Err(Error::input(format!("CI radii must be nonnegative, got ({r_l}, {r_u})")));
    }
    let base = cw_interval(tau_hat, band1, band0, rho)?;
    Interval::new(base.lo() - c * r_l, base.hi() + c * r_u)
}

/// Monte-Carlo convolution baseline: draws `m` uniform pairs from a
/// Gaussian copula with correlation `rho`, maps them through the fitted
/// conditional quantile functions at `x` (linear interpolation on the
/// model's level grid, clamped at the grid ends), and returns the
/// empirical alpha/2 and 1 - alpha/2 quantiles of the differences.
/// rho = 0 recovers the independent-sampling baseline.
pub fn cmc_interval(
    qmodel1: &QuantileModel,
    qmodel0: &QuantileModel,
    x: &[f64],
    alpha: f64,
    m: usize,
    rho: Rho,
    seed: u64,
) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if m < 1000 {
        return Err(Error::config(format!("CMC needs at least 1000 samples, got {m}")));
    }
    let grid1 = qmodel1.levels();
    let grid0 = qmodel0.levels();
    if grid1.len() < 9 || grid0.len() < 9 {
        return Err(Error::config(format!(
            "CMC needs quantile models on a grid of at least 9 levels, got {} and {}",
            grid1.len(),
            grid0.len()
        )));
    }
    let vals1 = qmodel1.predict_many(x, grid1)?;
    let vals0 = qmodel0.predict_many(x, grid0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u1, u0) = sample_uniform_pairs(Copula::Gaussian, rho, m, &mut rng)?;
    let diffs: Vec<f64> = u1
        .iter()
        .zip(&u0)
        .map(|(&a, &b)| grid_quantile(grid1, &vals1, a) - grid_quantile(grid0, &vals0, b))
        .collect();
    Interval::new(quantile(&diffs, alpha / 2.0), quantile(&diffs, 1.0 - alpha / 2.0))
}

/// Inverse-CDF lookup on a fitted quantile grid with linear
/// interpolation; u outside the grid range clamps to the end values.
fn grid_quantile(levels: &[f64], values: &[f64], u: f64) -> f64 {
    if u <= levels[0] {
        return values[0];
    }
    let last = levels.len() - 1;
    if u >= levels[last] {
        return values[last];
    }
    let j = levels.partition_point(|&q| q < u);
    let (q0, q1) = (levels[j - 1], levels[j]);
    let w = (u - q0) / (q1 - q0);
    values[j - 1] * (1.0 - w) + values[j] * w
}

/// Shifted-rho misspecification protocol: returns max(-1, rho - delta),
/// additionally capped at 1 so the result is a valid correlation.
pub fn misspecify_rho(rho_true: Rho, delta: f64) -> Result<Rho> {
    if !delta.is_finite() {
        return Err(Error::input("delta must be finite"));
    }
    Rho::new((rho_true.value() - delta).clamp(-1.0, 1.0))
}
