//! Foundational value types shared by every interval construction:
//! closed intervals, the cross-world correlation parameter, and the
//! correlation-adjusted Euclidean distance `D_rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]` in outcome units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::input(format!("non-finite interval [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(Error::input(format!("interval lower end {lo} exceeds upper end {hi}")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Closed-endpoint membership, matching the `<=` events in the
    /// coverage probabilities this interval is scored against.
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Membership test as a free function, mirroring [`Interval::contains`].
pub fn interval_contains(interval: &Interval, y: f64) -> bool {
    interval.contains(y)
}

/// Cross-world correlation `rho = cor(Y(1), Y(0) | X)`, constrained to
/// `[-1, 1]`. Constant across the covariate space.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rho(f64);

impl Rho {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
            return Err(Error::input(format!("rho must lie in [-1, 1], got {value}")));
        }
        Ok(Rho(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Rho {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Rho::new(value)
    }
}

impl From<Rho> for f64 {
    fn from(r: Rho) -> f64 {
        r.0
    }
}

/// Correlation-adjusted Euclidean distance
/// `D_rho(a, b) = sqrt(a^2 + b^2 - 2*rho*a*b)` for nonnegative band
/// widths `a`, `b`.
///
/// `D_0` is the Euclidean norm, `D_{-1}(a, b) = a + b`,
/// `D_1(a, b) = |a - b|`, and `D_rho` is non-increasing in `rho`.
pub fn d_rho(a: f64, b: f64, rho: Rho) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
        return Err(Error::input(format!(
            "d_rho arguments must be nonnegative widths, got ({a}, {b})"
        )));
    }
    // The radicand is >= 0 mathematically but can round negative for
    // rho ~ 1, a ~ b; clamp before the root.
    let radicand = (a * a + b * b - 2.0 * rho.value() * a * b).max(0.0);
    Ok(radicand.sqrt())
}
