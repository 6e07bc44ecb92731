//! Split conformalized quantile regression (CQR) producing marginally
//! valid per-arm outcome bands, plus the naive combination and the
//! sqrt-level calibration rule used by the baselines.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core::Interval;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::learners::{LearnerChoice, MeanModel, QuantileModel, RandomForest};

/// Disjoint, exhaustive train/calibration index split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
}

impl SplitPlan {
    /// Per-arm (train, calibration) counts.
    pub fn arm_counts(&self, data: &Dataset, arm: u8) -> (usize, usize) {
        let count = |ix: &[usize]| ix.iter().filter(|&&i| data.t[i] == arm).count();
        (count(&self.train), count(&self.calib))
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let n = data.len();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.calib) {
            if i >= n {
                return Err(Error::input(format!("split index {i} out of range (n = {n})")));
            }
            if seen[i] {
                return Err(Error::input(format!("split index {i} appears twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::input("split does not cover the dataset"));
        }
        Ok(())
    }
}

/// Fitted conditional models for one treatment arm: a quantile model and
/// a mean model, sharing a single forest when the forest learner is used.
#[derive(Debug, Clone)]
pub struct ArmModels {
    pub quantiles: QuantileModel,
    pub mean: MeanModel,
}

/// Fits the per-arm models on the training rows of `split` belonging to
/// `arm`. With the forest learner one forest serves both the quantile
/// and the mean read-outs.
pub fn fit_arm_models(
    data: &Dataset,
    arm: u8,
    split: &SplitPlan,
    levels: &[f64],
    learner: &LearnerChoice,
) -> Result<ArmModels> {
    if levels.is_empty() || levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::input("quantile levels must be nonempty and lie in (0, 1)"));
    }
    let rows: Vec<usize> = split
        .train
        .iter()
        .copied()
        .filter(|&i| data.t[i] == arm)
        .collect();
    if rows.is_empty() {
        return Err(Error::input(format!("no training units in arm {arm}")));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| data.x[i].clone()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    match learner {
        LearnerChoice::Forest(p) => {
            let forest = Arc::new(RandomForest::fit(&x, &y, p)?);
            Ok(ArmModels {
                quantiles: QuantileModel::from_forest(forest.clone(), sorted),
                mean: MeanModel::from_forest(forest),
            })
        }
        _ => Ok(ArmModels {
            quantiles: learner.fit_quantile(&x, &y, &sorted)?,
            mean: learner.fit_mean(&x, &y)?,
        }),
    }
}

/// Which endpoints of the outcome band are conformally calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSide {
    Both,
    /// Upper bound only: P(Y(t) <= mu + u) >= 1 - alpha_arm.
    Upper,
    /// Lower bound only: P(Y(t) >= mu - l) >= 1 - alpha_arm.
    Lower,
}

/// Conformalized outcome band for one arm: at a point x it is
/// [mu(x) - l(x), mu(x) + u(x)] with nonnegative widths, carrying the
/// split-conformal marginal guarantee at level 1 - alpha_arm.
#[derive(Debug, Clone)]
pub struct CalibratedBand {
    pub arm: u8,
    pub alpha_arm: f64,
    side: BandSide,
    models: ArmModels,
    lo_level: f64,
    hi_level: f64,
    q: f64,
}

/// A band evaluated at one point. An uncalibrated side of a one-sided
/// band is reported as infinite width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandAt {
    pub mu: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BandAt {
    pub fn new(mu: f64, lower: f64, upper: f64) -> Result<Self> {
        if !mu.is_finite() || lower.is_nan() || upper.is_nan() || lower < 0.0 || upper < 0.0 {
            return Err(Error::input("band requires finite center and nonnegative widths"));
        }
        Ok(BandAt { mu, lower, upper })
    }

    pub fn lo(&self) -> f64 {
        self.mu - self.lower
    }

    pub fn hi(&self) -> f64 {
        self.mu + self.upper
    }

    pub fn interval(&self) -> Result<Interval> {
        Interval::new(self.lo(), self.hi())
    }
}

fn conformal_quantile(scores: &mut [f64], alpha_arm: f64) -> Result<f64> {
    let n = scores.len();
    let k = ((1.0 - alpha_arm) * (n + 1) as f64).ceil() as usize;
    if k > n {
        return Err(Error::config(format!(
            "calibration set too small: need the {k}-th order statistic from {n} scores \
             (require n_cal >= ceil(1/alpha_arm) - 1)"
        )));
    }
    scores.sort_by(f64::total_cmp);
    Ok(scores[k - 1])
}

/// Conformalizes pre-fitted arm models on the calibration rows of
/// `split`. Two-sided bands use the CQR score
/// `max(q_lo(X) - Y, Y - q_hi(X))` with quantile levels alpha_arm/2 and
/// 1 - alpha_arm/2; one-sided bands use the single-endpoint score at
/// level alpha_arm (lower) or 1 - alpha_arm (upper).
pub fn calibrate_band(
    data: &Dataset,
    arm: u8,
    alpha_arm: f64,
    split: &SplitPlan,
    models: &ArmModels,
    side: BandSide,
) -> Result<CalibratedBand> {
    if !(alpha_arm > 0.0 && alpha_arm < 1.0) {
        return Err(Error::config(format!("alpha_arm must lie in (0, 1), got {alpha_arm}")));
    }
    let (lo_level, hi_level) = match side {
        BandSide::Both => (alpha_arm / 2.0, 1.0 - alpha_arm / 2.0),
        BandSide::Upper => (alpha_arm, 1.0 - alpha_arm),
        BandSide::Lower => (alpha_arm, 1.0 - alpha_arm),
    };
    let rows: Vec<usize> = split
        .calib
        .iter()
        .copied()
        .filter(|&i| data.t[i] == arm)
        .collect();
    if rows.is_empty() {
        return Err(Error::input(format!("no calibration units in arm {arm}")));
    }
    let mut scores = Vec::with_capacity(rows.len());
    for &i in &rows {
        let y = data.y[i];
        let score = match side {
            BandSide::Both => {
                let q = models.quantiles.predict_many(&data.x[i], &[lo_level, hi_level])?;
                (q[0] - y).max(y - q[1])
            }
            BandSide::Upper => y - models.quantiles.predict(&data.x[i], hi_level)?,
            BandSide::Lower => models.quantiles.predict(&data.x[i], lo_level)? - y,
        };
        scores.push(score);
    }
    let q = conformal_quantile(&mut scores, alpha_arm)?;
    Ok(CalibratedBand { arm, alpha_arm, side, models: models.clone(), lo_level, hi_level, q })
}

/// Fits and conformalizes a two-sided CQR band for `arm` at miscoverage
/// `alpha_arm`: each endpoint then holds one-sided at roughly
/// 1 - alpha_arm/2 and the band jointly at 1 - alpha_arm.
pub fn fit_cqr_band(
    data: &Dataset,
    arm: u8,
    alpha_arm: f64,
    split: &SplitPlan,
    learner: &LearnerChoice,
) -> Result<CalibratedBand> {
    if !(alpha_arm > 0.0 && alpha_arm < 1.0) {
        return Err(Error::config(format!("alpha_arm must lie in (0, 1), got {alpha_arm}")));
    }
    let levels = [alpha_arm / 2.0, 1.0 - alpha_arm / 2.0];
    let models = fit_arm_models(data, arm, split, &levels, learner)?;
    calibrate_band(data, arm, alpha_arm, split, &models, BandSide::Both)
}

/// One-sided counterpart of [`fit_cqr_band`]; only the requested
/// endpoint is calibrated, at level 1 - alpha_arm.
pub fn fit_one_sided_band(
    data: &Dataset,
    arm: u8,
    alpha_arm: f64,
    side: BandSide,
    split: &SplitPlan,
    learner: &LearnerChoice,
) -> Result<CalibratedBand> {
    if side == BandSide::Both {
        return fit_cqr_band(data, arm, alpha_arm, split, learner);
    }
    if !(alpha_arm > 0.0 && alpha_arm < 1.0) {
        return Err(Error::config(format!("alpha_arm must lie in (0, 1), got {alpha_arm}")));
    }
    let level = match side {
        BandSide::Upper => 1.0 - alpha_arm,
        _ => alpha_arm,
    };
    let models = fit_arm_models(data, arm, split, &[level], learner)?;
    calibrate_band(data, arm, alpha_arm, split, &models, side)
}

impl CalibratedBand {
    pub fn side(&self) -> BandSide {
        self.side
    }

    /// The conformal correction added to both model quantiles.
    pub fn correction(&self) -> f64 {
        self.q
    }

    pub fn mean_model(&self) -> &MeanModel {
        &self.models.mean
    }

    /// Evaluates the band at `row`. Widths are clamped at zero; the
    /// missing side of a one-sided band is infinite.
    pub fn at(&self, row: &[f64]) -> Result<BandAt> {
        let mu = self.models.mean.predict(row)?;
        match self.side {
            BandSide::Both => {
                let q = self.models.quantiles.predict_many(row, &[self.lo_level, self.hi_level])?;
                Ok(self.at_with(mu, q[0], q[1]))
            }
            BandSide::Upper => {
                let qhi = self.models.quantiles.predict(row, self.hi_level)?;
                Ok(BandAt { mu, lower: f64::INFINITY, upper: (qhi - mu + self.q).max(0.0) })
            }
            BandSide::Lower => {
                let qlo = self.models.quantiles.predict(row, self.lo_level)?;
                Ok(BandAt { mu, lower: (mu - qlo + self.q).max(0.0), upper: f64::INFINITY })
            }
        }
    }

    /// Band from precomputed model predictions (two-sided bands only);
    /// lets callers batch quantile queries across several bands sharing
    /// the same models.
    pub(crate) fn at_with(&self, mu: f64, q_lo: f64, q_hi: f64) -> BandAt {
        BandAt {
            mu,
            lower: (mu - q_lo + self.q).max(0.0),
            upper: (q_hi - mu + self.q).max(0.0),
        }
    }

    /// Quantile levels this band reads from its model.
    pub fn levels(&self) -> (f64, f64) {
        (self.lo_level, self.hi_level)
    }
}

/// Naive ITE interval: the Minkowski difference of the two outcome
/// bands, [lo1 - hi0, hi1 - lo0]. Valid when each band is calibrated at
/// level 1 - alpha/2 (Bonferroni).
pub fn naive_ite_interval(band1: &CalibratedBand, band0: &CalibratedBand, x: &[f64]) -> Result<Interval> {
    naive_from_bands(&band1.at(x)?, &band0.at(x)?)
}

/// [`naive_ite_interval`] on pre-evaluated bands.
pub fn naive_from_bands(b1: &BandAt, b0: &BandAt) -> Result<Interval> {
    Interval::new(b1.lo() - b0.hi(), b1.hi() - b0.lo())
}

/// Per-arm miscoverage 1 - sqrt(1 - alpha): calibrating both arms at
/// this level gives a valid 1 - alpha ITE interval under independent
/// cross-world noise.
pub fn sqrt_level(alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(1.0 - (1.0 - alpha).sqrt())
}
