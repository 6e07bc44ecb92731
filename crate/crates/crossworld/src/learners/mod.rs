//! Regression learners feeding the conformal pipeline: quantile
//! regression forests (default) and linear pinball regression as the
//! low-dimensional fallback. Fitted models are immutable and cheap to
//! share across threads.

mod forest;
mod linear;
mod tree;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use forest::{LearnerParams, RandomForest};
pub use linear::{LinearMeanModel, LinearParams, LinearQuantileModel};

use crate::error::{Error, Result};

/// Which learner family the pipeline fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerChoice {
    Forest(LearnerParams),
    Linear {
        #[serde(default)]
        params: LinearParams,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for LearnerChoice {
    fn default() -> Self {
        LearnerChoice::Forest(LearnerParams::default())
    }
}

impl LearnerChoice {
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            LearnerChoice::Forest(p) => LearnerChoice::Forest(p.with_seed(seed)),
            LearnerChoice::Linear { params, .. } => {
                LearnerChoice::Linear { params: params.clone(), seed }
            }
        }
    }

    pub fn fit_quantile(&self, x: &[Vec<f64>], y: &[f64], levels: &[f64]) -> Result<QuantileModel> {
        match self {
            LearnerChoice::Forest(p) => fit_quantile_model(x, y, levels, p),
            LearnerChoice::Linear { params, .. } => Ok(QuantileModel::Linear(Arc::new(
                LinearQuantileModel::fit(x, y, levels, params)?,
            ))),
        }
    }

    pub fn fit_mean(&self, x: &[Vec<f64>], y: &[f64]) -> Result<MeanModel> {
        match self {
            LearnerChoice::Forest(p) => fit_mean_model(x, y, p),
            LearnerChoice::Linear { .. } => {
                Ok(MeanModel::Linear(Arc::new(LinearMeanModel::fit(x, y)?)))
            }
        }
    }
}

/// Conditional-quantile model. The forest variant serves any level in
/// (0, 1) from its leaf-weighted empirical CDF; the linear variant
/// interpolates between its fitted levels.
#[derive(Debug, Clone)]
pub enum QuantileModel {
    Forest { forest: Arc<RandomForest>, levels: Vec<f64> },
    Linear(Arc<LinearQuantileModel>),
}

/// Conditional-mean model.
#[derive(Debug, Clone)]
pub enum MeanModel {
    Forest(Arc<RandomForest>),
    Linear(Arc<LinearMeanModel>),
}

impl QuantileModel {
    pub fn from_forest(forest: Arc<RandomForest>, levels: Vec<f64>) -> Self {
        QuantileModel::Forest { forest, levels }
    }

    /// Quantile levels the model was fitted for (ascending).
    pub fn levels(&self) -> &[f64] {
        match self {
            QuantileModel::Forest { levels, .. } => levels,
            QuantileModel::Linear(m) => m.levels(),
        }
    }

    pub fn predict(&self, row: &[f64], level: f64) -> Result<f64> {
        Ok(self.predict_many(row, &[level])?[0])
    }

    /// Several levels in one pass (one CDF scan for the forest).
    pub fn predict_many(&self, row: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
        match self {
            QuantileModel::Forest { forest, .. } => forest.predict_quantiles(row, levels),
            QuantileModel::Linear(m) => m.predict_many(row, levels),
        }
    }
}

impl MeanModel {
    pub fn from_forest(forest: Arc<RandomForest>) -> Self {
        MeanModel::Forest(forest)
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        match self {
            MeanModel::Forest(f) => f.predict_mean(row),
            MeanModel::Linear(m) => m.predict(row),
        }
    }
}

/// Fits a quantile regression forest. `levels` are validated and kept
/// with the model; prediction accepts any level in (0, 1).
pub fn fit_quantile_model(
    x: &[Vec<f64>],
    y: &[f64],
    levels: &[f64],
    params: &LearnerParams,
) -> Result<QuantileModel> {
    if levels.is_empty() || levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::input("quantile levels must be nonempty and lie in (0, 1)"));
    }
    let forest = Arc::new(RandomForest::fit(x, y, params)?);
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(QuantileModel::Forest { forest, levels: sorted })
}

pub fn predict_quantile(model: &QuantileModel, row: &[f64], level: f64) -> Result<f64> {
    model.predict(row, level)
}

pub fn fit_mean_model(x: &[Vec<f64>], y: &[f64], params: &LearnerParams) -> Result<MeanModel> {
    Ok(MeanModel::Forest(Arc::new(RandomForest::fit(x, y, params)?)))
}

pub fn predict_mean(model: &MeanModel, row: &[f64]) -> Result<f64> {
    model.predict(row)
}

/// Pinball (check) loss at level `q` of predictions against outcomes.
pub fn pinball_loss(predictions: &[f64], outcomes: &[f64], q: f64) -> f64 {
    predictions
        .iter()
        .zip(outcomes)
        .map(|(&p, &y)| {
            let r = y - p;
            if r >= 0.0 {
                q * r
            } else {
                (q - 1.0) * r
            }
        })
        .sum::<f64>()
        / predictions.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params(trees: usize, seed: u64) -> LearnerParams {
        // Leaves much smaller than this chase noise in the splits and
        // under-disperse the tail quantiles.
        LearnerParams { trees, seed, min_leaf: 40, ..Default::default() }
    }

    #[test]
    fn uninformative_covariate_uniform_noise() {
        // y ~ Unif(0,1) independent of x; the 0.9 conditional quantile is 0.9.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = fit_quantile_model(&x, &y, &[0.9], &params(150, 4)).unwrap();
        for q in [-0.5, 0.0, 0.5] {
            let pred = predict_quantile(&m, &[q], 0.9).unwrap();
            assert!((pred - 0.9).abs() < 0.05, "pred at {q} = {pred}");
        }
    }

    #[test]
    fn gaussian_noise_upper_quantile() {
        // y = x + N(0,1); the 0.95 quantile at x = 0 is 1.6449.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 5000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_quantile_model(&x, &y, &[0.95], &params(200, 5)).unwrap();
        let pred = predict_quantile(&m, &[0.0], 0.95).unwrap();
        assert!((pred - 1.6449).abs() < 0.15, "pred = {pred}");
    }

    #[test]
    fn median_of_symmetric_noise_tracks_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 5000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 3.0 * r[0] + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_quantile_model(&x, &y, &[0.5], &params(150, 6)).unwrap();
        let pred = predict_quantile(&m, &[0.5], 0.5).unwrap();
        assert!((pred - 1.5).abs() < 0.15, "pred = {pred}");
    }

    #[test]
    fn mean_model_recovers_linear_trend() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let n = 4000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 2.0 * r[0] + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_mean_model(&x, &y, &params(150, 7)).unwrap();
        let pred = predict_mean(&m, &[0.5]).unwrap();
        assert!((pred - 1.0).abs() < 0.1, "pred = {pred}");
        assert!(fit_mean_model(&[], &[], &params(10, 0)).is_err());
    }

    #[test]
    fn pinball_no_worse_than_constant_predictor() {
        // On an informative DGP the fitted model must beat the constant
        // empirical-quantile predictor on held-out data.
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let gen = |rng: &mut ChaCha8Rng, n: usize| {
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|r| 4.0 * r[0] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            (x, y)
        };
        let (xt, yt) = gen(&mut rng, 5000);
        let (xh, yh) = gen(&mut rng, 2000);
        for q in [0.1, 0.5, 0.9] {
            let m = fit_quantile_model(&xt, &yt, &[q], &params(100, 8)).unwrap();
            let preds: Vec<f64> =
                xh.iter().map(|r| predict_quantile(&m, r, q).unwrap()).collect();
            let model_loss = pinball_loss(&preds, &yh, q);
            let constant = vec![quantile(&yt, q); yh.len()];
            let const_loss = pinball_loss(&constant, &yh, q);
            assert!(model_loss < const_loss, "q = {q}: {model_loss} vs {const_loss}");
        }
    }

    #[test]
    fn linear_choice_dispatch() {
        let x: Vec<Vec<f64>> = (0..500).map(|i| vec![i as f64 / 500.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let choice = LearnerChoice::Linear { params: LinearParams::default(), seed: 0 };
        let qm = choice.fit_quantile(&x, &y, &[0.5]).unwrap();
        assert!((qm.predict(&[0.5], 0.5).unwrap() - 0.5).abs() < 0.05);
        let mm = choice.fit_mean(&x, &y).unwrap();
        assert!((mm.predict(&[0.5]).unwrap() - 0.5).abs() < 1e-6);
    }
}
