//! Random forest with leaf-weighted quantile readout.
//!
//! Each tree contributes the empirical weights of the training points
//! sharing the query leaf; conditional quantiles are read off the
//! weighted empirical CDF of the training responses, so one fitted
//! forest serves every quantile level as well as the conditional mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Forest hyperparameters. `mtry = None` means `max(1, ceil(d/3))`,
/// `max_depth = None` means unlimited.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerParams {
    pub trees: usize,
    pub min_leaf: usize,
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            trees: 500,
            min_leaf: 10,
            mtry: None,
            max_depth: None,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl LearnerParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        LearnerParams { seed, ..self.clone() }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::input("forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(Error::input("min_leaf must be at least 1"));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > d {
                return Err(Error::input(format!("mtry {m} outside 1..={d}")));
            }
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::input(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    y: Vec<f64>,
    /// Row ids sorted by ascending response; drives the weighted-CDF scan.
    order: Vec<u32>,
    d: usize,
}

pub(crate) fn validate_training_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::input("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "feature rows ({}) and responses ({}) differ in length",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::input("zero-dimensional covariates"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::input(format!("row {i} has {} features, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite covariate in row {i}")));
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite response in row {i}")));
    }
    Ok(d)
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &LearnerParams) -> Result<Self> {
        let d = validate_training_data(x, y)?;
        params.validate(d)?;
        let n = x.len();
        if n < 2 * params.min_leaf {
            return Err(Error::input(format!(
                "need at least {} rows for min_leaf {}, got {n}",
                2 * params.min_leaf,
                params.min_leaf
            )));
        }
        let tree_params = TreeParams {
            min_leaf: params.min_leaf,
            mtry: params.mtry.unwrap_or_else(|| ((d + 2) / 3).max(1)),
            max_depth: params.max_depth.unwrap_or(usize::MAX),
        };
        let sample_size = ((params.subsample * n as f64).ceil() as usize).max(2 * params.min_leaf);

        // Per-tree seeds from the master seed keep the fit deterministic
        // regardless of the parallel schedule.
        let trees: Vec<Tree> = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &[t as u64]));
                let sample: Vec<u32> =
                    (0..sample_size).map(|_| rng.gen_range(0..n) as u32).collect();
                Tree::fit(x, y, sample, &tree_params, &mut rng)
            })
            .collect();

        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| y[a as usize].total_cmp(&y[b as usize]));
        Ok(RandomForest { trees, y: y.to_vec(), order, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::input(format!(
                "query has {} features, model expects {}",
                row.len(),
                self.d
            )));
        }
        Ok(())
    }

    /// Forest mean: average over trees of the leaf-mean response.
    pub fn predict_mean(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let mut acc = 0.0;
        for tree in &self.trees {
            let items = tree.leaf_items(row);
            let s: f64 = items.iter().map(|&i| self.y[i as usize]).sum();
            acc += s / items.len() as f64;
        }
        Ok(acc / self.trees.len() as f64)
    }

    /// Quantiles of the leaf-weighted empirical response distribution at
    /// `row`, one per requested level. Output is non-decreasing whenever
    /// `levels` is non-decreasing (single CDF scan).
    pub fn predict_quantiles(&self, row: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        if levels.is_empty() {
            return Err(Error::input("no quantile levels requested"));
        }
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::input("quantile levels must lie in (0, 1)"));
        }
        let n = self.y.len();
        let mut weights = vec![0.0f64; n];
        for tree in &self.trees {
            let items = tree.leaf_items(row);
            let w = 1.0 / items.len() as f64;
            for &i in items {
                weights[i as usize] += w;
            }
        }
        let total = self.trees.len() as f64;

        // Process levels in ascending order with one pass over the CDF.
        let mut level_order: Vec<usize> = (0..levels.len()).collect();
        level_order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));

        let mut out = vec![0.0; levels.len()];
        let mut cum = 0.0;
        let mut pos = 0usize;
        let mut current = self.y[self.order[0] as usize];
        for &li in &level_order {
            let target = levels[li] * total;
            while cum < target - 1e-12 * total && pos < n {
                let id = self.order[pos] as usize;
                cum += weights[id];
                current = self.y[id];
                pos += 1;
            }
            out[li] = current;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_x(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / n as f64]).collect()
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = grid_x(80);
        let y = vec![5.0; 80];
        let params = LearnerParams { trees: 20, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params).unwrap();
        assert_eq!(f.predict_mean(&[0.3]).unwrap(), 5.0);
        let q = f.predict_quantiles(&[0.3], &[0.1, 0.5, 0.9]).unwrap();
        assert!(q.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let x = grid_x(200);
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + (r[0] * 13.0).sin()).collect();
        let params = LearnerParams { trees: 30, seed: 99, ..Default::default() };
        let f1 = RandomForest::fit(&x, &y, &params).unwrap();
        let f2 = RandomForest::fit(&x, &y, &params).unwrap();
        for i in 0..20 {
            let q = [i as f64 / 20.0];
            assert_eq!(f1.predict_mean(&q).unwrap(), f2.predict_mean(&q).unwrap());
            assert_eq!(
                f1.predict_quantiles(&q, &[0.25, 0.75]).unwrap(),
                f2.predict_quantiles(&q, &[0.25, 0.75]).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = grid_x(30);
        let y = vec![1.0; 30];
        assert!(RandomForest::fit(&[], &[], &LearnerParams::default()).is_err());
        let mut bad_y = y.clone();
        bad_y[3] = f64::NAN;
        let params = LearnerParams { trees: 5, min_leaf: 2, ..Default::default() };
        assert!(RandomForest::fit(&x, &bad_y, &params).is_err());
        let f = RandomForest::fit(&x, &y, &params).unwrap();
        assert!(f.predict_mean(&[0.1, 0.2]).is_err()); // dimension mismatch
        assert!(f.predict_quantiles(&[0.1], &[1.2]).is_err());
    }

    #[test]
    fn quantiles_monotone_in_level() {
        let x = grid_x(300);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, r)| r[0] + ((i * 2654435761) % 1000) as f64 / 1000.0)
            .collect();
        let params = LearnerParams { trees: 40, seed: 3, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params).unwrap();
        let levels: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let q = f.predict_quantiles(&[0.5], &levels).unwrap();
        for w in q.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}
