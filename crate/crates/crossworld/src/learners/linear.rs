//! Linear quantile regression by smoothed pinball-loss minimization and
//! an ordinary least-squares mean model. Intended as the low-dimensional
//! (d <= 5) alternative to the forest learners.

use serde::{Deserialize, Serialize};

use super::forest::validate_training_data;
use crate::error::{Error, Result};
use crate::stats::quantile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearParams {
    /// Gradient-descent iterations per quantile level.
    pub iterations: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { iterations: 800 }
    }
}

#[derive(Debug, Clone)]
pub struct LinearQuantileModel {
    levels: Vec<f64>,
    /// Per level: `[intercept, w_1 .. w_d]` on standardized features.
    coefs: Vec<Vec<f64>>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearMeanModel {
    /// `[intercept, w_1 .. w_d]` on raw features.
    coef: Vec<f64>,
}

fn standardize(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for row in x {
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut scale = vec![0.0; d];
    for row in x {
        for j in 0..d {
            let c = row[j] - mean[j];
            scale[j] += c * c;
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let std_rows = x
        .iter()
        .map(|row| (0..d).map(|j| (row[j] - mean[j]) / scale[j]).collect())
        .collect();
    (mean, scale, std_rows)
}

/// Smoothed pinball gradient: pinball(r) = q*r + relu(-r), with relu
/// replaced by delta * softplus(-r/delta).
fn fit_level(xs: &[Vec<f64>], y: &[f64], q: f64, iterations: usize) -> Vec<f64> {
    let n = xs.len();
    let d = xs[0].len();
    let y_sd = crate::stats::variance(y).sqrt().max(1e-9);

    let mut w = vec![0.0; d + 1];
    w[0] = quantile(y, q);

    // Adam with an annealed smoothing width.
    let mut m = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    let (b1, b2, lr, eps) = (0.9, 0.999, 0.05 * y_sd, 1e-10);
    let mut grad = vec![0.0; d + 1];

    for it in 0..iterations {
        let frac = it as f64 / iterations.max(1) as f64;
        let delta = (0.5 * y_sd * 0.1f64.powf(3.0 * frac)).max(1e-4 * y_sd);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &yi) in xs.iter().zip(y) {
            let mut pred = w[0];
            for j in 0..d {
                pred += w[j + 1] * row[j];
            }
            let r = yi - pred;
            // dLoss/dr = q - sigmoid(-r/delta); dr/dw = -x.
            let s = 1.0 / (1.0 + (r / delta).exp());
            let g = -(q - s);
            grad[0] += g;
            for j in 0..d {
                grad[j + 1] += g * row[j];
            }
        }
        for g in grad.iter_mut() {
            *g /= n as f64;
        }
        let t = (it + 1) as f64;
        for j in 0..=d {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            let mh = m[j] / (1.0 - b1.powf(t));
            let vh = v[j] / (1.0 - b2.powf(t));
            w[j] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    w
}

impl LinearQuantileModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], levels: &[f64], params: &LinearParams) -> Result<Self> {
        validate_training_data(x, y)?;
        if levels.is_empty() || levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::input("quantile levels must be nonempty and lie in (0, 1)"));
        }
        let (x_mean, x_scale, xs) = standardize(x);
        let mut ordered: Vec<f64> = levels.to_vec();
        ordered.sort_by(f64::total_cmp);
        let coefs = ordered
            .iter()
            .map(|&q| fit_level(&xs, y, q, params.iterations))
            .collect();
        Ok(LinearQuantileModel { levels: ordered, coefs, x_mean, x_scale })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn raw_predictions(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.x_mean.len() {
            return Err(Error::input(format!(
                "query has {} features, model expects {}",
                row.len(),
                self.x_mean.len()
            )));
        }
        let std_row: Vec<f64> = (0..row.len())
            .map(|j| (row[j] - self.x_mean[j]) / self.x_scale[j])
            .collect();
        let mut preds: Vec<f64> = self
            .coefs
            .iter()
            .map(|w| {
                let mut p = w[0];
                for (j, &xj) in std_row.iter().enumerate() {
                    p += w[j + 1] * xj;
                }
                p
            })
            .collect();
        // Monotone rearrangement across levels resolves quantile crossing.
        preds.sort_by(f64::total_cmp);
        Ok(preds)
    }

    /// Prediction at `level`, interpolating linearly between fitted
    /// levels. `level` must lie within the fitted range.
    pub fn predict(&self, row: &[f64], level: f64) -> Result<f64> {
        let preds = self.raw_predictions(row)?;
        let lv = &self.levels;
        if level < lv[0] - 1e-12 || level > lv[lv.len() - 1] + 1e-12 {
            return Err(Error::input(format!(
                "level {level} outside fitted range [{}, {}]",
                lv[0],
                lv[lv.len() - 1]
            )));
        }
        let j = lv.partition_point(|&q| q < level).min(lv.len() - 1);
        if j == 0 || (lv[j] - level).abs() < 1e-12 {
            return Ok(preds[j]);
        }
        let w = (level - lv[j - 1]) / (lv[j] - lv[j - 1]);
        Ok(preds[j - 1] * (1.0 - w) + preds[j] * w)
    }

    /// Predictions at several levels in one pass.
    pub fn predict_many(&self, row: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
        levels.iter().map(|&q| self.predict(row, q)).collect()
    }
}

impl LinearMeanModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let d = validate_training_data(x, y)?;
        let n = x.len();
        // Normal equations with intercept; tiny ridge for rank safety.
        let p = d + 1;
        let mut a = vec![vec![0.0; p]; p];
        let mut b = vec![0.0; p];
        for (row, &yi) in x.iter().zip(y) {
            let mut z = Vec::with_capacity(p);
            z.push(1.0);
            z.extend_from_slice(row);
            for i in 0..p {
                b[i] += z[i] * yi;
                for j in 0..p {
                    a[i][j] += z[i] * z[j];
                }
            }
        }
        let ridge = 1e-9 * n as f64;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let coef = solve(a, b)?;
        Ok(LinearMeanModel { coef })
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() + 1 != self.coef.len() {
            return Err(Error::input(format!(
                "query has {} features, model expects {}",
                row.len(),
                self.coef.len() - 1
            )));
        }
        let mut p = self.coef[0];
        for (j, &xj) in row.iter().enumerate() {
            p += self.coef[j + 1] * xj;
        }
        Ok(p)
    }
}

/// Gaussian elimination with partial pivoting (systems here are tiny).
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::input("singular design matrix"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ols_recovers_linear_function() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let m = LinearMeanModel::fit(&x, &y).unwrap();
        assert!((m.predict(&[0.5]).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quantile_fit_gaussian_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = LinearQuantileModel::fit(&x, &y, &[0.05, 0.5, 0.95], &LinearParams::default())
            .unwrap();
        // True conditional quantiles at x = 0: -1.645, 0, 1.645.
        let q = m.predict_many(&[0.0], &[0.05, 0.5, 0.95]).unwrap();
        assert!((q[0] + 1.645).abs() < 0.15, "q05 = {}", q[0]);
        assert!(q[1].abs() < 0.12, "q50 = {}", q[1]);
        assert!((q[2] - 1.645).abs() < 0.15, "q95 = {}", q[2]);
    }

    #[test]
    fn predictions_monotone_and_range_checked() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let m = LinearQuantileModel::fit(&x, &y, &[0.9, 0.1, 0.5], &LinearParams::default())
            .unwrap();
        let q = m.predict_many(&[50.0], &[0.1, 0.5, 0.9]).unwrap();
        assert!(q[0] <= q[1] && q[1] <= q[2]);
        assert!(m.predict(&[50.0], 0.95).is_err());
        assert!(m.predict(&[50.0, 1.0], 0.5).is_err());
    }
}
