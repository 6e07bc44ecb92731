//! CATE point estimation and bootstrap confidence intervals for it.
//!
//! The point estimate is the T-learner difference of per-arm mean
//! models; interval radii come from a stratified percentile bootstrap.

use rayon::prelude::*;

use crate::core::Interval;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::learners::{LearnerChoice, MeanModel};
use crate::seed::derive_seed;
use crate::stats::quantile;

/// CATE estimate at a batch of query points with percentile-bootstrap
/// confidence radii: CI(x) = [tau_hat(x) - r_l(x), tau_hat(x) + r_u(x)].
#[derive(Debug, Clone)]
pub struct CateEstimate {
    pub tau_hat: Vec<f64>,
    pub r_l: Vec<f64>,
    pub r_u: Vec<f64>,
    /// CI level is 1 - beta.
    pub beta: f64,
    /// Number of bootstrap resamples behind the radii.
    pub b: usize,
}

impl CateEstimate {
    pub fn len(&self) -> usize {
        self.tau_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_hat.is_empty()
    }

    pub fn ci(&self, i: usize) -> Result<Interval> {
        Interval::new(self.tau_hat[i] - self.r_l[i], self.tau_hat[i] + self.r_u[i])
    }
}

/// T-learner CATE point estimate `mu1(x) - mu0(x)`.
pub fn estimate_cate(mean1: &MeanModel, mean0: &MeanModel, x: &[f64]) -> Result<f64> {
    Ok(mean1.predict(x)? - mean0.predict(x)?)
}

/// Bootstrap CATE confidence intervals at the query points; the point
/// estimate is refit on the full data. See [`bootstrap_cate_ci_around`].
pub fn bootstrap_cate_ci(
    data: &Dataset,
    x_query: &[Vec<f64>],
    b: usize,
    beta: f64,
    learner: &LearnerChoice,
    seed: u64,
) -> Result<CateEstimate> {
    let (x1, y1) = arm_data(data, 1)?;
    let (x0, y0) = arm_data(data, 0)?;
    let m1 = learner.with_seed(derive_seed(seed, &[u64::MAX, 1])).fit_mean(&x1, &y1)?;
    let m0 = learner.with_seed(derive_seed(seed, &[u64::MAX, 0])).fit_mean(&x0, &y0)?;
    let tau_hat: Vec<f64> = x_query
        .iter()
        .map(|x| estimate_cate(&m1, &m0, x))
        .collect::<Result<_>>()?;
    bootstrap_cate_ci_around(data, x_query, &tau_hat, b, beta, learner, seed)
}

/// Percentile-bootstrap CI radii around caller-supplied point estimates
/// `tau_hat` (one per query row): B stratified resamples, two mean-model
/// refits each, radii from the empirical beta/2 and 1 - beta/2 quantiles
/// of the bootstrap CATE values, clamped at zero. Deterministic given
/// the seed regardless of thread schedule.
pub fn bootstrap_cate_ci_around(
    data: &Dataset,
    x_query: &[Vec<f64>],
    tau_hat: &[f64],
    b: usize,
    beta: f64,
    learner: &LearnerChoice,
    seed: u64,
) -> Result<CateEstimate> {
    if b < 50 {
        return Err(Error::config(format!("bootstrap count must be at least 50, got {b}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config(format!("beta must lie in (0, 1), got {beta}")));
    }
    if x_query.is_empty() {
        return Err(Error::input("no query points"));
    }
    if tau_hat.len() != x_query.len() {
        return Err(Error::input("tau_hat and x_query lengths differ"));
    }
    let (x1, y1) = arm_data(data, 1)?;
    let (x0, y0) = arm_data(data, 0)?;

    // One row of bootstrap CATE values per replicate, seeded per
    // replicate so the parallel schedule cannot change the result.
    let draws: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let rep_seed = derive_seed(seed, &[rep as u64]);
            let (rx1, ry1) = resample(&x1, &y1, derive_seed(rep_seed, &[1]));
            let (rx0, ry0) = resample(&x0, &y0, derive_seed(rep_seed, &[0]));
            let m1 = learner.with_seed(derive_seed(rep_seed, &[11])).fit_mean(&rx1, &ry1)?;
            let m0 = learner.with_seed(derive_seed(rep_seed, &[10])).fit_mean(&rx0, &ry0)?;
            x_query.iter().map(|x| estimate_cate(&m1, &m0, x)).collect()
        })
        .collect::<Result<_>>()?;

    let lo_level = beta / 2.0;
    let hi_level = 1.0 - beta / 2.0;
    let mut r_l = Vec::with_capacity(x_query.len());
    let mut r_u = Vec::with_capacity(x_query.len());
    let mut column = vec![0.0; b];
    for (qi, &center) in tau_hat.iter().enumerate() {
        for (rep, row) in draws.iter().enumerate() {
            column[rep] = row[qi];
        }
        r_l.push((center - quantile(&column, lo_level)).max(0.0));
        r_u.push((quantile(&column, hi_level) - center).max(0.0));
    }
    Ok(CateEstimate { tau_hat: tau_hat.to_vec(), r_l, r_u, beta, b })
}

fn arm_data(data: &Dataset, arm: u8) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let rows = data.arm_rows(arm);
    if rows.is_empty() {
        return Err(Error::input(format!("no units in arm {arm}")));
    }
    Ok((
        rows.iter().map(|&i| data.x[i].clone()).collect(),
        rows.iter().map(|&i| data.y[i]).collect(),
    ))
}

/// Nonparametric resample with replacement, same size as the input.
/// Stratification is achieved by resampling each arm separately.
fn resample(x: &[Vec<f64>], y: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    (
        ids.iter().map(|&i| x[i].clone()).collect(),
        ids.iter().map(|&i| y[i]).collect(),
    )
}
