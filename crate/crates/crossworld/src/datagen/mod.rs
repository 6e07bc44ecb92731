//! Synthetic data-generating processes with controllable cross-world
//! correlation, dataset splitting, CSV ingestion and the rho diagnostics.

mod copula;
mod csvio;

pub use copula::{
    debye1, frank_theta_for_rho, marginal_quantile, sample_noise, sample_uniform_pairs, t3_cdf,
    t3_ppf, Copula, Marginal, NoiseSpec,
};
pub use csvio::{load_csv, write_csv};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conformal::SplitPlan;
use crate::core::Rho;
use crate::error::{Error, Result};
use crate::oracle::norm_cdf;
use crate::seed::derive_seed;
use crate::stats::{pearson, variance};

/// Observational dataset, optionally carrying both potential outcomes
/// (and the true CATE) for oracle evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub t: Vec<u8>,
    pub y: Vec<f64>,
    pub y0: Option<Vec<f64>>,
    pub y1: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub meta: Option<GenMeta>,
}

/// Generator parameters recorded alongside a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenMeta {
    pub rho: Rho,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    /// Linear baseline coefficients of f0.
    pub beta: Vec<f64>,
    /// Coefficients of the random CATE polynomial, constant term first,
    /// then graded-lexicographic monomials in (x1, x2) up to degree 3.
    pub tau_coeffs: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn has_counterfactuals(&self) -> bool {
        self.y0.is_some() && self.y1.is_some()
    }

    /// True individual treatment effects, available only with
    /// counterfactuals.
    pub fn ite(&self) -> Option<Vec<f64>> {
        match (&self.y0, &self.y1) {
            (Some(y0), Some(y1)) => Some(y1.iter().zip(y0).map(|(a, b)| a - b).collect()),
            _ => None,
        }
    }

    /// Row indices belonging to treatment arm `arm`.
    pub fn arm_rows(&self, arm: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.t[i] == arm).collect()
    }

    /// New dataset restricted to `rows` (in the given order; repeats
    /// allowed, enabling bootstrap resamples).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            y: pick(&self.y),
            y0: self.y0.as_ref().map(pick),
            y1: self.y1.as_ref().map(pick),
            tau: self.tau.as_ref().map(pick),
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::data("empty dataset"));
        }
        if self.x.len() != n || self.t.len() != n {
            return Err(Error::data("column lengths disagree"));
        }
        let d = self.dim();
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != d {
                return Err(Error::data(format!("row {i}: inconsistent covariate count")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("row {i}: non-finite covariate")));
            }
        }
        if self.t.iter().any(|&t| t > 1) {
            return Err(Error::data("treatment column must be binary"));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite outcome"));
        }
        if let (Some(y0), Some(y1)) = (&self.y0, &self.y1) {
            for i in 0..n {
                let expected = if self.t[i] == 1 { y1[i] } else { y0[i] };
                if (self.y[i] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                    return Err(Error::data(format!(
                        "row {i}: y does not equal the potential outcome selected by t"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Monomial exponents of the CATE polynomial: total degree <= 3 in the
/// first min(d, 2) covariates, constant term first.
fn tau_monomials(d: usize) -> Vec<(u32, u32)> {
    if d == 1 {
        (0..=3).map(|a| (a, 0)).collect()
    } else {
        let mut out = Vec::new();
        for total in 0..=3u32 {
            for a in (0..=total).rev() {
                out.push((a, total - a));
            }
        }
        out
    }
}

fn eval_tau(coeffs: &[f64], monomials: &[(u32, u32)], row: &[f64]) -> f64 {
    let x1 = row[0];
    let x2 = if row.len() > 1 { row[1] } else { 0.0 };
    coeffs
        .iter()
        .zip(monomials)
        .map(|(c, &(a, b))| c * x1.powi(a as i32) * x2.powi(b as i32))
        .sum()
}

fn sample_covariates(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    if d == 1 {
        (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect()
    } else {
        // Equicorrelated Gaussian (pairwise covariance 0.25) pushed
        // through the standard-normal CDF.
        let shared_w = 0.25f64.sqrt();
        let own_w = 0.75f64.sqrt();
        (0..n)
            .map(|_| {
                let shared: f64 = rng.sample(StandardNormal);
                (0..d)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        norm_cdf(shared_w * shared + own_w * g)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Propensity score pi(x) = (1 + |x1|) / 4, always inside [0.25, 0.5].
pub fn propensity(row: &[f64]) -> f64 {
    (1.0 + row[0].abs()) / 4.0
}

/// Generates a synthetic dataset with cross-world correlation `rho`:
/// covariates as above, treatment by the overlap-friendly propensity,
/// outcomes `Y(0) = f0(x) + eps0`, `Y(1) = f0(x) + tau(x) + eps1` with
/// `f0` linear and `tau` a seeded random polynomial in the first two
/// covariates rescaled to standard deviation 2 over the covariate law.
pub fn gen_synthetic(n: usize, d: usize, rho: Rho, noise: &NoiseSpec, seed: u64) -> Result<Dataset> {
    gen_synthetic_with(n, d, rho, noise, seed, seed)
}

/// Like [`gen_synthetic`] but with the structural randomness (the f0
/// coefficients and the CATE polynomial) seeded separately from the
/// per-unit randomness (covariates, treatment, noise). Two calls sharing
/// `structure_seed` but differing in `sample_seed` draw independent
/// units from the same population — e.g. a held-out test set.
pub fn gen_synthetic_with(
    n: usize,
    d: usize,
    rho: Rho,
    noise: &NoiseSpec,
    structure_seed: u64,
    sample_seed: u64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::input("n and d must be at least 1"));
    }
    noise.validate()?;
    let noise = NoiseSpec { rho, ..noise.clone() };
    let seed = structure_seed;

    let mut rng_x = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, &[1]));
    let mut rng_beta = ChaCha8Rng::seed_from_u64(derive_seed(structure_seed, &[2]));
    let mut rng_tau = ChaCha8Rng::seed_from_u64(derive_seed(structure_seed, &[3]));
    let mut rng_ref = ChaCha8Rng::seed_from_u64(derive_seed(structure_seed, &[4]));
    let mut rng_t = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, &[5]));
    let mut rng_noise = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, &[6]));

    let x = sample_covariates(n, d, &mut rng_x);
    let beta: Vec<f64> = (0..d).map(|_| rng_beta.sample(StandardNormal)).collect();

    let monomials = tau_monomials(d);
    let mut tau_coeffs: Vec<f64> =
        (0..monomials.len()).map(|_| rng_tau.sample(StandardNormal)).collect();
    // Rescale the non-constant part so sd(tau) = 2 over the covariate law.
    let reference = sample_covariates(4096, d, &mut rng_ref);
    let ref_tau: Vec<f64> =
        reference.iter().map(|r| eval_tau(&tau_coeffs, &monomials, r)).collect();
    let sd = variance(&ref_tau).sqrt();
    if sd > 1e-12 {
        for c in tau_coeffs.iter_mut().skip(1) {
            *c *= 2.0 / sd;
        }
    }

    let tau: Vec<f64> = x.iter().map(|r| eval_tau(&tau_coeffs, &monomials, r)).collect();
    let f0: Vec<f64> = x
        .iter()
        .map(|r| r.iter().zip(&beta).map(|(xi, b)| xi * b).sum())
        .collect();

    let t: Vec<u8> = x
        .iter()
        .map(|r| u8::from(rng_t.gen::<f64>() < propensity(r)))
        .collect();

    let (e0, e1) = sample_noise(&noise, n, &mut rng_noise)?;
    let y0: Vec<f64> = f0.iter().zip(&e0).map(|(f, e)| f + e).collect();
    let y1: Vec<f64> = (0..n).map(|i| f0[i] + tau[i] + e1[i]).collect();
    let y: Vec<f64> = (0..n).map(|i| if t[i] == 1 { y1[i] } else { y0[i] }).collect();

    Ok(Dataset {
        x,
        t,
        y,
        y0: Some(y0),
        y1: Some(y1),
        tau: Some(tau),
        meta: Some(GenMeta { rho, noise, seed, n, d, beta, tau_coeffs }),
    })
}

/// Disjoint, exhaustive train/calibration split, optionally stratified
/// by treatment arm. Reproducible given the seed.
pub fn split_dataset(
    data: &Dataset,
    ratio: f64,
    seed: u64,
    stratify_by_arm: bool,
) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::input(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut calib = Vec::new();
    let groups: Vec<Vec<usize>> = if stratify_by_arm {
        vec![data.arm_rows(0), data.arm_rows(1)]
    } else {
        vec![(0..data.len()).collect()]
    };
    for mut group in groups {
        if group.len() < 2 {
            return Err(Error::data(format!(
                "cannot split a group of {} rows; each arm needs at least 2 units",
                group.len()
            )));
        }
        shuffle(&mut group, &mut rng);
        let k = ((ratio * group.len() as f64).round() as usize).clamp(1, group.len() - 1);
        train.extend_from_slice(&group[..k]);
        calib.extend_from_slice(&group[k..]);
    }
    train.sort_unstable();
    calib.sort_unstable();
    Ok(SplitPlan { train, calib })
}

fn shuffle(v: &mut [usize], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Windowed conditional correlation of (Y(1), Y(0)): Pearson correlation
/// over the rows with |x_j - center_j| <= delta for every conditioning
/// column. Returns the estimate with the window row count.
pub fn estimate_conditional_correlation(
    data: &Dataset,
    cond_cols: &[usize],
    centers: &[f64],
    delta: f64,
) -> Result<(f64, usize)> {
    let (Some(y0), Some(y1)) = (&data.y0, &data.y1) else {
        return Err(Error::data(
            "conditional correlation of (Y(1), Y(0)) needs counterfactual columns; \
             it is unidentifiable from factual data alone",
        ));
    };
    if cond_cols.len() != centers.len() {
        return Err(Error::input("cond_cols and centers must have equal length"));
    }
    if delta <= 0.0 {
        return Err(Error::input("window half-width must be positive"));
    }
    let d = data.dim();
    if let Some(&bad) = cond_cols.iter().find(|&&c| c >= d) {
        return Err(Error::input(format!("conditioning column {bad} out of range (d = {d})")));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..data.len() {
        let inside = cond_cols
            .iter()
            .zip(centers)
            .all(|(&c, &m)| (data.x[i][c] - m).abs() <= delta);
        if inside {
            a.push(y1[i]);
            b.push(y0[i]);
        }
    }
    let count = a.len();
    if count < 30 {
        return Err(Error::data(format!(
            "conditioning window too sparse: {count} rows (need at least 30)"
        )));
    }
    Ok((pearson(&a, &b), count))
}

/// rho implied by the shared-hidden-covariate variance decomposition:
/// `rho = var(H) / (var(H) + var(eps))`.
pub fn rho_from_variance_decomposition(var_h: f64, var_eps: f64) -> Result<Rho> {
    if var_h < 0.0 || var_eps < 0.0 {
        return Err(Error::input("variance components must be nonnegative"));
    }
    if var_h + var_eps <= 0.0 {
        return Err(Error::input("variance components must not both be zero"));
    }
    Rho::new(var_h / (var_h + var_eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(v: f64) -> Rho {
        Rho::new(v).unwrap()
    }

    #[test]
    fn propensity_range_holds_everywhere() {
        let data = gen_synthetic(2000, 3, rho(0.2), &NoiseSpec::gaussian(rho(0.2)), 7).unwrap();
        for row in &data.x {
            let p = propensity(row);
            assert!((0.25..=0.5).contains(&p));
        }
    }

    #[test]
    fn consistency_and_determinism() {
        let spec = NoiseSpec::gaussian(rho(0.5));
        let a = gen_synthetic(500, 2, rho(0.5), &spec, 11).unwrap();
        let b = gen_synthetic(500, 2, rho(0.5), &spec, 11).unwrap();
        a.validate().unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.t, b.t);
        let c = gen_synthetic(500, 2, rho(0.5), &spec, 12).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn noise_correlation_matches_rho() {
        let data =
            gen_synthetic(100_000, 1, rho(0.5), &NoiseSpec::gaussian(rho(0.5)), 13).unwrap();
        // Recover the noise from the recorded structure.
        let meta = data.meta.as_ref().unwrap();
        let y0 = data.y0.as_ref().unwrap();
        let y1 = data.y1.as_ref().unwrap();
        let tau = data.tau.as_ref().unwrap();
        let e0: Vec<f64> = (0..data.len())
            .map(|i| y0[i] - data.x[i][0] * meta.beta[0])
            .collect();
        let e1: Vec<f64> = (0..data.len())
            .map(|i| y1[i] - data.x[i][0] * meta.beta[0] - tau[i])
            .collect();
        let c = pearson(&e0, &e1);
        assert!((c - 0.5).abs() < 0.01, "cor = {c}");
    }

    #[test]
    fn comonotone_equal_scale_collapses_ite_noise() {
        let spec = NoiseSpec {
            sigma0: 1.0,
            sigma1: 1.0,
            ..NoiseSpec::gaussian(rho(1.0))
        };
        let data = gen_synthetic(2000, 1, rho(1.0), &spec, 14).unwrap();
        let ite = data.ite().unwrap();
        let tau = data.tau.as_ref().unwrap();
        for (a, b) in ite.iter().zip(tau) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_scale_is_two() {
        let data = gen_synthetic(50_000, 2, rho(0.0), &NoiseSpec::gaussian(rho(0.0)), 15).unwrap();
        let sd = variance(data.tau.as_ref().unwrap()).sqrt();
        assert!((sd - 2.0).abs() < 0.15, "sd(tau) = {sd}");
    }

    #[test]
    fn split_plan_properties() {
        let data = gen_synthetic(100, 1, rho(0.0), &NoiseSpec::gaussian(rho(0.0)), 16).unwrap();
        let plan = split_dataset(&data, 0.5, 3, true).unwrap();
        assert_eq!(plan.train.len() + plan.calib.len(), 100);
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.calib).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        // Arm proportions preserved within one unit.
        for arm in [0u8, 1] {
            let total = data.arm_rows(arm).len() as i64;
            let in_train =
                plan.train.iter().filter(|&&i| data.t[i] == arm).count() as i64;
            assert!((2 * in_train - total).abs() <= 1, "arm {arm}");
        }
        assert_eq!(plan, split_dataset(&data, 0.5, 3, true).unwrap());
        assert!(split_dataset(&data, 0.0, 3, true).is_err());
    }

    #[test]
    fn conditional_correlation_additive_model() {
        // Additive DGP: Y1 = Y0 + tau(X) gives conditional correlation 1.
        let spec = NoiseSpec {
            sigma0: 1.0,
            sigma1: 1.0,
            ..NoiseSpec::gaussian(rho(1.0))
        };
        let data = gen_synthetic(100_000, 1, rho(1.0), &spec, 17).unwrap();
        let (est, count) =
            estimate_conditional_correlation(&data, &[0], &[0.0], 0.05).unwrap();
        assert!(count >= 30);
        assert!(est >= 0.95, "est = {est}");
    }

    #[test]
    fn conditional_correlation_independent_noise() {
        let data =
            gen_synthetic(200_000, 1, rho(0.0), &NoiseSpec::gaussian(rho(0.0)), 18).unwrap();
        let (est, _) = estimate_conditional_correlation(&data, &[0], &[0.0], 0.05).unwrap();
        assert!(est.abs() < 0.1, "est = {est}");
    }

    #[test]
    fn conditional_correlation_subset_conditioning_is_positive() {
        // Independent noise but an informative covariate left out of the
        // conditioning set induces positive cross-world correlation.
        let data =
            gen_synthetic(200_000, 3, rho(0.0), &NoiseSpec::gaussian(rho(0.0)), 19).unwrap();
        // Condition only on x1, leaving x2/x3 (which drive f0 and tau) free.
        let (est, _) = estimate_conditional_correlation(&data, &[0], &[0.5], 0.05).unwrap();
        assert!(est > 0.0, "est = {est}");
    }

    #[test]
    fn shared_structure_fresh_units() {
        let spec = NoiseSpec::gaussian(rho(0.2));
        let train = gen_synthetic_with(300, 2, rho(0.2), &spec, 9, 1).unwrap();
        let test = gen_synthetic_with(200, 2, rho(0.2), &spec, 9, 2).unwrap();
        let (m1, m2) = (train.meta.as_ref().unwrap(), test.meta.as_ref().unwrap());
        assert_eq!(m1.beta, m2.beta);
        assert_eq!(m1.tau_coeffs, m2.tau_coeffs);
        assert_ne!(train.x[..200], test.x[..]);
    }

    #[test]
    fn variance_decomposition_examples() {
        assert_eq!(rho_from_variance_decomposition(0.0, 1.0).unwrap().value(), 0.0);
        assert_eq!(rho_from_variance_decomposition(1.0, 0.0).unwrap().value(), 1.0);
        assert_eq!(rho_from_variance_decomposition(1.0, 3.0).unwrap().value(), 0.25);
        assert!(rho_from_variance_decomposition(0.0, 0.0).is_err());
    }

    #[test]
    fn ignorability_noise_carries_no_treatment_signal() {
        // T depends on X only through the propensity; the noise pair
        // must be uncorrelated with T.
        let data =
            gen_synthetic(100_000, 1, rho(0.3), &NoiseSpec::gaussian(rho(0.3)), 20).unwrap();
        let meta = data.meta.as_ref().unwrap();
        let y0 = data.y0.as_ref().unwrap();
        let e0: Vec<f64> = (0..data.len())
            .map(|i| y0[i] - data.x[i][0] * meta.beta[0])
            .collect();
        let tf: Vec<f64> = data.t.iter().map(|&t| t as f64).collect();
        // Binomial sd of the correlation ~ 1/sqrt(n); |z| < 3.
        assert!(pearson(&e0, &tf).abs() < 3.0 / (data.len() as f64).sqrt() + 0.005);
    }
}
