//! Metrics (coverage, average width, Coverage-Width loss) and the
//! replication engine producing method-comparison tables over a grid of
//! (rho, d, n, noise) cells.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cate::bootstrap_cate_ci_around;
use crate::conformal::{calibrate_band, fit_arm_models, naive_from_bands, sqrt_level, ArmModels, BandAt, BandSide, CalibratedBand};
use crate::core::{Interval, Rho};
use crate::cw::{cmc_interval, cw_ci_interval, cw_interval, misspecify_rho, CRule};
use crate::datagen::{gen_synthetic_with, split_dataset, Copula, Dataset, Marginal, NoiseSpec};
use crate::error::{Error, Result};
use crate::learners::{LearnerChoice, MeanModel};
use crate::seed::derive_seed;

/// Fraction of test units whose true ITE falls inside its interval.
pub fn coverage(intervals: &[Interval], ite_true: &[f64]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::input("no test points"));
    }
    if intervals.len() != ite_true.len() {
        return Err(Error::input(format!(
            "{} intervals but {} ITE values",
            intervals.len(),
            ite_true.len()
        )));
    }
    let hits = intervals
        .iter()
        .zip(ite_true)
        .filter(|(iv, &y)| iv.contains(y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean interval width.
pub fn avg_width(intervals: &[Interval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::input("no intervals"));
    }
    Ok(intervals.iter().map(Interval::width).sum::<f64>() / intervals.len() as f64)
}

/// Coverage-Width loss:
/// `(width - wmin)/(wmax - wmin) + (2/alpha)*|coverage - (1 - alpha)|`.
/// When all methods tie on width (wmax = wmin) the width term is 0.
pub fn coverage_width_loss(width: f64, wmin: f64, wmax: f64, cov: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cov) {
        return Err(Error::input(format!("coverage must lie in [0, 1], got {cov}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if wmin > wmax || width < wmin - 1e-9 || width > wmax + 1e-9 {
        return Err(Error::input(format!(
            "width {width} outside normalization range [{wmin}, {wmax}]"
        )));
    }
    let width_term = if wmax > wmin { (width - wmin) / (wmax - wmin) } else { 0.0 };
    Ok(width_term + (2.0 / alpha) * (cov - (1.0 - alpha)).abs())
}

/// Which interval construction a method row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// CW+CI: CW widened by c-scaled bootstrap CATE radii.
    CwCi,
    Cw,
    /// Minkowski difference of per-arm bands at level 1 - alpha/2 each.
    Naive,
    /// Per-arm bands at level sqrt(1 - alpha) each, then Minkowski.
    SqrtNaive,
    /// Monte-Carlo convolution with a Gaussian copula.
    Cmc,
}

impl MethodKind {
    fn base_name(self) -> &'static str {
        match self {
            MethodKind::CwCi => "cw+ci",
            MethodKind::Cw => "cw",
            MethodKind::Naive => "naive",
            MethodKind::SqrtNaive => "sqrt_naive",
            MethodKind::Cmc => "cmc",
        }
    }

    fn uses_rho(self) -> bool {
        matches!(self, MethodKind::CwCi | MethodKind::Cw | MethodKind::Cmc)
    }
}

/// Where a rho-consuming method gets its rho from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    /// The generator's true rho.
    True,
    /// max(-1, rho_true - delta).
    Misspecified(f64),
    Fixed(f64),
}

impl RhoRule {
    pub fn resolve(self, rho_true: Rho) -> Result<Rho> {
        match self {
            RhoRule::True => Ok(rho_true),
            RhoRule::Misspecified(delta) => misspecify_rho(rho_true, delta),
            RhoRule::Fixed(v) => Rho::new(v),
        }
    }
}

/// One method to evaluate in each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default = "default_rho_rule")]
    pub rho_rule: RhoRule,
}

fn default_rho_rule() -> RhoRule {
    RhoRule::True
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec { kind, rho_rule: RhoRule::True }
    }

    pub fn with_rule(kind: MethodKind, rho_rule: RhoRule) -> Self {
        MethodSpec { kind, rho_rule }
    }

    /// Stable name for the results table.
    pub fn name(&self) -> String {
        let base = self.kind.base_name();
        if !self.kind.uses_rho() {
            return base.to_string();
        }
        match self.rho_rule {
            RhoRule::True => base.to_string(),
            RhoRule::Misspecified(d) => format!("{base}_misspec{d}"),
            RhoRule::Fixed(v) => format!("{base}_rho{v}"),
        }
    }
}

/// Marginal/copula pair; the cell's rho completes the [`NoiseSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseKind {
    pub marginal: Marginal,
    pub copula: Copula,
}

impl Default for NoiseKind {
    fn default() -> Self {
        NoiseKind { marginal: Marginal::Gaussian, copula: Copula::Gaussian }
    }
}

/// Full experiment grid and pipeline parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub rhos: Vec<f64>,
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub noises: Vec<NoiseKind>,
    pub methods: Vec<MethodSpec>,
    pub alpha: f64,
    pub learner: LearnerChoice,
    /// Learner for the bootstrap mean-model refits; defaults to
    /// `learner`. A lighter model keeps B refits affordable.
    pub boot_learner: Option<LearnerChoice>,
    /// Bootstrap resamples for the CW+CI radii.
    pub b: usize,
    /// CATE CI miscoverage.
    pub beta: f64,
    pub c_rule: CRule,
    /// Monte-Carlo sample count per CMC interval.
    pub cmc_samples: usize,
    /// Quantile-grid size for the CMC inverse-CDF maps.
    pub cmc_grid: usize,
    pub replications: usize,
    pub n_test: usize,
    pub split_ratio: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rhos: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            dims: vec![1],
            ns: vec![2000],
            noises: vec![NoiseKind::default()],
            methods: vec![
                MethodSpec::new(MethodKind::CwCi),
                MethodSpec::new(MethodKind::Cw),
                MethodSpec::new(MethodKind::Naive),
                MethodSpec::new(MethodKind::SqrtNaive),
            ],
            alpha: 0.1,
            learner: LearnerChoice::default(),
            boot_learner: None,
            b: 200,
            beta: 0.1,
            c_rule: CRule::Auto,
            cmc_samples: 2000,
            cmc_grid: 39,
            replications: 20,
            n_test: 1000,
            split_ratio: 0.5,
            sigma0: 1.0,
            sigma1: 2.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("rhos", self.rhos.is_empty()),
            ("dims", self.dims.is_empty()),
            ("ns", self.ns.is_empty()),
            ("noises", self.noises.is_empty()),
            ("methods", self.methods.is_empty()),
        ] {
            if empty {
                return Err(Error::config(format!("{name} must be nonempty")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        for &r in &self.rhos {
            Rho::new(r)?;
        }
        if self.methods.iter().any(|m| m.kind == MethodKind::CwCi) && self.b < 50 {
            return Err(Error::config(format!("bootstrap count must be at least 50, got {}", self.b)));
        }
        if self.methods.iter().any(|m| m.kind == MethodKind::Cmc) {
            if self.cmc_samples < 1000 {
                return Err(Error::config("cmc_samples must be at least 1000"));
            }
            if self.cmc_grid < 9 {
                return Err(Error::config("cmc_grid must be at least 9 levels"));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config("split_ratio must lie in (0, 1)"));
        }
        if self.n_test == 0 || self.replications == 0 {
            return Err(Error::config("n_test and replications must be positive"));
        }
        if !(self.sigma0 > 0.0 && self.sigma1 > 0.0) {
            return Err(Error::config("noise scales must be positive"));
        }
        Ok(())
    }
}

/// One method's scores within a cell.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    pub rho_used: Option<f64>,
    pub intervals: Vec<Interval>,
    pub coverage: f64,
    pub avg_width: f64,
    /// Filled by the cross-method normalization pass.
    pub cw_loss: Option<f64>,
    pub runtime_ms: f64,
}

/// One grid cell x replication. `error` is set (and `methods` empty)
/// when the cell failed; failed cells are reported, never dropped.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rho_true: f64,
    pub d: usize,
    pub n: usize,
    pub noise: NoiseKind,
    pub rep: usize,
    pub seed: u64,
    pub methods: Vec<MethodResult>,
    pub error: Option<String>,
}

/// Runs the full grid. Deterministic given `config.seed`: every cell's
/// randomness is derived from the master seed and the cell coordinates,
/// so results do not depend on the parallel schedule. The Coverage-Width
/// loss is normalized per (rho, d, n, noise) cell across all method
/// rows after the grid completes.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    config.validate()?;
    let mut coords = Vec::new();
    for &rho in &config.rhos {
        for &d in &config.dims {
            for &n in &config.ns {
                for (noise_idx, &noise) in config.noises.iter().enumerate() {
                    for rep in 0..config.replications {
                        coords.push((rho, d, n, noise_idx, noise, rep));
                    }
                }
            }
        }
    }
    let mut results: Vec<ExperimentResult> = coords
        .into_par_iter()
        .map(|(rho, d, n, noise_idx, noise, rep)| {
            let cell_seed = derive_seed(
                config.seed,
                &[rho.to_bits(), d as u64, n as u64, noise_idx as u64, rep as u64],
            );
            let mut result = ExperimentResult {
                rho_true: rho,
                d,
                n,
                noise,
                rep,
                seed: cell_seed,
                methods: Vec::new(),
                error: None,
            };
            match run_cell(config, rho, d, n, noise, cell_seed) {
                Ok(methods) => result.methods = methods,
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect();

    assign_cw_loss(&mut results, config.alpha)?;
    Ok(results)
}

/// Normalizes widths per (rho, d, n, noise) cell across every method
/// row (all replications) and fills in the Coverage-Width loss.
fn assign_cw_loss(results: &mut [ExperimentResult], alpha: f64) -> Result<()> {
    let key = |r: &ExperimentResult| {
        (r.rho_true.to_bits(), r.d, r.n, r.noise.marginal, r.noise.copula)
    };
    let mut ranges: BTreeMap<_, (f64, f64)> = BTreeMap::new();
    for r in results.iter() {
        for m in &r.methods {
            let e = ranges
                .entry(key(r))
                .or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(m.avg_width);
            e.1 = e.1.max(m.avg_width);
        }
    }
    for r in results.iter_mut() {
        let k = key(r);
        for m in &mut r.methods {
            let (wmin, wmax) = ranges[&k];
            m.cw_loss = Some(coverage_width_loss(m.avg_width, wmin, wmax, m.coverage, alpha)?);
        }
    }
    Ok(())
}

/// The two-sided calibration levels a method's bands need.
fn arm_alpha(kind: MethodKind, alpha: f64) -> Result<Option<f64>> {
    Ok(match kind {
        // CW combines endpoints that each hold at 1 - alpha/2, i.e. a
        // two-sided band at miscoverage alpha.
        MethodKind::CwCi | MethodKind::Cw => Some(alpha),
        // Naive Bonferroni: whole band at level 1 - alpha/2.
        MethodKind::Naive => Some(alpha / 2.0),
        // Independent-worlds calibration: band level sqrt(1 - alpha).
        MethodKind::SqrtNaive => Some(sqrt_level(alpha)?),
        MethodKind::Cmc => None,
    })
}

struct FittedArm {
    models: ArmModels,
    /// Calibrated band per distinct arm-level, keyed by level bits.
    bands: BTreeMap<u64, CalibratedBand>,
    /// Union of quantile levels, ascending; predictions are batched
    /// over this grid per test point.
    levels: Vec<f64>,
}

impl FittedArm {
    fn band(&self, alpha_arm: f64) -> &CalibratedBand {
        &self.bands[&alpha_arm.to_bits()]
    }
}

fn fit_arm(
    config: &ExperimentConfig,
    data: &Dataset,
    split: &crate::conformal::SplitPlan,
    arm: u8,
    arm_alphas: &[f64],
    need_cmc: bool,
    seed: u64,
) -> Result<FittedArm> {
    let mut levels: Vec<f64> = Vec::new();
    for &a in arm_alphas {
        levels.push(a / 2.0);
        levels.push(1.0 - a / 2.0);
    }
    if need_cmc {
        let g = config.cmc_grid;
        levels.extend((1..=g).map(|i| i as f64 / (g + 1) as f64));
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let learner = config.learner.with_seed(derive_seed(seed, &[arm as u64]));
    let models = fit_arm_models(data, arm, split, &levels, &learner)?;
    let mut bands = BTreeMap::new();
    for &a in arm_alphas {
        let band = calibrate_band(data, arm, a, split, &models, BandSide::Both)?;
        bands.insert(a.to_bits(), band);
    }
    Ok(FittedArm { models, bands, levels })
}

fn run_cell(
    config: &ExperimentConfig,
    rho: f64,
    d: usize,
    n: usize,
    noise: NoiseKind,
    cell_seed: u64,
) -> Result<Vec<MethodResult>> {
    let rho_true = Rho::new(rho)?;
    let spec = NoiseSpec {
        marginal: noise.marginal,
        copula: noise.copula,
        rho: rho_true,
        sigma0: config.sigma0,
        sigma1: config.sigma1,
    };
    let train = gen_synthetic_with(n, d, rho_true, &spec, cell_seed, derive_seed(cell_seed, &[100]))?;
    let test =
        gen_synthetic_with(config.n_test, d, rho_true, &spec, cell_seed, derive_seed(cell_seed, &[101]))?;
    let ite = test.ite().ok_or_else(|| Error::runtime("test set lost its counterfactuals"))?;
    let split = split_dataset(&train, config.split_ratio, derive_seed(cell_seed, &[3]), true)?;

    // Every distinct band level needed by the requested methods.
    let mut arm_alphas: Vec<f64> = Vec::new();
    for m in &config.methods {
        if let Some(a) = arm_alpha(m.kind, config.alpha)? {
            arm_alphas.push(a);
        }
    }
    arm_alphas.sort_by(f64::total_cmp);
    arm_alphas.dedup();
    let need_cmc = config.methods.iter().any(|m| m.kind == MethodKind::Cmc);

    let fit_seed = derive_seed(cell_seed, &[10]);
    let arm1 = fit_arm(config, &train, &split, 1, &arm_alphas, need_cmc, derive_seed(fit_seed, &[1]))?;
    let arm0 = fit_arm(config, &train, &split, 0, &arm_alphas, need_cmc, derive_seed(fit_seed, &[0]))?;

    // Batched per-point model evaluations shared by every method.
    let evals1 = evaluate_arm(&arm1, &test.x)?;
    let evals0 = evaluate_arm(&arm0, &test.x)?;
    let tau_hat: Vec<f64> = evals1.iter().zip(&evals0).map(|(a, b)| a.mu - b.mu).collect();

    // Bootstrap CATE radii, needed only by CW+CI.
    let needs_ci = config.methods.iter().any(|m| m.kind == MethodKind::CwCi);
    let mut boot_ms = 0.0;
    let cate_ci = if needs_ci {
        let started = Instant::now();
        let boot_learner = config.boot_learner.as_ref().unwrap_or(&config.learner);
        let est = bootstrap_cate_ci_around(
            &train,
            &test.x,
            &tau_hat,
            config.b,
            config.beta,
            boot_learner,
            derive_seed(cell_seed, &[20]),
        )?;
        boot_ms = started.elapsed().as_secs_f64() * 1000.0;
        Some(est)
    } else {
        None
    };

    let mut out = Vec::with_capacity(config.methods.len());
    for (mi, m) in config.methods.iter().enumerate() {
        let started = Instant::now();
        let rho_used = if m.kind.uses_rho() {
            Some(m.rho_rule.resolve(rho_true)?)
        } else {
            None
        };
        let mut intervals = Vec::with_capacity(test.len());
        match m.kind {
            MethodKind::Cw => {
                let (b1, b0) = (arm1.band(config.alpha), arm0.band(config.alpha));
                let r = rho_used.unwrap();
                for i in 0..test.len() {
                    let a1 = band_at(b1, &arm1, &evals1[i]);
                    let a0 = band_at(b0, &arm0, &evals0[i]);
                    intervals.push(cw_interval(tau_hat[i], &a1, &a0, r)?);
                }
            }
            MethodKind::CwCi => {
                let (b1, b0) = (arm1.band(config.alpha), arm0.band(config.alpha));
                let r = rho_used.unwrap();
                let c = config.c_rule.effective_c(r)?;
                let ci = cate_ci.as_ref().unwrap();
                for i in 0..test.len() {
                    let a1 = band_at(b1, &arm1, &evals1[i]);
                    let a0 = band_at(b0, &arm0, &evals0[i]);
                    intervals.push(cw_ci_interval(
                        tau_hat[i], ci.r_l[i], ci.r_u[i], &a1, &a0, r, c,
                    )?);
                }
            }
            MethodKind::Naive | MethodKind::SqrtNaive => {
                let a = arm_alpha(m.kind, config.alpha)?.unwrap();
                let (b1, b0) = (arm1.band(a), arm0.band(a));
                for i in 0..test.len() {
                    let a1 = band_at(b1, &arm1, &evals1[i]);
                    let a0 = band_at(b0, &arm0, &evals0[i]);
                    intervals.push(naive_from_bands(&a1, &a0)?);
                }
            }
            MethodKind::Cmc => {
                let r = rho_used.unwrap();
                let seed = derive_seed(cell_seed, &[30, mi as u64]);
                for (i, x) in test.x.iter().enumerate() {
                    intervals.push(cmc_interval(
                        &arm1.models.quantiles,
                        &arm0.models.quantiles,
                        x,
                        config.alpha,
                        config.cmc_samples,
                        r,
                        derive_seed(seed, &[i as u64]),
                    )?);
                }
            }
        }
        let mut runtime_ms = started.elapsed().as_secs_f64() * 1000.0;
        if m.kind == MethodKind::CwCi {
            runtime_ms += boot_ms;
        }
        let cov = coverage(&intervals, &ite)?;
        let width = avg_width(&intervals)?;
        out.push(MethodResult {
            method: m.name(),
            rho_used: rho_used.map(Rho::value),
            intervals,
            coverage: cov,
            avg_width: width,
            cw_loss: None,
            runtime_ms,
        });
    }
    Ok(out)
}

/// Per-point predictions of one arm's models over its level grid.
struct ArmEval {
    mu: f64,
    quantiles: Vec<f64>,
}

fn evaluate_arm(arm: &FittedArm, xs: &[Vec<f64>]) -> Result<Vec<ArmEval>> {
    xs.par_iter()
        .map(|x| {
            Ok(ArmEval {
                mu: arm.models.mean.predict(x)?,
                quantiles: arm.models.quantiles.predict_many(x, &arm.levels)?,
            })
        })
        .collect()
}

fn band_at(band: &CalibratedBand, arm: &FittedArm, eval: &ArmEval) -> BandAt {
    let (lo_level, hi_level) = band.levels();
    let pick = |lv: f64| {
        let j = arm.levels.partition_point(|&q| q < lv - 1e-12);
        eval.quantiles[j]
    };
    band.at_with(eval.mu, pick(lo_level), pick(hi_level))
}

/// T-learner mean models fitted on the full dataset (used by the CLI's
/// single-query path).
pub fn fit_full_mean_models(
    data: &Dataset,
    learner: &LearnerChoice,
    seed: u64,
) -> Result<(MeanModel, MeanModel)> {
    let arm = |t: u8| -> Result<MeanModel> {
        let rows = data.arm_rows(t);
        if rows.is_empty() {
            return Err(Error::input(format!("no units in arm {t}")));
        }
        let x: Vec<Vec<f64>> = rows.iter().map(|&i| data.x[i].clone()).collect();
        let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
        learner.with_seed(derive_seed(seed, &[t as u64])).fit_mean(&x, &y)
    };
    Ok((arm(1)?, arm(0)?))
}

/// Writes results in the canonical column order. Failed cells emit one
/// row per requested method with empty metrics and the error in
/// `status`; successful rows carry `status = ok`.
pub fn write_results_csv(
    results: &[ExperimentResult],
    methods: &[MethodSpec],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("cannot open {} for writing: {e}", path.display())))?;
    w.write_record([
        "method",
        "rho_true",
        "rho_used",
        "d",
        "n",
        "noise_marginal",
        "noise_copula",
        "rep",
        "seed",
        "coverage",
        "avg_width",
        "cw_loss",
        "runtime_ms",
        "status",
    ])
    .map_err(|e| Error::data(e.to_string()))?;
    for r in results {
        let fixed = |method: &str, rho_used: &str| {
            vec![
                method.to_string(),
                r.rho_true.to_string(),
                rho_used.to_string(),
                r.d.to_string(),
                r.n.to_string(),
                r.noise.marginal.to_string(),
                r.noise.copula.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
            ]
        };
        if let Some(err) = &r.error {
            for m in methods {
                let mut rec = fixed(&m.name(), "");
                rec.extend(["".into(), "".into(), "".into(), "".into(), format!("error: {err}")]);
                w.write_record(&rec).map_err(|e| Error::data(e.to_string()))?;
            }
            continue;
        }
        for m in &r.methods {
            let rho_used = m.rho_used.map(|v| v.to_string()).unwrap_or_default();
            let mut rec = fixed(&m.method, &rho_used);
            rec.extend([
                format!("{:.6}", m.coverage),
                format!("{:.6}", m.avg_width),
                m.cw_loss.map(|v| format!("{v:.6}")).unwrap_or_default(),
                format!("{:.3}", m.runtime_ms),
                "ok".into(),
            ]);
            w.write_record(&rec).map_err(|e| Error::data(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerParams;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn coverage_examples() {
        let all = vec![iv(-10.0, 10.0); 4];
        assert_eq!(coverage(&all, &[0.0, 1.0, -1.0, 5.0]).unwrap(), 1.0);
        let half = vec![iv(0.0, 1.0), iv(0.0, 1.0)];
        assert_eq!(coverage(&half, &[0.5, 2.0]).unwrap(), 0.5);
        assert!(coverage(&[], &[]).is_err());
        assert!(coverage(&half, &[0.5]).is_err());
    }

    #[test]
    fn avg_width_examples() {
        assert_eq!(avg_width(&[iv(0.0, 2.0), iv(1.0, 3.0)]).unwrap(), 2.0);
        assert_eq!(avg_width(&[iv(0.0, 1.0), iv(0.0, 3.0)]).unwrap(), 2.0);
        assert_eq!(avg_width(&[iv(1.0, 2.5)]).unwrap(), 1.5);
        assert!(avg_width(&[]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(coverage_width_loss(1.0, 1.0, 3.0, 0.9, 0.1).unwrap(), 0.0);
        assert_eq!(coverage_width_loss(3.0, 1.0, 3.0, 0.9, 0.1).unwrap(), 1.0);
        let v = coverage_width_loss(1.0, 1.0, 3.0, 0.85, 0.1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Degenerate normalization: width term defined as zero.
        assert_eq!(coverage_width_loss(2.0, 2.0, 2.0, 0.9, 0.1).unwrap(), 0.0);
        assert!(coverage_width_loss(1.0, 1.0, 3.0, 1.2, 0.1).is_err());
        assert!(coverage_width_loss(0.5, 1.0, 3.0, 0.9, 0.1).is_err());
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            rhos: vec![0.0],
            ns: vec![400],
            replications: 1,
            n_test: 200,
            methods: vec![MethodSpec::new(MethodKind::Cw), MethodSpec::new(MethodKind::Naive)],
            learner: LearnerChoice::Forest(LearnerParams { trees: 30, ..Default::default() }),
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn experiment_shape_and_determinism() {
        let config = tiny_config();
        let results = run_experiment(&config).unwrap();
        assert_eq!(results.len(), 1);
        let cell = &results[0];
        assert!(cell.error.is_none());
        assert_eq!(cell.methods.len(), 2);
        assert_eq!(cell.methods[0].method, "cw");
        assert_eq!(cell.methods[1].method, "naive");
        for m in &cell.methods {
            assert_eq!(m.intervals.len(), 200);
            assert!(m.cw_loss.is_some());
            assert!((0.0..=1.0).contains(&m.coverage));
        }
        let again = run_experiment(&config).unwrap();
        assert_eq!(cell.methods[0].avg_width, again.methods(0).avg_width);
        assert_eq!(cell.methods[0].coverage, again.methods(0).coverage);
    }

    trait Pick {
        fn methods(&self, i: usize) -> &MethodResult;
    }
    impl Pick for Vec<ExperimentResult> {
        fn methods(&self, i: usize) -> &MethodResult {
            &self[0].methods[i]
        }
    }

    #[test]
    fn csv_output_is_stable() {
        let config = tiny_config();
        let results = run_experiment(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_results_csv(&results, &config.methods, &p1).unwrap();
        write_results_csv(&run_experiment(&config).unwrap(), &config.methods, &p2).unwrap();
        let a = std::fs::read_to_string(&p1).unwrap();
        let b = std::fs::read_to_string(&p2).unwrap();
        // Everything except the wall-clock runtime column is
        // deterministic given the seed.
        let strip = |s: &str| -> Vec<String> {
            s.lines()
                .map(|line| {
                    let mut fields: Vec<&str> = line.split(',').collect();
                    fields.remove(12);
                    fields.join(",")
                })
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.starts_with(
            "method,rho_true,rho_used,d,n,noise_marginal,noise_copula,rep,seed,\
             coverage,avg_width,cw_loss,runtime_ms,status"
        ));
        assert!(a.contains(",ok"));
    }

    #[test]
    fn failed_cells_are_flagged_not_dropped() {
        // n too small for the forest's min_leaf across the split makes
        // the cell fail; the result row must carry the error.
        let config = ExperimentConfig {
            ns: vec![10],
            rhos: vec![0.0],
            replications: 1,
            n_test: 50,
            methods: vec![MethodSpec::new(MethodKind::Cw)],
            seed: 3,
            ..Default::default()
        };
        let results = run_experiment(&config).unwrap();
        assert_eq!(results.len(), 1);
        assert!(results[0].error.is_some());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("err.csv");
        write_results_csv(&results, &config.methods, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("error:"), "{text}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ExperimentConfig { rhos: vec![], ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { alpha: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { rhos: vec![2.0], ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { b: 10, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!(MethodSpec::new(MethodKind::CwCi).name(), "cw+ci");
        assert_eq!(MethodSpec::new(MethodKind::SqrtNaive).name(), "sqrt_naive");
        assert_eq!(
            MethodSpec::with_rule(MethodKind::Cw, RhoRule::Misspecified(0.25)).name(),
            "cw_misspec0.25"
        );
        assert_eq!(
            MethodSpec::with_rule(MethodKind::Cmc, RhoRule::Fixed(0.0)).name(),
            "cmc_rho0"
        );
        // Methods that ignore rho keep their base name under any rule.
        assert_eq!(
            MethodSpec::with_rule(MethodKind::Naive, RhoRule::Fixed(0.5)).name(),
            "naive"
        );
    }
}
