//! Cross-world noise sampling: (eps0, eps1) pairs with a chosen marginal
//! family, copula family and target correlation.
//!
//! The correlation knob is matched at rank level: the copula parameter is
//! chosen so that its Kendall tau equals the Kendall tau of a Gaussian
//! copula with the requested rho, which keeps the rho axis comparable
//! across copula families. |rho| = 1 is realized by the comonotone /
//! antimonotone construction directly, since the Frechet bounds are not
//! members of the Frank or t families.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::Rho;
use crate::error::{Error, Result};
use crate::oracle::{norm_cdf, norm_ppf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Gaussian,
    Laplace,
    StudentT3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Copula {
    Gaussian,
    Frank,
    StudentT,
}

impl std::str::FromStr for Marginal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Marginal::Gaussian),
            "laplace" => Ok(Marginal::Laplace),
            "student_t3" | "t3" => Ok(Marginal::StudentT3),
            other => Err(Error::input(format!("unknown marginal family '{other}'"))),
        }
    }
}

impl std::str::FromStr for Copula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Copula::Gaussian),
            "frank" => Ok(Copula::Frank),
            "student_t" | "t" => Ok(Copula::StudentT),
            other => Err(Error::input(format!("unknown copula family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Marginal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Marginal::Gaussian => "gaussian",
            Marginal::Laplace => "laplace",
            Marginal::StudentT3 => "student_t3",
        };
        f.write_str(s)
    }
}

impl std::fmt::Display for Copula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Copula::Gaussian => "gaussian",
            Copula::Frank => "frank",
            Copula::StudentT => "student_t",
        };
        f.write_str(s)
    }
}

/// Joint law of the cross-world noise pair. `sigma0`/`sigma1` are the
/// marginal standard deviations of eps0 and eps1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub marginal: Marginal,
    pub copula: Copula,
    pub rho: Rho,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl NoiseSpec {
    /// The base Gaussian noise with scales (1, 2), i.e. covariance
    /// [[1, 2*rho], [2*rho, 4]].
    pub fn gaussian(rho: Rho) -> Self {
        NoiseSpec {
            marginal: Marginal::Gaussian,
            copula: Copula::Gaussian,
            rho,
            sigma0: 1.0,
            sigma1: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma1 > 0.0) {
            return Err(Error::input(format!(
                "noise scales must be positive, got ({}, {})",
                self.sigma0, self.sigma1
            )));
        }
        Ok(())
    }
}

/// Draws `n` noise pairs (eps0, eps1) according to `spec`.
pub fn sample_noise(spec: &NoiseSpec, n: usize, rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let (u0, u1) = sample_uniform_pairs(spec.copula, spec.rho, n, rng)?;
    let e0 = u0
        .into_iter()
        .map(|u| marginal_quantile(spec.marginal, u) * spec.sigma0)
        .collect();
    let e1 = u1
        .into_iter()
        .map(|u| marginal_quantile(spec.marginal, u) * spec.sigma1)
        .collect();
    Ok((e0, e1))
}

/// Uniform pairs from the requested copula at the rho-equivalent
/// parameter.
pub fn sample_uniform_pairs(
    copula: Copula,
    rho: Rho,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = rho.value();
    let mut u0 = Vec::with_capacity(n);
    let mut u1 = Vec::with_capacity(n);

    if r.abs() == 1.0 {
        for _ in 0..n {
            let u: f64 = open_unit(rng);
            u0.push(u);
            u1.push(if r > 0.0 { u } else { 1.0 - u });
        }
        return Ok((u0, u1));
    }

    match copula {
        Copula::Gaussian => {
            let s = (1.0 - r * r).sqrt();
            for _ in 0..n {
                let z0: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                let z1 = r * z0 + s * w;
                u0.push(norm_cdf(z0));
                u1.push(norm_cdf(z1));
            }
        }
        Copula::StudentT => {
            // t-copula with 3 degrees of freedom; the normal pair shares
            // one chi-square mixing variable.
            let s = (1.0 - r * r).sqrt();
            for _ in 0..n {
                let z0: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                let z1 = r * z0 + s * w;
                let chi: f64 = (0..3)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        g * g
                    })
                    .sum();
                let scale = (chi / 3.0).sqrt().max(1e-12);
                u0.push(t3_cdf(z0 / scale));
                u1.push(t3_cdf(z1 / scale));
            }
        }
        Copula::Frank => {
            let theta = frank_theta_for_rho(rho)?;
            if theta.abs() < 1e-9 {
                for _ in 0..n {
                    u0.push(open_unit(rng));
                    u1.push(open_unit(rng));
                }
            } else {
                let one_minus_exp = -(-theta).exp_m1(); // 1 - e^{-theta}
                for _ in 0..n {
                    let u: f64 = open_unit(rng);
                    let w: f64 = open_unit(rng);
                    // Conditional inverse of the Frank copula.
                    let eu = (-theta * u).exp();
                    let a = w * one_minus_exp / (w * (eu - 1.0) - eu);
                    let v = -(1.0 + a).ln() / theta;
                    u0.push(u);
                    u1.push(v.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16));
                }
            }
        }
    }
    Ok((u0, u1))
}

fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Unit-variance quantile function of the marginal family.
pub fn marginal_quantile(marginal: Marginal, u: f64) -> f64 {
    match marginal {
        Marginal::Gaussian => norm_ppf(u),
        Marginal::Laplace => {
            // Scale 1/sqrt(2) gives unit variance.
            let b = std::f64::consts::FRAC_1_SQRT_2;
            if u < 0.5 {
                b * (2.0 * u).ln()
            } else {
                -b * (2.0 * (1.0 - u)).ln()
            }
        }
        // t3 has variance 3; divide by sqrt(3).
        Marginal::StudentT3 => t3_ppf(u) / 3f64.sqrt(),
    }
}

/// CDF of the t distribution with 3 degrees of freedom (closed form).
pub fn t3_cdf(x: f64) -> f64 {
    let s = x / 3f64.sqrt();
    0.5 + std::f64::consts::FRAC_1_PI * (s / (1.0 + s * s) + s.atan())
}

fn t3_pdf(x: f64) -> f64 {
    let q = 1.0 + x * x / 3.0;
    2.0 / (std::f64::consts::PI * 3f64.sqrt() * q * q)
}

/// Quantile of the t3 distribution; Newton iteration on the closed-form
/// CDF with a bisection bracket for safety.
pub fn t3_ppf(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0);
    let tail = u.min(1.0 - u);
    // Tail expansion: 1 - F(x) ~ 6*sqrt(3) / (pi * x^3).
    let bound = (6.0 * 3f64.sqrt() / (std::f64::consts::PI * tail)).powf(1.0 / 3.0) + 2.0;
    let (mut lo, mut hi) = (-bound, bound);
    let mut x = norm_ppf(u);
    for _ in 0..60 {
        let f = t3_cdf(x) - u;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / t3_pdf(x).max(1e-300);
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-13 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// First Debye function D1(x) = (1/x) * integral_0^x t/(e^t - 1) dt,
/// by Simpson quadrature (x > 0).
pub fn debye1(x: f64) -> f64 {
    let integrand = |t: f64| {
        if t < 1e-8 {
            1.0 - t / 2.0
        } else {
            t / t.exp_m1()
        }
    };
    let n = 400;
    let h = x / n as f64;
    let mut acc = integrand(0.0) + integrand(x);
    for i in 1..n {
        let t = i as f64 * h;
        acc += integrand(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 / x
}

/// Kendall tau of the Frank copula with parameter theta > 0.
fn frank_kendall_tau(theta: f64) -> f64 {
    1.0 - 4.0 / theta * (1.0 - debye1(theta))
}

/// Frank parameter theta whose Kendall tau matches a Gaussian copula
/// with correlation rho: tau = (2/pi) * asin(rho), solved by bisection.
pub fn frank_theta_for_rho(rho: Rho) -> Result<f64> {
    let r = rho.value();
    if r.abs() >= 1.0 {
        return Err(Error::config(
            "Frank copula cannot reach |rho| = 1; the comonotone shortcut applies instead",
        ));
    }
    let target = (2.0 / std::f64::consts::PI) * r.asin();
    if target.abs() < 1e-9 {
        return Ok(0.0);
    }
    let t = target.abs();
    let (mut lo, mut hi) = (1e-9, 500.0);
    if frank_kendall_tau(hi) < t {
        return Err(Error::config(format!("Frank tau target {t} out of reachable range")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frank_kendall_tau(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * (1.0 + hi) {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    Ok(if r > 0.0 { theta } else { -theta })
}
