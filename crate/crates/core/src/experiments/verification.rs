//! Monte-Carlo checks of every closed form: each estimate over `samples`
//! draws is turned into a z-score against the analytic value.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeds::{stream, Stream};
use crate::data::rng_from_seed;
use crate::distributions::{
    kl_mvn, kl_nw, kl_wishart, mvn_log_pdf, nw_log_pdf, posterior_predictive, sample_mvn, sample_nw, sample_wishart,
    t_log_pdf, wishart_log_pdf, NormalParams, NormalWishartParams,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, SymPD};
use crate::losses::expected_nll;
use crate::uncertainty::{epkl, expected_data_entropy, mutual_information, predictive_entropy, variance_decomposition};

pub const Z_LIMIT: f64 = 4.0;
pub const MIN_SAMPLES: usize = 10_000;
pub const SETTINGS_PER_FORMULA: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    PredictiveEntropy,
    ExpectedDataEntropy,
    MutualInformation,
    Epkl,
    TotalVariance,
    ExpectedNll,
    KlNormalWishart,
    KlWishart,
    KlNormal,
    PredictiveDensity,
}

impl Formula {
    pub const ALL: [Formula; 10] = [
        Formula::PredictiveEntropy,
        Formula::ExpectedDataEntropy,
        Formula::MutualInformation,
        Formula::Epkl,
        Formula::TotalVariance,
        Formula::ExpectedNll,
        Formula::KlNormalWishart,
        Formula::KlWishart,
        Formula::KlNormal,
        Formula::PredictiveDensity,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub formula: Formula,
    pub setting: usize,
    pub dim: usize,
    pub closed_form: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulaSummary {
    pub formula: Formula,
    pub max_abs_z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub seed: u64,
    pub summary: Vec<FormulaSummary>,
    pub checks: Vec<Check>,
    pub max_abs_z: f64,
    pub pass: bool,
}

fn normal_vec(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

/// A·Aᵀ/K + ½I times a random scale in [0.3, 3].
fn random_pd(rng: &mut ChaCha8Rng, k: usize) -> Result<SymPD> {
    let a = Matrix::from_vec(k, k, normal_vec(rng, k * k))?;
    let scale = rng.random_range(0.3..3.0);
    let mut s = a.matmul(&a.transpose())?.scale(1.0 / k as f64);
    for i in 0..k {
        s[(i, i)] += 0.5;
    }
    cholesky(&s.scale(scale))
}

/// κ log-uniform on [0.1, 10]; ν ∈ [K + 8, K + 30] so every estimator has finite variance.
fn random_nw(rng: &mut ChaCha8Rng, k: usize) -> Result<NormalWishartParams> {
    let m = normal_vec(rng, k);
    let l = random_pd(rng, k)?;
    let kappa = rng.random_range(0.1f64.ln()..10f64.ln()).exp();
    let nu = k as f64 + rng.random_range(8.0..30.0);
    NormalWishartParams::new(m, l, kappa, nu)
}

fn random_normal(rng: &mut ChaCha8Rng, k: usize) -> Result<NormalParams> {
    NormalParams::new(normal_vec(rng, k), random_pd(rng, k)?)
}

/// Sample mean of `draw() − closed` and its standard error.
fn estimate(samples: usize, closed: f64, mut draw: impl FnMut() -> Result<f64>) -> Result<(f64, f64)> {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let d = draw()? - closed;
        s += d;
        s2 += d * d;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    Ok((closed + mean, (var / n).sqrt()))
}

fn normal_of(mu: Vec<f64>, lambda: SymPD) -> NormalParams {
    NormalParams {
        mean: mu,
        precision: lambda,
    }
}

pub fn check(formula: Formula, setting: usize, samples: usize, seed: u64) -> Result<Check> {
    let index = Formula::ALL.iter().position(|f| *f == formula).expect("listed") as u64;
    let mut rng = rng_from_seed(stream(seed, Stream::Verify(index * 1000 + setting as u64)));
    let k = 1 + setting % 3;
    let omega = random_nw(&mut rng, k)?;
    let (closed, (est, se)) = match formula {
        Formula::PredictiveEntropy => {
            let t = posterior_predictive(&omega)?;
            let c = predictive_entropy(&omega)?;
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    let y = sample_mvn(&normal_of(mu, lam), &mut rng)?;
                    Ok(-t_log_pdf(&y, &t)?)
                })?,
            )
        }
        Formula::ExpectedDataEntropy => {
            let c = expected_data_entropy(&omega)?;
            let w = omega.wishart();
            (
                c,
                estimate(samples, c, || {
                    let lam = sample_wishart(&w, &mut rng)?;
                    Ok(normal_of(vec![0.0; k], lam).entropy())
                })?,
            )
        }
        Formula::MutualInformation => {
            let t = posterior_predictive(&omega)?;
            let c = mutual_information(&omega)?;
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    let p = normal_of(mu, lam);
                    let y = sample_mvn(&p, &mut rng)?;
                    Ok(mvn_log_pdf(&y, &p)? - t_log_pdf(&y, &t)?)
                })?,
            )
        }
        Formula::Epkl => {
            let c = epkl(&omega)?;
            (
                c,
                estimate(samples, c, || {
                    let (m1, l1) = sample_nw(&omega, &mut rng)?;
                    let (m2, l2) = sample_nw(&omega, &mut rng)?;
                    kl_mvn(&normal_of(m1, l1), &normal_of(m2, l2))
                })?,
            )
        }
        Formula::TotalVariance => {
            // uᵀ Σ u for a random direction u
            let u = normal_vec(&mut rng, k);
            let total = variance_decomposition(&omega)?.total;
            let c = u.iter().zip(total.matvec(&u)?).map(|(a, b)| a * b).sum();
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    let y = sample_mvn(&normal_of(mu, lam), &mut rng)?;
                    let p: f64 = u
                        .iter()
                        .zip(y.iter().zip(&omega.m))
                        .map(|(a, (y, m))| a * (y - m))
                        .sum();
                    Ok(p * p)
                })?,
            )
        }
        Formula::ExpectedNll => {
            let y: Vec<f64> = omega
                .m
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let c = expected_nll(&omega, &y)?;
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    Ok(-mvn_log_pdf(&y, &normal_of(mu, lam))?)
                })?,
            )
        }
        Formula::KlNormalWishart => {
            let q = random_nw(&mut rng, k)?;
            let c = kl_nw(&omega, &q)?;
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    Ok(nw_log_pdf(&mu, &lam, &omega)? - nw_log_pdf(&mu, &lam, &q)?)
                })?,
            )
        }
        Formula::KlWishart => {
            let (p, q) = (omega.wishart(), random_nw(&mut rng, k)?.wishart());
            let c = kl_wishart(&p, &q)?;
            (
                c,
                estimate(samples, c, || {
                    let lam = sample_wishart(&p, &mut rng)?;
                    Ok(wishart_log_pdf(&lam, &p)? - wishart_log_pdf(&lam, &q)?)
                })?,
            )
        }
        Formula::KlNormal => {
            let (p, q) = (random_normal(&mut rng, k)?, random_normal(&mut rng, k)?);
            let c = kl_mvn(&p, &q)?;
            (
                c,
                estimate(samples, c, || {
                    let x = sample_mvn(&p, &mut rng)?;
                    Ok(mvn_log_pdf(&x, &p)? - mvn_log_pdf(&x, &q)?)
                })?,
            )
        }
        Formula::PredictiveDensity => {
            // E over NW of N(y | μ, Λ⁻¹) is the Student-T density at y
            // y half a predictive scale from the mode keeps the density away from its tails
            let t = posterior_predictive(&omega)?;
            let z = normal_vec(&mut rng, k);
            let y: Vec<f64> = omega
                .m
                .iter()
                .zip(t.scale.chol().matvec(&z)?)
                .map(|(m, e)| m + 0.5 * e)
                .collect();
            let c = t_log_pdf(&y, &t)?.exp();
            (
                c,
                estimate(samples, c, || {
                    let (mu, lam) = sample_nw(&omega, &mut rng)?;
                    Ok(mvn_log_pdf(&y, &normal_of(mu, lam))?.exp())
                })?,
            )
        }
    };
    let z = if se > 0.0 {
        (est - closed) / se
    } else if est == closed {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Check {
        formula,
        setting,
        dim: k,
        closed_form: closed,
        estimate: est,
        std_error: se,
        z,
    })
}

/// All formulas × [`SETTINGS_PER_FORMULA`] settings, in parallel; results
/// do not depend on the thread count.
pub fn run_verification(samples: usize, seed: u64) -> Result<VerificationReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "verification needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let jobs: Vec<(Formula, usize)> = Formula::ALL
        .iter()
        .flat_map(|f| (0..SETTINGS_PER_FORMULA).map(move |s| (*f, s)))
        .collect();
    let checks = jobs
        .par_iter()
        .map(|(f, s)| check(*f, *s, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let summary: Vec<FormulaSummary> = Formula::ALL
        .iter()
        .map(|f| {
            let max_abs_z = checks
                .iter()
                .filter(|c| c.formula == *f)
                .map(|c| c.z.abs())
                .fold(0.0, f64::max);
            FormulaSummary {
                formula: *f,
                max_abs_z,
                pass: max_abs_z < Z_LIMIT,
            }
        })
        .collect();
    let max_abs_z = summary.iter().map(|s| s.max_abs_z).fold(0.0, f64::max);
    Ok(VerificationReport {
        samples,
        seed,
        summary,
        checks,
        max_abs_z,
        pass: max_abs_z < Z_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_consistent() {
        let r = run_verification(MIN_SAMPLES, 1).unwrap();
        assert_eq!(r.checks.len(), 200);
        assert!(r.checks.iter().all(|c| c.z.is_finite()));
        // loose: few samples, many checks
        assert!(r.max_abs_z < 6.0, "{:?}", r.summary);
        assert!(run_verification(MIN_SAMPLES - 1, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let a = check(Formula::Epkl, 3, 500, 9).unwrap();
        let b = check(Formula::Epkl, 3, 500, 9).unwrap();
        assert_eq!(a, b);
    }
}
