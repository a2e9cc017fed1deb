//! Total, data and knowledge uncertainty.
//!
//! Normal-Wishart models get closed forms for both the entropy-based
//! decomposition (predictive entropy = expected data entropy + mutual
//! information) and the law-of-total-variance decomposition. Ensembles of
//! Gaussians get the empirical variance decomposition and EPKL; their
//! mutual information has no tractable form and is left unset.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distributions::{kl_mvn, NormalParams, NormalWishartParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, Matrix, SymPD};
use crate::special::{digamma_unchecked, ln_gamma_unchecked, mvdigamma_unchecked};

/// How a matrix-valued variance is reduced to a score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    #[default]
    Logdet,
    Trace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub total_entropy: Option<f64>,
    pub expected_data_entropy: Option<f64>,
    pub mutual_information: Option<f64>,
    pub epkl: f64,
    pub total_variance: f64,
    pub expected_data_variance: f64,
    pub knowledge_variance: f64,
    pub scalarization: Scalarization,
    /// Squared error of the predictive mean against a supplied target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squared_error: Option<f64>,
}

/// Total = data + knowledge, as matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceDecomposition {
    pub total: Matrix,
    pub data: Matrix,
    pub knowledge: Matrix,
}

fn check_predictive(omega: &NormalWishartParams) -> Result<()> {
    let k = omega.dim() as f64;
    if omega.nu > k - 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "nu must exceed K-1 = {}, got {}",
            k - 1.0,
            omega.nu
        )))
    }
}

/// Terms of the predictive entropy that do not depend on L.
fn predictive_entropy_without_l(omega: &NormalWishartParams) -> f64 {
    let kf = omega.dim() as f64;
    let nu = omega.nu;
    let dof = nu - kf + 1.0;
    let a = (nu + 1.0) / 2.0;
    let b = dof / 2.0;
    a * (digamma_unchecked(a) - digamma_unchecked(b))
        - (ln_gamma_unchecked(a) - ln_gamma_unchecked(b) - 0.5 * kf * (dof * PI).ln())
        + 0.5 * kf * ((omega.kappa + 1.0) / (omega.kappa * dof)).ln()
}

/// Differential entropy of the Student-T predictive posterior.
pub fn predictive_entropy(omega: &NormalWishartParams) -> Result<f64> {
    check_predictive(omega)?;
    Ok(predictive_entropy_without_l(omega) - 0.5 * omega.l.logdet())
}

/// E_{NW}[H[N(y | μ, Λ)]] = ½[K ln(πe) − ln|L| − ψ_K(ν/2)].
pub fn expected_data_entropy(omega: &NormalWishartParams) -> Result<f64> {
    check_predictive(omega)?;
    let kf = omega.dim() as f64;
    Ok(0.5 * (kf * (PI.ln() + 1.0) - omega.l.logdet() - mvdigamma_unchecked(omega.nu / 2.0, omega.dim())))
}

/// Mutual information between y and (μ, Λ); independent of L.
pub fn mutual_information(omega: &NormalWishartParams) -> Result<f64> {
    check_predictive(omega)?;
    let kf = omega.dim() as f64;
    Ok(predictive_entropy_without_l(omega)
        - 0.5 * (kf * (PI.ln() + 1.0) - mvdigamma_unchecked(omega.nu / 2.0, omega.dim())))
}

/// Expected pairwise KL divergence between Gaussians drawn from the NW.
pub fn epkl(omega: &NormalWishartParams) -> Result<f64> {
    omega.require_moments()?;
    let kf = omega.dim() as f64;
    let (kappa, nu) = (omega.kappa, omega.nu);
    Ok(0.5 * nu * kf * (1.0 / kappa + 1.0) / (nu - kf - 1.0) - kf / 2.0 + kf / (2.0 * kappa))
}

/// Law-of-total-variance decomposition of the predictive covariance.
pub fn variance_decomposition(omega: &NormalWishartParams) -> Result<VarianceDecomposition> {
    omega.require_moments()?;
    let kf = omega.dim() as f64;
    let denom = omega.nu - kf - 1.0;
    let linv = omega.l.inverse().to_matrix();
    let data = linv.scale(1.0 / denom);
    let knowledge = linv.scale(1.0 / (omega.kappa * denom));
    let total = data.add(&knowledge)?;
    Ok(VarianceDecomposition { total, data, knowledge })
}

/// Scalar score of a positive-definite matrix.
pub fn scalarize(matrix: &SymPD, mode: Scalarization) -> f64 {
    match mode {
        Scalarization::Logdet => matrix.logdet(),
        Scalarization::Trace => matrix.to_matrix().trace(),
    }
}

/// Like [`scalarize`] for a symmetric positive semi-definite matrix; a
/// singular matrix has log-determinant −∞.
pub fn scalarize_matrix(matrix: &Matrix, mode: Scalarization) -> f64 {
    match mode {
        Scalarization::Logdet => cholesky(matrix).map_or(f64::NEG_INFINITY, |s| s.logdet()),
        Scalarization::Trace => matrix.trace(),
    }
}

fn squared_error(mean: &[f64], target: Option<&[f64]>) -> Result<Option<f64>> {
    target
        .map(|y| {
            check_dim(mean.len(), y.len())?;
            Ok(mean.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .transpose()
}

/// Full report for one Normal-Wishart prediction.
pub fn nw_measures(
    omega: &NormalWishartParams,
    mode: Scalarization,
    target: Option<&[f64]>,
) -> Result<UncertaintyReport> {
    let var = variance_decomposition(omega)?;
    Ok(UncertaintyReport {
        total_entropy: Some(predictive_entropy(omega)?),
        expected_data_entropy: Some(expected_data_entropy(omega)?),
        mutual_information: Some(mutual_information(omega)?),
        epkl: epkl(omega)?,
        total_variance: scalarize_matrix(&var.total, mode),
        expected_data_variance: scalarize_matrix(&var.data, mode),
        knowledge_variance: scalarize_matrix(&var.knowledge, mode),
        scalarization: mode,
        squared_error: squared_error(&omega.m, target)?,
    })
}

/// Empirical law of total variance over ensemble members; knowledge
/// variance uses the population (divide-by-M) covariance of member means.
pub fn ensemble_variance(members: &[NormalParams]) -> Result<VarianceDecomposition> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
    let k = first.dim();
    let mf = members.len() as f64;
    let mut data = Matrix::zeros(k, k);
    let mut mean = vec![0.0; k];
    for p in members {
        check_dim(k, p.dim())?;
        data = data.add(&p.covariance().to_matrix())?;
        for (a, b) in mean.iter_mut().zip(&p.mean) {
            *a += b;
        }
    }
    let data = data.scale(1.0 / mf);
    mean.iter_mut().for_each(|a| *a /= mf);
    let mut knowledge = Matrix::zeros(k, k);
    for p in members {
        let d: Vec<f64> = p.mean.iter().zip(&mean).map(|(a, b)| a - b).collect();
        knowledge = knowledge.add(&Matrix::outer(&d, &d))?;
    }
    let knowledge = knowledge.scale(1.0 / mf);
    let total = data.add(&knowledge)?;
    Ok(VarianceDecomposition { total, data, knowledge })
}

/// Mean of the member means.
pub fn ensemble_mean(members: &[NormalParams]) -> Vec<f64> {
    let k = members.first().map_or(0, |p| p.dim());
    let mut mean = vec![0.0; k];
    for p in members {
        for (a, b) in mean.iter_mut().zip(&p.mean) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= members.len() as f64);
    mean
}

/// Report for an ensemble of Gaussians (M ≥ 2).
pub fn ensemble_measures(members: &[NormalParams], target: Option<&[f64]>) -> Result<UncertaintyReport> {
    ensemble_measures_with(members, Scalarization::Logdet, target)
}

pub fn ensemble_measures_with(
    members: &[NormalParams],
    mode: Scalarization,
    target: Option<&[f64]>,
) -> Result<UncertaintyReport> {
    let m = members.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble measures need M >= 2, got {m}"
        )));
    }
    let var = ensemble_variance(members)?;
    let mut kl_sum = 0.0;
    for (i, a) in members.iter().enumerate() {
        for (j, b) in members.iter().enumerate() {
            if i != j {
                kl_sum += kl_mvn(a, b)?;
            }
        }
    }
    let data_entropy = members.iter().map(NormalParams::entropy).sum::<f64>() / m as f64;
    Ok(UncertaintyReport {
        total_entropy: None,
        expected_data_entropy: Some(data_entropy),
        mutual_information: None,
        epkl: kl_sum / (m * (m - 1)) as f64,
        total_variance: scalarize_matrix(&var.total, mode),
        expected_data_variance: scalarize_matrix(&var.data, mode),
        knowledge_variance: scalarize_matrix(&var.knowledge, mode),
        scalarization: mode,
        squared_error: squared_error(&ensemble_mean(members), target)?,
    })
}
