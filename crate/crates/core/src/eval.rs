//! Predictive metrics, prediction-rejection curves and OOD detection AUC.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ColumnStats;
use crate::distributions::{mvn_log_pdf, t_log_pdf, NormalParams, StudentTParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, SymPD};

pub fn rmse(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_dim(preds.len(), targets.len())?;
    if preds.is_empty() {
        return Err(Error::InvalidArgument("rmse of nothing".into()));
    }
    let mut s = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        check_dim(p.len(), t.len())?;
        s += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    }
    Ok((s / preds.len() as f64).sqrt())
}

/// A predictive distribution over targets.
#[derive(Clone, Copy, Debug)]
pub enum Posterior<'a> {
    Gaussian(&'a NormalParams),
    StudentT(&'a StudentTParams),
    /// Equally weighted mixture of Gaussians.
    Mixture(&'a [NormalParams]),
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// −ln p(y).
pub fn predictive_nll(posterior: Posterior<'_>, y: &[f64]) -> Result<f64> {
    match posterior {
        Posterior::Gaussian(p) => Ok(-mvn_log_pdf(y, p)?),
        Posterior::StudentT(p) => Ok(-t_log_pdf(y, p)?),
        Posterior::Mixture(ps) => {
            if ps.is_empty() {
                return Err(Error::InvalidArgument("empty mixture".into()));
            }
            let logs = ps.iter().map(|p| mvn_log_pdf(y, p)).collect::<Result<Vec<_>>>()?;
            Ok((ps.len() as f64).ln() - log_sum_exp(&logs))
        }
    }
}

fn scale_lower(chol: &Matrix, d: &[f64]) -> Result<SymPD> {
    let mut c = chol.clone();
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            c[(i, j)] *= d[i];
        }
    }
    SymPD::from_cholesky(c)
}

/// Maps a Gaussian over standardized targets back to original units.
pub fn destandardize_normal(p: &NormalParams, stats: &ColumnStats) -> Result<NormalParams> {
    check_dim(stats.mean.len(), p.dim())?;
    let mean = p
        .mean
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(m, (a, s))| m * s + a)
        .collect();
    let inv: Vec<f64> = stats.std.iter().map(|s| 1.0 / s).collect();
    NormalParams::new(mean, scale_lower(p.precision.chol(), &inv)?)
}

pub fn destandardize_t(p: &StudentTParams, stats: &ColumnStats) -> Result<StudentTParams> {
    check_dim(stats.mean.len(), p.dim())?;
    let loc = p
        .loc
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(m, (a, s))| m * s + a)
        .collect();
    StudentTParams::new(loc, scale_lower(p.scale.chol(), &stats.std)?, p.dof)
}

/// How retained errors are summarized along a rejection curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveConvention {
    /// Rejected examples count as zero error and the sum is divided by N, so
    /// the curve ends at 0 and random rejection follows the straight line
    /// from the full MSE to 0.
    #[default]
    ZeroFill,
    /// Mean over the retained examples only; random rejection is flat at the
    /// full MSE. The last point sits at 1 − 1/N.
    RetainedMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub convention: CurveConvention,
    pub fractions: Vec<f64>,
    pub errors: Vec<f64>,
    pub oracle: Vec<f64>,
    pub random: Vec<f64>,
    pub ar_uncertainty: f64,
    pub ar_oracle: f64,
}

/// Indices sorted by score descending; ties keep their original order.
fn rejection_order(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {i} is NaN")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    Ok(idx)
}

fn curve_values(errors: &[f64], order: &[usize], convention: CurveConvention) -> Vec<f64> {
    let n = errors.len();
    // suffix sums over the rejection order give the retained totals
    let mut retained = vec![0.0; n + 1];
    for r in (0..n).rev() {
        retained[r] = retained[r + 1] + errors[order[r]];
    }
    match convention {
        CurveConvention::ZeroFill => retained.iter().map(|s| s / n as f64).collect(),
        CurveConvention::RetainedMean => (0..n).map(|r| retained[r] / (n - r) as f64).collect(),
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
        .sum()
}

/// Rejection curve for per-example errors ranked by `scores` (highest rejected first).
pub fn rejection_curve(errors: &[f64], scores: &[f64]) -> Result<RejectionCurve> {
    rejection_curve_with(errors, scores, CurveConvention::default())
}

pub fn rejection_curve_with(errors: &[f64], scores: &[f64], convention: CurveConvention) -> Result<RejectionCurve> {
    check_dim(errors.len(), scores.len())?;
    let n = errors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "rejection curve needs at least two examples".into(),
        ));
    }
    if let Some(i) = errors.iter().position(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "error {i} is not a finite non-negative number"
        )));
    }
    let curve = curve_values(errors, &rejection_order(scores)?, convention);
    let oracle = curve_values(errors, &rejection_order(errors)?, convention);
    let fractions: Vec<f64> = (0..curve.len()).map(|r| r as f64 / n as f64).collect();
    let full = curve[0];
    let random: Vec<f64> = match convention {
        CurveConvention::ZeroFill => fractions.iter().map(|f| full * (1.0 - f)).collect(),
        CurveConvention::RetainedMean => vec![full; curve.len()],
    };
    let area_random = trapezoid(&fractions, &random);
    Ok(RejectionCurve {
        convention,
        ar_uncertainty: area_random - trapezoid(&fractions, &curve),
        ar_oracle: area_random - trapezoid(&fractions, &oracle),
        fractions,
        errors: curve,
        oracle,
        random,
    })
}

/// Prediction rejection ratio AR_uncertainty / AR_oracle.
pub fn prr(curve: &RejectionCurve) -> Result<f64> {
    if !(curve.ar_oracle > 0.0) {
        return Err(Error::InvalidArgument(
            "oracle rejection area is zero (all errors equal)".into(),
        ));
    }
    Ok(curve.ar_uncertainty / curve.ar_oracle)
}

/// Writes `rejection_fraction,error` rows.
pub fn write_curve_csv(curve: &RejectionCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rejection_fraction", "error"])?;
    for (f, e) in curve.fractions.iter().zip(&curve.errors) {
        w.write_record([format!("{f:?}"), format!("{e:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Mann–Whitney AUC with higher scores meaning more out-of-domain; ties count ½.
pub fn auc_roc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(Error::InvalidArgument("AUC needs scores on both sides".into()));
    }
    if in_scores.iter().chain(out_scores).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|s| (*s, false))
        .chain(out_scores.iter().map(|s| (*s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("no NaN"));
    // sum of 1-based mid-ranks of the out-of-domain scores
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    Ok((rank_sum - n_out * (n_out + 1.0) / 2.0) / (n_in * n_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rmse_examples() {
        let t = vec![vec![1.0], vec![2.0]];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&[vec![2.0], vec![1.0]], &t).unwrap(), 1.0);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn nll_examples() {
        let p = NormalParams::new(vec![0.0], SymPD::identity(1)).unwrap();
        let half = 0.5 * (2.0 * PI).ln();
        assert!((predictive_nll(Posterior::Gaussian(&p), &[0.0]).unwrap() - half).abs() < 1e-14);
        let single = [p.clone()];
        assert!(
            (predictive_nll(Posterior::Mixture(&single), &[0.7]).unwrap()
                - predictive_nll(Posterior::Gaussian(&p), &[0.7]).unwrap())
            .abs()
                < 1e-14
        );
    }

    #[test]
    fn destandardized_nll_adds_log_std() {
        let stats = ColumnStats {
            mean: vec![5.0],
            std: vec![0.8],
        };
        let p = NormalParams::new(vec![0.3], SymPD::from_diag(&[2.0]).unwrap()).unwrap();
        let q = destandardize_normal(&p, &stats).unwrap();
        let z = -0.4;
        let y = z * 0.8 + 5.0;
        let a = predictive_nll(Posterior::Gaussian(&q), &[y]).unwrap();
        let b = predictive_nll(Posterior::Gaussian(&p), &[z]).unwrap() + 0.8f64.ln();
        assert!((a - b).abs() < 1e-13);
        let t = StudentTParams::new(vec![0.3], SymPD::from_diag(&[0.5]).unwrap(), 4.0).unwrap();
        let u = destandardize_t(&t, &stats).unwrap();
        let a = predictive_nll(Posterior::StudentT(&u), &[y]).unwrap();
        let b = predictive_nll(Posterior::StudentT(&t), &[z]).unwrap() + 0.8f64.ln();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let e = [0.3, 2.0, 0.1, 5.0, 0.7, 0.7];
        for conv in [CurveConvention::ZeroFill, CurveConvention::RetainedMean] {
            let c = rejection_curve_with(&e, &e, conv).unwrap();
            assert_eq!(prr(&c).unwrap(), 1.0);
            assert_eq!(c.errors, c.oracle);
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            assert!(prr(&rejection_curve_with(&e, &neg, conv).unwrap()).unwrap() < 0.0);
            assert!((c.errors[0] - e.iter().sum::<f64>() / 6.0).abs() < 1e-15);
        }
        let c = rejection_curve_with(&e, &e, CurveConvention::RetainedMean).unwrap();
        assert_eq!(*c.errors.last().unwrap(), 0.1);
        assert!(prr(&rejection_curve(&[1.0, 1.0], &[0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn stable_ties_and_length_checks() {
        let c = rejection_curve(&[1.0, 3.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        // stable order rejects index 0 first
        assert!((c.errors[1] - 5.0 / 3.0).abs() < 1e-15);
        assert!(rejection_curve(&[1.0], &[1.0]).is_err());
        assert!(rejection_curve(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.3, 0.4], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(auc_roc(&[1.0; 4], &[1.0; 3]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.1, 0.5], &[0.5, 0.9]).unwrap(), 0.875);
        assert!(auc_roc(&[], &[1.0]).is_err());
    }

    #[test]
    fn curve_csv_has_two_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_curve_csv(&rejection_curve(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("rejection_fraction,error\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
