//! Normal, Wishart, Normal-Wishart and multivariate Student-T families:
//! log-densities, samplers and closed-form KL divergences.
//!
//! All divergences are evaluated in Cholesky space; densities are never
//! exponentiated here.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, SymPD};
use crate::special::{ln_gamma_unchecked, ln_mvgamma_unchecked, mvdigamma_unchecked};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian N(mean, precision⁻¹).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: Vec<f64>,
    pub precision: SymPD,
}

impl NormalParams {
    pub fn new(mean: Vec<f64>, precision: SymPD) -> Result<Self> {
        check_dim(precision.dim(), mean.len())?;
        Ok(Self { mean, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> SymPD {
        self.precision.inverse()
    }

    /// Differential entropy ½[K ln 2πe − ln|Λ|].
    pub fn entropy(&self) -> f64 {
        0.5 * (self.dim() as f64 * (LN_2PI + 1.0) - self.precision.logdet())
    }
}

/// Wishart W(Λ | scale, dof) with E[Λ] = dof · scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WishartParams {
    pub scale: SymPD,
    pub dof: f64,
}

impl WishartParams {
    pub fn new(scale: SymPD, dof: f64) -> Result<Self> {
        let k = scale.dim() as f64;
        if !(dof > k - 1.0) || !dof.is_finite() {
            return Err(Error::Domain(format!(
                "Wishart dof must exceed K-1 = {}, got {dof}",
                k - 1.0
            )));
        }
        Ok(Self { scale, dof })
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }
}

/// Normal-Wishart NW(μ, Λ | m, L, κ, ν) = N(μ | m, κΛ) W(Λ | L, ν).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalWishartParams {
    pub m: Vec<f64>,
    pub l: SymPD,
    pub kappa: f64,
    pub nu: f64,
}

impl NormalWishartParams {
    pub fn new(m: Vec<f64>, l: SymPD, kappa: f64, nu: f64) -> Result<Self> {
        check_dim(l.dim(), m.len())?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        let k = m.len() as f64;
        if !(nu > k - 1.0) || !nu.is_finite() {
            return Err(Error::Domain(format!("nu must exceed K-1 = {}, got {nu}", k - 1.0)));
        }
        Ok(Self { m, l, kappa, nu })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn wishart(&self) -> WishartParams {
        WishartParams {
            scale: self.l.clone(),
            dof: self.nu,
        }
    }

    /// Errors unless ν > K + 1, the condition for predictive moments, EPKL
    /// and the variance decomposition.
    pub fn require_moments(&self) -> Result<()> {
        let k = self.dim() as f64;
        if self.nu > k + 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "nu must exceed K+1 = {} for moments, got {}",
                k + 1.0,
                self.nu
            )))
        }
    }
}

/// Multivariate Student-T with location, scale matrix Σ and dof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub loc: Vec<f64>,
    pub scale: SymPD,
    pub dof: f64,
}

impl StudentTParams {
    pub fn new(loc: Vec<f64>, scale: SymPD, dof: f64) -> Result<Self> {
        check_dim(scale.dim(), loc.len())?;
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::Domain(format!("T dof must be positive, got {dof}")));
        }
        Ok(Self { loc, scale, dof })
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    /// Covariance scale · dof / (dof − 2); defined for dof > 2.
    pub fn covariance(&self) -> Result<SymPD> {
        if self.dof <= 2.0 {
            return Err(Error::Domain(format!("T variance needs dof > 2, got {}", self.dof)));
        }
        self.scale.scale(self.dof / (self.dof - 2.0))
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn mvn_log_pdf(y: &[f64], p: &NormalParams) -> Result<f64> {
    check_dim(p.dim(), y.len())?;
    let d = diff(y, &p.mean);
    let q = p.precision.quad_form(&d)?;
    Ok(-0.5 * q + 0.5 * p.precision.logdet() - 0.5 * p.dim() as f64 * LN_2PI)
}

pub fn wishart_log_pdf(lambda: &SymPD, p: &WishartParams) -> Result<f64> {
    let k = p.dim();
    check_dim(k, lambda.dim())?;
    let kf = k as f64;
    let nu = p.dof;
    if !(nu > kf - 1.0) {
        return Err(Error::Domain(format!("Wishart dof must exceed K-1, got {nu}")));
    }
    // tr(Λ L⁻¹) = ‖C_L⁻¹ C_Λ‖²_F
    let tr = trace_with_inverse(lambda, &p.scale);
    Ok(0.5 * (nu - kf - 1.0) * lambda.logdet()
        - 0.5 * tr
        - 0.5 * nu * kf * LN_2
        - ln_mvgamma_unchecked(nu / 2.0, k)
        - 0.5 * nu * p.scale.logdet())
}

/// tr(A B⁻¹) for SPD A, B of equal size.
fn trace_with_inverse(a: &SymPD, b: &SymPD) -> f64 {
    let binv = b.chol_inverse();
    let ca = a.chol();
    let k = a.dim();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            // (B_chol⁻¹ A_chol)_ij
            let v: f64 = (j..=i).map(|t| binv[(i, t)] * ca[(t, j)]).sum();
            s += v * v;
        }
    }
    s
}

pub fn nw_log_pdf(mu: &[f64], lambda: &SymPD, omega: &NormalWishartParams) -> Result<f64> {
    let k = omega.dim();
    check_dim(k, mu.len())?;
    let d = diff(mu, &omega.m);
    let q = lambda.quad_form(&d)?;
    let kf = k as f64;
    let normal = 0.5 * kf * omega.kappa.ln() + 0.5 * lambda.logdet() - 0.5 * kf * LN_2PI - 0.5 * omega.kappa * q;
    Ok(normal + wishart_log_pdf(lambda, &omega.wishart())?)
}

pub fn t_log_pdf(y: &[f64], p: &StudentTParams) -> Result<f64> {
    let k = p.dim();
    check_dim(k, y.len())?;
    let kf = k as f64;
    let nu = p.dof;
    let d = diff(y, &p.loc);
    let q = p.scale.inv_quad_form(&d)?;
    Ok(ln_gamma_unchecked((nu + kf) / 2.0)
        - ln_gamma_unchecked(nu / 2.0)
        - 0.5 * kf * (nu * PI).ln()
        - 0.5 * p.scale.logdet()
        - 0.5 * (nu + kf) * (q / nu).ln_1p())
}

/// Predictive T(m, (κ+1)/(κ(ν−K+1)) L⁻¹, ν−K+1).
pub fn posterior_predictive(omega: &NormalWishartParams) -> Result<StudentTParams> {
    let kf = omega.dim() as f64;
    let dof = omega.nu - kf + 1.0;
    if !(dof > 0.0) {
        return Err(Error::Domain(format!("predictive needs nu > K-1, got {}", omega.nu)));
    }
    let c = (omega.kappa + 1.0) / (omega.kappa * dof);
    let scale = omega.l.inverse().scale(c)?;
    StudentTParams::new(omega.m.clone(), scale, dof)
}

/// Bartlett decomposition: Λ = (C A)(C A)ᵀ with C = chol(L); C·A is the
/// Cholesky factor of the draw.
pub fn sample_wishart<R: Rng + ?Sized>(p: &WishartParams, rng: &mut R) -> Result<SymPD> {
    let k = p.dim();
    let mut a = Matrix::zeros(k, k);
    for i in 0..k {
        let chi2 = ChiSquared::new(p.dof - i as f64).map_err(|e| Error::Domain(format!("chi-squared dof: {e}")))?;
        a[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let c = p.scale.chol();
    let mut ca = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            ca[(i, j)] = (j..=i).map(|t| c[(i, t)] * a[(t, j)]).sum();
        }
    }
    SymPD::from_cholesky(ca)
}

pub fn sample_mvn<R: Rng + ?Sized>(p: &NormalParams, rng: &mut R) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..p.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let e = p.precision.backward_solve(&z)?;
    Ok(p.mean.iter().zip(e).map(|(m, v)| m + v).collect())
}

/// Draws Λ ~ W(L, ν) then μ ~ N(m, (κΛ)⁻¹).
pub fn sample_nw<R: Rng + ?Sized>(omega: &NormalWishartParams, rng: &mut R) -> Result<(Vec<f64>, SymPD)> {
    let lambda = sample_wishart(&omega.wishart(), rng)?;
    let z: Vec<f64> = (0..omega.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let e = lambda.backward_solve(&z)?;
    let s = 1.0 / omega.kappa.sqrt();
    let mu = omega.m.iter().zip(e).map(|(m, v)| m + s * v).collect();
    Ok((mu, lambda))
}

/// KL[p ‖ q] between Gaussians in precision form.
pub fn kl_mvn(p: &NormalParams, q: &NormalParams) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let d = diff(&p.mean, &q.mean);
    let quad = q.precision.quad_form(&d)?;
    let tr = trace_with_inverse(&q.precision, &p.precision);
    Ok(0.5 * (quad + p.precision.logdet() - q.precision.logdet() + tr - p.dim() as f64))
}

/// KL[W(L, ν) ‖ W(L₀, ν₀)].
pub fn kl_wishart(p: &WishartParams, q: &WishartParams) -> Result<f64> {
    let k = p.dim();
    check_dim(k, q.dim())?;
    let kf = k as f64;
    let tr = trace_with_inverse(&p.scale, &q.scale);
    let ln_ratio = p.scale.logdet() - q.scale.logdet();
    Ok(
        0.5 * p.dof * (tr - kf) - 0.5 * q.dof * ln_ratio + ln_mvgamma_unchecked(q.dof / 2.0, k)
            - ln_mvgamma_unchecked(p.dof / 2.0, k)
            + 0.5 * (p.dof - q.dof) * mvdigamma_unchecked(p.dof / 2.0, k),
    )
}

/// KL between Normal-Wishart distributions via the chain rule.
pub fn kl_nw(p: &NormalWishartParams, q: &NormalWishartParams) -> Result<f64> {
    let k = p.dim();
    check_dim(k, q.dim())?;
    let d = diff(&p.m, &q.m);
    let quad = p.nu * p.l.quad_form(&d)?;
    let r = q.kappa / p.kappa;
    Ok(0.5 * q.kappa * quad + 0.5 * k as f64 * (r - r.ln() - 1.0) + kl_wishart(&p.wishart(), &q.wishart())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use crate::special::{log_gamma, multivariate_digamma};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn spd2(a: f64, b: f64, c: f64) -> SymPD {
        cholesky(&Matrix::from_rows(&[&[a, b], &[b, c]])).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn mvn_standard_values() {
        let p = NormalParams::new(vec![0.0], SymPD::identity(1)).unwrap();
        assert!((mvn_log_pdf(&[0.0], &p).unwrap() + 0.918_938_533_204_672_8).abs() < 1e-14);
        assert!((mvn_log_pdf(&[1.0], &p).unwrap() + 0.5 + 0.918_938_533_204_672_8).abs() < 1e-14);
        assert!(mvn_log_pdf(&[0.0, 1.0], &p).is_err());
    }

    #[test]
    fn mvn_integrates_to_one_on_grid() {
        let p = NormalParams::new(vec![0.3, -0.4], spd2(2.0, 0.6, 1.5)).unwrap();
        let h = 0.02;
        let n = (16.0 / h) as usize;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-8.0 + (i as f64 + 0.5) * h, -8.0 + (j as f64 + 0.5) * h];
                total += mvn_log_pdf(&y, &p).unwrap().exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn wishart_k1_is_scaled_chi_squared() {
        // K=1, L=1, ν=3: Λ ~ χ²₃, log density at 1 = -ln(2^{3/2} Γ(3/2)) + ½ ln 1 - ½
        let p = WishartParams::new(SymPD::identity(1), 3.0).unwrap();
        let lam = SymPD::identity(1);
        let want = -(1.5 * LN_2 + log_gamma(1.5).unwrap()) - 0.5;
        assert!((wishart_log_pdf(&lam, &p).unwrap() - want).abs() < 1e-14);
        assert!(WishartParams::new(SymPD::identity(2), 1.0).is_err());
    }

    #[test]
    fn wishart_k1_integrates_to_one() {
        let p = WishartParams::new(SymPD::from_diag(&[0.7]).unwrap(), 3.5).unwrap();
        let h = 1e-3;
        let total: f64 = (0..60_000)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                wishart_log_pdf(&SymPD::from_diag(&[x]).unwrap(), &p).unwrap().exp() * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn nw_factorizes() {
        let omega = NormalWishartParams::new(vec![0.5], SymPD::from_diag(&[2.0]).unwrap(), 1.0, 4.0).unwrap();
        let lam = SymPD::from_diag(&[1.3]).unwrap();
        let mu = [0.5];
        let want = 0.5 * lam.logdet() - 0.5 * LN_2PI + wishart_log_pdf(&lam, &omega.wishart()).unwrap();
        assert!((nw_log_pdf(&mu, &lam, &omega).unwrap() - want).abs() < 1e-14);

        let omega = NormalWishartParams::new(vec![0.2], SymPD::from_diag(&[0.8]).unwrap(), 2.5, 5.0).unwrap();
        let mu = [1.1];
        let normal = NormalParams::new(vec![0.2], lam.scale(2.5).unwrap()).unwrap();
        let want = mvn_log_pdf(&mu, &normal).unwrap() + wishart_log_pdf(&lam, &omega.wishart()).unwrap();
        assert!((nw_log_pdf(&mu, &lam, &omega).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn nw_k1_integrates_to_one() {
        let omega = NormalWishartParams::new(vec![0.0], SymPD::from_diag(&[1.0]).unwrap(), 2.0, 4.0).unwrap();
        let (hm, hl) = (0.01, 0.01);
        let mut total = 0.0;
        for i in 0..1000 {
            let mu = -5.0 + (i as f64 + 0.5) * hm;
            for j in 0..3000 {
                let l = (j as f64 + 0.5) * hl;
                let lam = SymPD::from_diag(&[l]).unwrap();
                total += nw_log_pdf(&[mu], &lam, &omega).unwrap().exp() * hm * hl;
            }
        }
        assert!((total - 1.0).abs() < 1e-2, "{total}");
    }

    #[test]
    fn t_cauchy_and_gaussian_limit() {
        let p = StudentTParams::new(vec![0.0], SymPD::identity(1), 1.0).unwrap();
        assert!((t_log_pdf(&[0.0], &p).unwrap() + PI.ln()).abs() < 1e-14);

        let sigma = spd2(1.5, 0.3, 0.8);
        let t = StudentTParams::new(vec![0.1, 0.2], sigma.clone(), 1e6).unwrap();
        let n = NormalParams::new(vec![0.1, 0.2], sigma.inverse()).unwrap();
        let mut r = rng(3);
        for _ in 0..20 {
            let y = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            assert!((t_log_pdf(&y, &t).unwrap() - mvn_log_pdf(&y, &n).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn t_integrates_to_one() {
        let t = StudentTParams::new(vec![0.2, -0.1], spd2(0.3, 0.05, 0.2), 9.0).unwrap();
        let h = 0.02;
        let n = (30.0 / h) as usize;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-15.0 + (i as f64 + 0.5) * h, -15.0 + (j as f64 + 0.5) * h];
                total += t_log_pdf(&y, &t).unwrap().exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn predictive_by_substitution() {
        let omega = NormalWishartParams::new(vec![0.0], SymPD::identity(1), 1.0, 3.0).unwrap();
        let t = posterior_predictive(&omega).unwrap();
        assert_eq!(t.loc, vec![0.0]);
        assert!((t.dof - 3.0).abs() < 1e-15);
        assert!((t.scale.to_matrix()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn predictive_variance_equals_total_variance_form() {
        let omega = NormalWishartParams::new(vec![0.0, 1.0], spd2(0.9, 0.2, 0.6), 0.7, 6.5).unwrap();
        let cov = posterior_predictive(&omega).unwrap().covariance().unwrap().to_matrix();
        let k = 2.0;
        let want = omega
            .l
            .inverse()
            .to_matrix()
            .scale((1.0 + omega.kappa) / (omega.kappa * (omega.nu - k - 1.0)));
        assert!(cov.sub(&want).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn predictive_matches_mc_marginal() {
        let omega = NormalWishartParams::new(vec![0.5], SymPD::from_diag(&[1.5]).unwrap(), 2.0, 4.0).unwrap();
        let t = posterior_predictive(&omega).unwrap();
        let mut r = rng(11);
        let draws: Vec<NormalParams> = (0..100_000)
            .map(|_| {
                let (mu, lam) = sample_nw(&omega, &mut r).unwrap();
                NormalParams::new(mu, lam).unwrap()
            })
            .collect();
        for y in [-1.0, 0.0, 0.5, 1.2, 2.5] {
            let dens: Vec<f64> = draws.iter().map(|p| mvn_log_pdf(&[y], p).unwrap().exp()).collect();
            let (m, se) = mean_se(&dens);
            let z = (m.ln() - t_log_pdf(&[y], &t).unwrap()) / (se / m);
            assert!(z.abs() < 4.0, "y={y} z={z}");
        }
    }

    #[test]
    fn samplers_are_deterministic_and_match_moments() {
        let w = WishartParams::new(spd2(0.8, 0.3, 0.5), 5.0).unwrap();
        let a = sample_wishart(&w, &mut rng(5)).unwrap();
        let b = sample_wishart(&w, &mut rng(5)).unwrap();
        assert_eq!(a, b);

        let mut r = rng(7);
        let n = 100_000;
        let draws: Vec<SymPD> = (0..n).map(|_| sample_wishart(&w, &mut r).unwrap()).collect();
        let want = w.scale.to_matrix().scale(w.dof);
        for (i, j) in [(0, 0), (1, 0), (1, 1)] {
            let xs: Vec<f64> = draws.iter().map(|d| d.to_matrix()[(i, j)]).collect();
            let (m, se) = mean_se(&xs);
            assert!(((m - want[(i, j)]) / se).abs() < 3.5, "E[Λ]_{i}{j}");
        }
        let lds: Vec<f64> = draws.iter().map(|d| d.logdet()).collect();
        let (m, se) = mean_se(&lds);
        let want_ld = multivariate_digamma(2.5, 2).unwrap() + 2.0 * LN_2 + w.scale.logdet();
        assert!(((m - want_ld) / se).abs() < 3.5);

        let omega = NormalWishartParams::new(vec![1.0, -2.0], w.scale.clone(), 0.5, 5.0).unwrap();
        let mus: Vec<Vec<f64>> = (0..n).map(|_| sample_nw(&omega, &mut r).unwrap().0).collect();
        for d in 0..2 {
            let xs: Vec<f64> = mus.iter().map(|m| m[d]).collect();
            let (m, se) = mean_se(&xs);
            assert!(((m - omega.m[d]) / se).abs() < 3.5);
        }

        let p = NormalParams::new(vec![0.5, 0.0], spd2(2.0, 0.5, 1.0)).unwrap();
        let ys: Vec<Vec<f64>> = (0..n).map(|_| sample_mvn(&p, &mut r).unwrap()).collect();
        let cov = p.covariance().to_matrix();
        let xs: Vec<f64> = ys.iter().map(|y| (y[0] - 0.5) * y[1]).collect();
        let (m, se) = mean_se(&xs);
        assert!(((m - cov[(0, 1)]) / se).abs() < 3.5);
    }

    #[test]
    fn kl_mvn_values() {
        let p = NormalParams::new(vec![1.0], SymPD::identity(1)).unwrap();
        let q = NormalParams::new(vec![0.0], SymPD::identity(1)).unwrap();
        assert_eq!(kl_mvn(&p, &p).unwrap(), 0.0);
        assert!((kl_mvn(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_mvn_matches_mc() {
        let p = NormalParams::new(vec![0.3, -0.2], spd2(1.5, 0.4, 0.9)).unwrap();
        let q = NormalParams::new(vec![-0.1, 0.4], spd2(0.8, -0.2, 1.7)).unwrap();
        let mut r = rng(9);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let y = sample_mvn(&p, &mut r).unwrap();
                mvn_log_pdf(&y, &p).unwrap() - mvn_log_pdf(&y, &q).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(((m - kl_mvn(&p, &q).unwrap()) / se).abs() < 4.0);
    }

    #[test]
    fn kl_wishart_values() {
        let p = WishartParams::new(SymPD::from_diag(&[2.0]).unwrap(), 3.0).unwrap();
        let q = WishartParams::new(SymPD::identity(1), 3.0).unwrap();
        assert!(kl_wishart(&p, &p).unwrap().abs() < 1e-14);
        // (3/2)(2 - 1) - (3/2) ln 2
        let want = 1.5 - 1.5 * LN_2;
        assert!((kl_wishart(&p, &q).unwrap() - want).abs() < 1e-14);
        let mut r = rng(13);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let l = sample_wishart(&p, &mut r).unwrap();
                wishart_log_pdf(&l, &p).unwrap() - wishart_log_pdf(&l, &q).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(((m - want) / se).abs() < 4.0);
    }

    #[test]
    fn kl_nw_values() {
        let p = NormalWishartParams::new(vec![0.4], SymPD::from_diag(&[1.2]).unwrap(), 1.5, 4.0).unwrap();
        let q = NormalWishartParams::new(vec![-0.3], SymPD::from_diag(&[0.7]).unwrap(), 0.8, 3.0).unwrap();
        assert!(kl_nw(&p, &p).unwrap().abs() < 1e-14);
        let mut r = rng(17);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let (mu, l) = sample_nw(&p, &mut r).unwrap();
                nw_log_pdf(&mu, &l, &p).unwrap() - nw_log_pdf(&mu, &l, &q).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(((m - kl_nw(&p, &q).unwrap()) / se).abs() < 4.0);

        // monotone in the mean offset
        let mut last = 0.0;
        for i in 0..10 {
            let mut p2 = p.clone();
            p2.m = vec![q.m[0] + 0.3 * i as f64];
            let v = kl_nw(&p2, &q).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn kls_are_nonnegative_on_random_pairs() {
        let mut r = rng(21);
        for _ in 0..1000 {
            let k = r.random_range(1..=3usize);
            let rand_spd = |r: &mut ChaCha8Rng| {
                let mut a = Matrix::zeros(k, k);
                for i in 0..k {
                    for j in 0..k {
                        a[(i, j)] = r.random_range(-1.0..1.0);
                    }
                }
                cholesky(
                    &a.matmul(&a.transpose())
                        .unwrap()
                        .add(&Matrix::identity(k).scale(0.2))
                        .unwrap(),
                )
                .unwrap()
            };
            let nw = |r: &mut ChaCha8Rng| {
                let l = rand_spd(r);
                let m = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
                NormalWishartParams::new(
                    m,
                    l,
                    r.random_range(0.05..20.0),
                    k as f64 - 1.0 + r.random_range(0.1..30.0),
                )
                .unwrap()
            };
            let p = nw(&mut r);
            let q = nw(&mut r);
            assert!(kl_wishart(&p.wishart(), &q.wishart()).unwrap() >= -1e-10);
            assert!(kl_nw(&p, &q).unwrap() >= -1e-10);
            let a = NormalParams::new(p.m.clone(), p.l.clone()).unwrap();
            let b = NormalParams::new(q.m.clone(), q.l.clone()).unwrap();
            assert!(kl_mvn(&a, &b).unwrap() >= -1e-10);
        }
    }
}
