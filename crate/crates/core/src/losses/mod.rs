//! Training objectives: Gaussian NLL, reverse-KL Normal-Wishart loss and its
//! in/out-of-domain combination, EnD, MD-EnD and EnD² with temperature.
//!
//! Functions here act on single distributions in f64. Batched versions that
//! record onto an autodiff [`Graph`](crate::nn::Graph) live in [`graph`].

pub mod graph;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distributions::{kl_mvn, kl_nw, mvn_log_pdf, nw_log_pdf, NormalParams, NormalWishartParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::nn::{HeadOutput, Mlp};
use crate::special::mvdigamma_unchecked;

/// Diagonal jitter added to a singular target scatter.
pub const SCATTER_JITTER: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub omega0: NormalWishartParams,
    pub beta_in: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl PriorConfig {
    pub fn from_targets(targets: &[Vec<f64>], epsilon: f64, beta_in: f64, gamma: f64) -> Result<Self> {
        if !(beta_in >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta_in and gamma must be non-negative, got {beta_in} and {gamma}"
            )));
        }
        Ok(Self {
            omega0: prior_from_data(targets, epsilon)?,
            beta_in,
            gamma,
            epsilon,
        })
    }
}

/// Semi-informative prior: m₀ the target mean, L₀⁻¹ = ν₀·(scatter / N),
/// κ₀ = ε, ν₀ = K + 1 + ε.
pub fn prior_from_data(targets: &[Vec<f64>], epsilon: f64) -> Result<NormalWishartParams> {
    if targets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "prior needs N >= 2 targets, got {}",
            targets.len()
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let k = targets[0].len();
    let n = targets.len() as f64;
    let mut m0 = vec![0.0; k];
    for y in targets {
        check_dim(k, y.len())?;
        for (a, b) in m0.iter_mut().zip(y) {
            *a += b / n;
        }
    }
    let mut scatter = Matrix::zeros(k, k);
    for y in targets {
        let d: Vec<f64> = y.iter().zip(&m0).map(|(a, b)| a - b).collect();
        scatter = scatter.add(&Matrix::outer(&d, &d))?;
    }
    let scatter = scatter.scale(1.0 / n);
    let chol = cholesky(&scatter).or_else(|_| {
        log::warn!("target scatter is singular; adding {SCATTER_JITTER} to its diagonal");
        cholesky(&scatter.add(&Matrix::identity(k).scale(SCATTER_JITTER))?)
            .map_err(|e| Error::DegenerateScatter(e.to_string()))
    })?;
    let nu0 = k as f64 + 1.0 + epsilon;
    let l0 = chol.scale(nu0)?.inverse();
    NormalWishartParams::new(m0, l0, epsilon, nu0)
}

pub fn gaussian_nll(pred: &NormalParams, y: &[f64]) -> Result<f64> {
    Ok(-mvn_log_pdf(y, pred)?)
}

/// E_{NW(Ω)}[−ln N(y | μ, Λ)] in closed form.
pub fn expected_nll(omega: &NormalWishartParams, y: &[f64]) -> Result<f64> {
    let k = omega.dim();
    check_dim(k, y.len())?;
    let kf = k as f64;
    let d: Vec<f64> = y.iter().zip(&omega.m).map(|(a, b)| a - b).collect();
    Ok(0.5 * omega.nu * omega.l.quad_form(&d)? + kf / (2.0 * omega.kappa)
        - 0.5 * omega.l.logdet()
        - 0.5 * mvdigamma_unchecked(omega.nu / 2.0, k)
        + 0.5 * kf * PI.ln())
}

/// β·E_Ω[−ln N(y | μ, Λ)] + KL(Ω ‖ prior), dropping the parameter-free constant.
pub fn rkl_loss(omega: &NormalWishartParams, y: &[f64], beta: f64, prior: &NormalWishartParams) -> Result<f64> {
    let kl = kl_nw(omega, prior)?;
    if beta == 0.0 {
        check_dim(omega.dim(), y.len())?;
        return Ok(kl);
    }
    Ok(beta * expected_nll(omega, y)? + kl)
}

fn nw_outputs(model: &Mlp, x: &Matrix) -> Result<Vec<NormalWishartParams>> {
    model
        .predict(x)?
        .into_iter()
        .map(|o| match o {
            HeadOutput::NormalWishart(p) => Ok(p),
            _ => Err(Error::Config("multitask RKL needs a normal_wishart head".into())),
        })
        .collect()
}

/// Mean in-domain RKL (β = β̂) plus γ times mean out-of-domain RKL (β = 0).
pub fn multitask_rkl(
    model: &Mlp,
    in_x: &Matrix,
    in_y: &Matrix,
    ood_x: Option<&Matrix>,
    cfg: &PriorConfig,
) -> Result<f64> {
    check_dim(in_x.rows(), in_y.rows())?;
    if in_x.rows() == 0 {
        return Err(Error::InvalidArgument("empty in-domain batch".into()));
    }
    let omegas = nw_outputs(model, in_x)?;
    let mut loss = 0.0;
    for (i, o) in omegas.iter().enumerate() {
        loss += rkl_loss(o, in_y.row(i), cfg.beta_in, &cfg.omega0)?;
    }
    loss /= omegas.len() as f64;
    if cfg.gamma > 0.0 {
        let ood = ood_x
            .filter(|x| x.rows() > 0)
            .ok_or_else(|| Error::InvalidArgument("gamma > 0 needs a non-empty OOD batch".into()))?;
        let mut out = 0.0;
        for o in nw_outputs(model, ood)? {
            out += kl_nw(&o, &cfg.omega0)?;
        }
        loss += cfg.gamma * out / ood.rows() as f64;
    }
    Ok(loss)
}

/// (1/M) Σ_m KL(member_m ‖ student).
pub fn end_loss(student: &NormalParams, members: &[NormalParams]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("EnD needs at least one member".into()));
    }
    let mut s = 0.0;
    for m in members {
        s += kl_mvn(m, student)?;
    }
    Ok(s / members.len() as f64)
}

/// (1/M) Σ_m KL(member_m ‖ component_m), matched by index.
pub fn md_end_loss(components: &[NormalParams], members: &[NormalParams]) -> Result<f64> {
    check_dim(members.len(), components.len())?;
    if members.is_empty() {
        return Err(Error::InvalidArgument("MD-EnD needs at least one member".into()));
    }
    let mut s = 0.0;
    for (c, m) in components.iter().zip(members) {
        s += kl_mvn(m, c)?;
    }
    Ok(s / members.len() as f64)
}

/// Interpolates every member towards the ensemble mean and mean covariance
/// with weights 2/(T+1) and (T−1)/(T+1).
pub fn temperature_reduce(members: &[NormalParams], t: f64) -> Result<Vec<NormalParams>> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("temperature reduction needs members".into()));
    }
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::Domain(format!("temperature must be >= 1, got {t}")));
    }
    if t == 1.0 {
        return Ok(members.to_vec());
    }
    let k = members[0].dim();
    let mf = members.len() as f64;
    let mut mean = vec![0.0; k];
    let mut cov = Matrix::zeros(k, k);
    let covs: Vec<Matrix> = members.iter().map(|p| p.covariance().to_matrix()).collect();
    for (p, c) in members.iter().zip(&covs) {
        check_dim(k, p.dim())?;
        for (a, b) in mean.iter_mut().zip(&p.mean) {
            *a += b / mf;
        }
        cov = cov.add(&c.scale(1.0 / mf))?;
    }
    let w1 = 2.0 / (t + 1.0);
    let w2 = (t - 1.0) / (t + 1.0);
    members
        .iter()
        .zip(&covs)
        .map(|(p, c)| {
            let mu = p.mean.iter().zip(&mean).map(|(a, b)| w1 * a + w2 * b).collect();
            let sigma = cholesky(&c.scale(w1).add(&cov.scale(w2))?)?;
            NormalParams::new(mu, sigma.inverse())
        })
        .collect()
}

/// Ω with κ and ν multiplied by T.
pub fn temper(omega: &NormalWishartParams, t: f64) -> Result<NormalWishartParams> {
    NormalWishartParams::new(omega.m.clone(), omega.l.clone(), t * omega.kappa, t * omega.nu)
}

/// (1/(T·M)) Σ_m −ln NW(μ_T⁽ᵐ⁾, Λ_T⁽ᵐ⁾ | m, L, Tκ, Tν) over temperature-reduced members.
pub fn endd_loss(omega: &NormalWishartParams, members: &[NormalParams], t: f64) -> Result<f64> {
    let reduced = temperature_reduce(members, t)?;
    let tempered = temper(omega, t)?;
    let mut s = 0.0;
    for p in &reduced {
        check_dim(omega.dim(), p.dim())?;
        s -= nw_log_pdf(&p.mean, &p.precision, &tempered)?;
    }
    Ok(s / (t * members.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub t_initial: f64,
    pub hold_frac: f64,
    pub decay_frac: f64,
}

impl Default for AnnealSchedule {
    /// No annealing: T = 1 throughout.
    fn default() -> Self {
        Self {
            t_initial: 1.0,
            hold_frac: 0.0,
            decay_frac: 0.0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.t_initial >= 1.0)
            || !self.t_initial.is_finite()
            || !frac(self.hold_frac)
            || !frac(self.decay_frac)
            || self.hold_frac + self.decay_frac > 1.0
        {
            return Err(Error::InvalidArgument(format!("invalid anneal schedule {self:?}")));
        }
        Ok(())
    }
}

/// T held at `t_initial`, then linear down to 1, then 1.
pub fn anneal_temperature(schedule: &AnnealSchedule, epoch: usize, total_epochs: usize) -> Result<f64> {
    schedule.validate()?;
    if epoch >= total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside 0..{total_epochs}"
        )));
    }
    let total = total_epochs as f64;
    let e = epoch as f64;
    let hold_end = schedule.hold_frac * total;
    let decay_end = (schedule.hold_frac + schedule.decay_frac) * total;
    Ok(if e < hold_end {
        schedule.t_initial
    } else if e < decay_end {
        schedule.t_initial + (1.0 - schedule.t_initial) * (e - hold_end) / (decay_end - hold_end)
    } else {
        1.0
    })
}

/// Shorthand for a precision given as a covariance.
pub fn normal_from_covariance(mean: Vec<f64>, cov: &Matrix) -> Result<NormalParams> {
    NormalParams::new(mean, cholesky(cov)?.inverse())
}
