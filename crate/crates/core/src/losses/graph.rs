//! Batched losses recorded on an autodiff graph.
//!
//! Distribution parameters arrive as B×1 columns (see [`HeadVars`]); member
//! constants are B×M matrices so that one node carries a quantity for every
//! (example, member) pair. Unless stated otherwise every function returns
//! the B×1 column of per-example losses.

use std::f64::consts::{LN_2, PI};

use crate::distributions::{NormalParams, NormalWishartParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{packed_index, Matrix};
use crate::nn::mlp::{GaussianVars, HeadVars, NwVars};
use crate::nn::{Graph, Mlp, Var};
use crate::special::ln_mvgamma_unchecked;

use super::{temperature_reduce, PriorConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-example ensemble predictions laid out for broadcasting: each entry
/// is a B×M matrix (row = example, column = member). Symmetric matrices
/// are stored as packed lower triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberBatch {
    k: usize,
    mean: Vec<Matrix>,
    cov: Vec<Matrix>,
    prec: Vec<Matrix>,
    logdet_prec: Matrix,
}

impl MemberBatch {
    /// `members[b][m]` is member m's prediction for example b.
    pub fn new(members: &[Vec<NormalParams>]) -> Result<Self> {
        let b = members.len();
        let first = members
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| Error::InvalidArgument("member batch needs examples and members".into()))?;
        let k = first.dim();
        let m = members[0].len();
        let tri = k * (k + 1) / 2;
        let mut out = Self {
            k,
            mean: vec![Matrix::zeros(b, m); k],
            cov: vec![Matrix::zeros(b, m); tri],
            prec: vec![Matrix::zeros(b, m); tri],
            logdet_prec: Matrix::zeros(b, m),
        };
        for (i, row) in members.iter().enumerate() {
            check_dim(m, row.len())?;
            for (j, p) in row.iter().enumerate() {
                check_dim(k, p.dim())?;
                for (a, v) in p.mean.iter().enumerate() {
                    out.mean[a][(i, j)] = *v;
                }
                for (e, v) in p.covariance().packed().into_iter().enumerate() {
                    out.cov[e][(i, j)] = v;
                }
                for (e, v) in p.precision.packed().into_iter().enumerate() {
                    out.prec[e][(i, j)] = v;
                }
                out.logdet_prec[(i, j)] = p.precision.logdet();
            }
        }
        Ok(out)
    }

    /// Members passed through the temperature reduction first.
    pub fn tempered(members: &[Vec<NormalParams>], t: f64) -> Result<Self> {
        let reduced = members
            .iter()
            .map(|row| temperature_reduce(row, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&reduced)
    }

    pub fn rows(&self) -> usize {
        self.logdet_prec.rows()
    }

    pub fn members(&self) -> usize {
        self.logdet_prec.cols()
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Member `j` alone, as a B×1 batch.
    pub fn member(&self, j: usize) -> Self {
        let col = |m: &Matrix| Matrix::from_vec(m.rows(), 1, m.column(j)).expect("column");
        Self {
            k: self.k,
            mean: self.mean.iter().map(col).collect(),
            cov: self.cov.iter().map(col).collect(),
            prec: self.prec.iter().map(col).collect(),
            logdet_prec: col(&self.logdet_prec),
        }
    }
}

fn leaves(g: &mut Graph, ms: &[Matrix]) -> Vec<Var> {
    ms.iter().map(|m| g.leaf(m.clone())).collect()
}

fn column_leaf(g: &mut Graph, y: &Matrix, j: usize) -> Var {
    g.leaf(Matrix::from_vec(y.rows(), 1, y.column(j)).expect("column"))
}

fn sum_vars(g: &mut Graph, vs: &[Var]) -> Var {
    let mut acc = vs[0];
    for v in &vs[1..] {
        acc = g.add(acc, *v);
    }
    acc
}

/// Σ_i ln c_ii, i.e. half the log-determinant of C Cᵀ.
fn half_logdet(g: &mut Graph, chol: &[Var], k: usize) -> Var {
    let logs: Vec<Var> = (0..k).map(|i| g.ln(chol[packed_index(i, i)])).collect();
    sum_vars(g, &logs)
}

/// dᵀ C Cᵀ d = ‖Cᵀ d‖².
fn chol_quad(g: &mut Graph, chol: &[Var], d: &[Var], k: usize) -> Var {
    let mut terms = Vec::with_capacity(k);
    for j in 0..k {
        let prods: Vec<Var> = (j..k).map(|i| g.mul(chol[packed_index(i, j)], d[i])).collect();
        let s = sum_vars(g, &prods);
        terms.push(g.square(s));
    }
    sum_vars(g, &terms)
}

/// Packed entries of C Cᵀ.
fn gram(g: &mut Graph, chol: &[Var], k: usize) -> Vec<Var> {
    let mut out = Vec::with_capacity(chol.len());
    for i in 0..k {
        for j in 0..=i {
            let prods: Vec<Var> = (0..=j)
                .map(|t| g.mul(chol[packed_index(i, t)], chol[packed_index(j, t)]))
                .collect();
            out.push(sum_vars(g, &prods));
        }
    }
    out
}

/// Packed entries of (C Cᵀ)⁻¹ = Dᵀ D with D = C⁻¹ by forward substitution.
fn inverse_gram(g: &mut Graph, chol: &[Var], k: usize) -> Vec<Var> {
    let mut d: Vec<Option<Var>> = vec![None; k * k];
    let one = g.scalar(1.0);
    for j in 0..k {
        d[j * k + j] = Some(g.div(one, chol[packed_index(j, j)]));
        for i in j + 1..k {
            let prods: Vec<Var> = (j..i)
                .map(|t| g.mul(chol[packed_index(i, t)], d[t * k + j].expect("filled")))
                .collect();
            let s = sum_vars(g, &prods);
            let q = g.div(s, chol[packed_index(i, i)]);
            d[i * k + j] = Some(g.neg(q));
        }
    }
    let mut out = Vec::with_capacity(chol.len());
    for a in 0..k {
        for b in 0..=a {
            let prods: Vec<Var> = (a..k)
                .map(|t| g.mul(d[t * k + a].expect("filled"), d[t * k + b].expect("filled")))
                .collect();
            out.push(sum_vars(g, &prods));
        }
    }
    out
}

/// Σ_ij A_ij B_ij for packed symmetric A, B.
fn sym_contract(g: &mut Graph, a: &[Var], b: &[Var], k: usize) -> Var {
    let mut terms = Vec::with_capacity(a.len());
    for i in 0..k {
        for j in 0..=i {
            let p = packed_index(i, j);
            let t = g.mul(a[p], b[p]);
            terms.push(if i == j { t } else { g.scale(t, 2.0) });
        }
    }
    sum_vars(g, &terms)
}

/// dᵀ S d for packed symmetric S.
fn sym_quad(g: &mut Graph, s: &[Var], d: &[Var], k: usize) -> Var {
    let mut terms = Vec::with_capacity(s.len());
    for i in 0..k {
        for j in 0..=i {
            let dd = g.mul(d[i], d[j]);
            let t = g.mul(s[packed_index(i, j)], dd);
            terms.push(if i == j { t } else { g.scale(t, 2.0) });
        }
    }
    sum_vars(g, &terms)
}

/// ψ_K(a) = Σ_j ψ(a − j/2).
fn mvdigamma(g: &mut Graph, a: Var, k: usize) -> Var {
    let terms: Vec<Var> = (0..k)
        .map(|j| {
            let s = g.offset(a, -(j as f64) / 2.0);
            g.digamma(s)
        })
        .collect();
    sum_vars(g, &terms)
}

fn ln_mvgamma(g: &mut Graph, a: Var, k: usize) -> Var {
    let kf = k as f64;
    let terms: Vec<Var> = (0..k)
        .map(|j| {
            let s = g.offset(a, -(j as f64) / 2.0);
            g.lgamma(s)
        })
        .collect();
    let s = sum_vars(g, &terms);
    g.offset(s, kf * (kf - 1.0) / 4.0 * PI.ln())
}

fn check_batch(g: &Graph, v: Var, y: &Matrix, k: usize) -> Result<()> {
    check_dim(g.shape(v).0, y.rows())?;
    check_dim(k, y.cols())
}

/// −ln N(y | μ, Λ) per example.
pub fn gaussian_nll(g: &mut Graph, q: &GaussianVars, y: &Matrix) -> Result<Var> {
    let k = q.mean.len();
    check_batch(g, q.mean[0], y, k)?;
    let d: Vec<Var> = (0..k)
        .map(|i| {
            let yi = column_leaf(g, y, i);
            g.sub(yi, q.mean[i])
        })
        .collect();
    let quad = chol_quad(g, &q.chol, &d, k);
    let hl = half_logdet(g, &q.chol, k);
    let half_quad = g.scale(quad, 0.5);
    let s = g.sub(half_quad, hl);
    Ok(g.offset(s, 0.5 * k as f64 * LN_2PI))
}

/// E_{NW(Ω)}[−ln N(y | μ, Λ)] per example.
pub fn expected_nll(g: &mut Graph, o: &NwVars, y: &Matrix) -> Result<Var> {
    let k = o.m.len();
    let kf = k as f64;
    check_batch(g, o.m[0], y, k)?;
    let d: Vec<Var> = (0..k)
        .map(|i| {
            let yi = column_leaf(g, y, i);
            g.sub(yi, o.m[i])
        })
        .collect();
    let quad = chol_quad(g, &o.chol, &d, k);
    let nu_quad = g.mul(o.nu, quad);
    let t1 = g.scale(nu_quad, 0.5);
    let half_k = g.scalar(kf / 2.0);
    let t2 = g.div(half_k, o.kappa);
    let hl = half_logdet(g, &o.chol, k);
    let half_nu = g.scale(o.nu, 0.5);
    let psi = mvdigamma(g, half_nu, k);
    let half_psi = g.scale(psi, 0.5);
    let s = g.add(t1, t2);
    let s = g.sub(s, hl);
    let s = g.sub(s, half_psi);
    Ok(g.offset(s, 0.5 * kf * PI.ln()))
}

/// KL(Ω ‖ prior) per example, prior constant.
pub fn kl_nw(g: &mut Graph, o: &NwVars, prior: &NormalWishartParams) -> Result<Var> {
    let k = o.m.len();
    check_dim(k, prior.dim())?;
    let kf = k as f64;
    let (kappa0, nu0) = (prior.kappa, prior.nu);
    // mean part: ½ κ₀ ν (m − m₀)ᵀ L (m − m₀) + K/2 (r − ln r − 1), r = κ₀/κ
    let d: Vec<Var> = (0..k).map(|i| g.offset(o.m[i], -prior.m[i])).collect();
    let quad = chol_quad(g, &o.chol, &d, k);
    let nu_quad = g.mul(o.nu, quad);
    let mean_quad = g.scale(nu_quad, 0.5 * kappa0);
    let k0 = g.scalar(kappa0);
    let r = g.div(k0, o.kappa);
    let ln_r = g.ln(r);
    let r_term = g.sub(r, ln_r);
    let r_term = g.offset(r_term, -1.0);
    let r_term = g.scale(r_term, kf / 2.0);
    // Wishart part
    let q: Vec<Var> = prior.l.inverse().packed().into_iter().map(|v| g.scalar(v)).collect();
    let l_entries = gram(g, &o.chol, k);
    let tr = sym_contract(g, &q, &l_entries, k);
    let tr = g.offset(tr, -kf);
    let nu_tr = g.mul(o.nu, tr);
    let w1 = g.scale(nu_tr, 0.5);
    let hl = half_logdet(g, &o.chol, k);
    let ln_ratio = g.offset(hl, -0.5 * prior.l.logdet());
    let w2 = g.scale(ln_ratio, -nu0);
    let half_nu = g.scale(o.nu, 0.5);
    let lmg = ln_mvgamma(g, half_nu, k);
    let psi = mvdigamma(g, half_nu, k);
    let nu_diff = g.offset(o.nu, -nu0);
    let nu_psi = g.mul(nu_diff, psi);
    let w4 = g.scale(nu_psi, 0.5);
    let s = g.add(mean_quad, r_term);
    let s = g.add(s, w1);
    let s = g.add(s, w2);
    let s = g.sub(s, lmg);
    let s = g.add(s, w4);
    Ok(g.offset(s, ln_mvgamma_unchecked(nu0 / 2.0, k)))
}

/// β·E[−ln N(y | μ, Λ)] + KL(Ω ‖ prior) per example.
pub fn rkl(g: &mut Graph, o: &NwVars, y: &Matrix, beta: f64, prior: &NormalWishartParams) -> Result<Var> {
    let kl = kl_nw(g, o, prior)?;
    if beta == 0.0 {
        check_batch(g, o.m[0], y, o.m.len())?;
        return Ok(kl);
    }
    let e = expected_nll(g, o, y)?;
    let e = g.scale(e, beta);
    Ok(g.add(e, kl))
}

fn nw_vars(h: HeadVars) -> Result<NwVars> {
    match h {
        HeadVars::NormalWishart(o) => Ok(o),
        _ => Err(Error::Config("this loss needs a normal_wishart head".into())),
    }
}

/// Scalar multitask objective: mean in-domain RKL plus γ times mean OOD KL.
pub fn multitask_rkl(
    g: &mut Graph,
    model: &Mlp,
    in_x: &Matrix,
    in_y: &Matrix,
    ood_x: Option<&Matrix>,
    cfg: &PriorConfig,
) -> Result<Var> {
    check_dim(in_x.rows(), in_y.rows())?;
    if in_x.rows() == 0 {
        return Err(Error::InvalidArgument("empty in-domain batch".into()));
    }
    let o = nw_vars(model.graph_forward(g, in_x)?)?;
    let per = rkl(g, &o, in_y, cfg.beta_in, &cfg.omega0)?;
    let loss = g.mean(per);
    if cfg.gamma == 0.0 {
        return Ok(loss);
    }
    let ood = ood_x
        .filter(|x| x.rows() > 0)
        .ok_or_else(|| Error::InvalidArgument("gamma > 0 needs a non-empty OOD batch".into()))?;
    let oo = nw_vars(model.graph_forward(g, ood)?)?;
    let out = kl_nw(g, &oo, &cfg.omega0)?;
    let out = g.mean(out);
    let out = g.scale(out, cfg.gamma);
    Ok(g.add(loss, out))
}

/// KL(member ‖ q) for every (example, member) pair: a B×M node.
fn kl_members_to(g: &mut Graph, q: &GaussianVars, batch: &MemberBatch) -> Result<Var> {
    let k = q.mean.len();
    check_dim(batch.dim(), k)?;
    check_dim(batch.rows(), g.shape(q.mean[0]).0)?;
    let kf = k as f64;
    let cov = leaves(g, &batch.cov);
    let lam = gram(g, &q.chol, k);
    let tr = sym_contract(g, &lam, &cov, k);
    let d: Vec<Var> = (0..k)
        .map(|i| {
            let mu = g.leaf(batch.mean[i].clone());
            g.sub(mu, q.mean[i])
        })
        .collect();
    let quad = chol_quad(g, &q.chol, &d, k);
    let hl = half_logdet(g, &q.chol, k);
    let two_hl = g.scale(hl, 2.0);
    let ldp = g.leaf(batch.logdet_prec.clone());
    let s = g.add(tr, quad);
    let s = g.sub(s, two_hl);
    let s = g.add(s, ldp);
    let s = g.offset(s, -kf);
    Ok(g.scale(s, 0.5))
}

/// (1/M) Σ_m KL(member_m ‖ student) per example.
pub fn end(g: &mut Graph, student: &GaussianVars, batch: &MemberBatch) -> Result<Var> {
    let kl = kl_members_to(g, student, batch)?;
    let s = g.sum_cols(kl);
    Ok(g.scale(s, 1.0 / batch.members() as f64))
}

/// (1/M) Σ_m KL(member_m ‖ component_m) per example.
pub fn md_end(g: &mut Graph, components: &[GaussianVars], batch: &MemberBatch) -> Result<Var> {
    check_dim(batch.members(), components.len())?;
    let parts = components
        .iter()
        .enumerate()
        .map(|(j, c)| kl_members_to(g, c, &batch.member(j)))
        .collect::<Result<Vec<_>>>()?;
    let s = sum_vars(g, &parts);
    Ok(g.scale(s, 1.0 / batch.members() as f64))
}

/// (1/(T·M)) Σ_m −ln NW(μ_m, Λ_m | m, L, Tκ, Tν) per example. `batch` must
/// already hold temperature-reduced members (see [`MemberBatch::tempered`]).
pub fn endd(g: &mut Graph, o: &NwVars, batch: &MemberBatch, t: f64) -> Result<Var> {
    let k = o.m.len();
    check_dim(batch.dim(), k)?;
    check_dim(batch.rows(), g.shape(o.m[0]).0)?;
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("temperature must be >= 1, got {t}")));
    }
    let kf = k as f64;
    let kappa = g.scale(o.kappa, t);
    let nu = g.scale(o.nu, t);
    let prec = leaves(g, &batch.prec);
    let ldp = g.leaf(batch.logdet_prec.clone());
    // Gaussian part: ½K ln κ̃ + ½ ln|Λ| − ½K ln 2π − ½ κ̃ (μ − m)ᵀ Λ (μ − m)
    let d: Vec<Var> = (0..k)
        .map(|i| {
            let mu = g.leaf(batch.mean[i].clone());
            g.sub(mu, o.m[i])
        })
        .collect();
    let quad = sym_quad(g, &prec, &d, k);
    let kq = g.mul(kappa, quad);
    let ln_kappa = g.ln(kappa);
    let a = g.scale(ln_kappa, kf / 2.0);
    let b = g.scale(kq, -0.5);
    let gauss = g.add(a, b);
    // Wishart part: ½(ν̃ − K − 1) ln|Λ| − ½ tr(L⁻¹Λ) − ½ν̃K ln 2 − ½ν̃ ln|L| − ln Γ_K(ν̃/2)
    let nu_shift = g.offset(nu, -kf - 1.0);
    let c = g.mul(nu_shift, ldp);
    let c = g.scale(c, 0.5);
    let linv = inverse_gram(g, &o.chol, k);
    let tr = sym_contract(g, &linv, &prec, k);
    let tr = g.scale(tr, -0.5);
    let nu_ln2 = g.scale(nu, -0.5 * kf * LN_2);
    let hl = half_logdet(g, &o.chol, k);
    let nu_ll = g.mul(nu, hl);
    let nu_ll = g.neg(nu_ll);
    let half_nu = g.scale(nu, 0.5);
    let lmg = ln_mvgamma(g, half_nu, k);
    let s = g.add(gauss, c);
    let s = g.add(s, tr);
    let s = g.add(s, nu_ln2);
    let s = g.add(s, nu_ll);
    let s = g.sub(s, lmg);
    let half_ldp = g.scale(ldp, 0.5);
    let s = g.add(s, half_ldp);
    let log_pdf = g.offset(s, -0.5 * kf * LN_2PI);
    let total = g.sum_cols(log_pdf);
    Ok(g.scale(total, -1.0 / (t * batch.members() as f64)))
}
