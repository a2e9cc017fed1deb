//! Fitting and querying every model family on in-memory matrices.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{DistillSpec, ModelKind, PriorSpec};
use super::seeds::{stream, Stream};
use crate::data::{rng_from_seed, ColumnStats};
use crate::distributions::{posterior_predictive, NormalParams, NormalWishartParams, StudentTParams};
use crate::error::{check_dim, Error, Result};
use crate::eval::{destandardize_normal, destandardize_t, predictive_nll, Posterior};
use crate::linalg::Matrix;
use crate::losses::graph::{self as lg, MemberBatch};
use crate::losses::{anneal_temperature, PriorConfig};
use crate::nn::graph::softplus_inverse;
use crate::nn::mlp::nw_from_raw;
use crate::nn::{
    adam_step, head_vars, train, AdamConfig, AdamState, Checkpoint, Graph, HeadKind, HeadOutput, HeadVars, Mlp,
    MlpConfig, TrainConfig,
};
use crate::uncertainty::{ensemble_measures_with, nw_measures, scalarize, Scalarization, UncertaintyReport};

/// Rows of `m` at `idx`.
pub fn take_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::from_vec(idx.len(), m.cols(), data).expect("row subset")
}

fn stack(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dim(a.cols(), b.cols())?;
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)
}

/// Everything needed to build and train one network.
#[derive(Clone, Debug)]
pub struct FitSpec {
    pub kind: ModelKind,
    pub hidden_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub prior: PriorSpec,
    pub distill: DistillSpec,
}

/// A trained model of any family.
#[derive(Clone, Debug, PartialEq)]
pub enum Trained {
    /// One Gaussian network (single, EnD) or several (ensemble).
    Gaussian(Vec<Mlp>),
    NormalWishart(Mlp),
    Mixture(Mlp),
}

/// Predictive distribution for one input, owned.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictive {
    Gaussian(NormalParams),
    StudentT(StudentTParams),
    Mixture(Vec<NormalParams>),
}

impl Predictive {
    pub fn as_posterior(&self) -> Posterior<'_> {
        match self {
            Predictive::Gaussian(p) => Posterior::Gaussian(p),
            Predictive::StudentT(p) => Posterior::StudentT(p),
            Predictive::Mixture(ps) => Posterior::Mixture(ps),
        }
    }

    pub fn destandardize(&self, stats: &ColumnStats) -> Result<Self> {
        Ok(match self {
            Predictive::Gaussian(p) => Predictive::Gaussian(destandardize_normal(p, stats)?),
            Predictive::StudentT(p) => Predictive::StudentT(destandardize_t(p, stats)?),
            Predictive::Mixture(ps) => Predictive::Mixture(
                ps.iter()
                    .map(|p| destandardize_normal(p, stats))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    pub fn nll(&self, y: &[f64]) -> Result<f64> {
        predictive_nll(self.as_posterior(), y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub report: UncertaintyReport,
    pub predictive: Predictive,
}

/// Measures of a lone Gaussian: no knowledge uncertainty at all.
pub fn gaussian_report(p: &NormalParams, mode: Scalarization) -> UncertaintyReport {
    let h = p.entropy();
    let cov = p.covariance();
    let k = p.dim();
    let zero = Matrix::zeros(k, k);
    UncertaintyReport {
        total_entropy: Some(h),
        expected_data_entropy: Some(h),
        mutual_information: Some(0.0),
        epkl: 0.0,
        total_variance: scalarize(&cov, mode),
        expected_data_variance: scalarize(&cov, mode),
        knowledge_variance: crate::uncertainty::scalarize_matrix(&zero, mode),
        scalarization: mode,
        squared_error: None,
    }
}

/// Gaussian predictions of every member: `out[b][m]`.
pub fn member_predictions(members: &[Mlp], x: &Matrix) -> Result<Vec<Vec<NormalParams>>> {
    let per_member = members.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::with_capacity(members.len()); x.rows()];
    for preds in per_member {
        for (row, p) in out.iter_mut().zip(preds) {
            match p {
                HeadOutput::Gaussian(p) => row.push(p),
                _ => return Err(Error::Config("teacher members must have gaussian heads".into())),
            }
        }
    }
    Ok(out)
}

impl Trained {
    pub fn members(&self) -> Vec<Mlp> {
        match self {
            Trained::Gaussian(ms) => ms.clone(),
            Trained::NormalWishart(m) | Trained::Mixture(m) => vec![m.clone()],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let first = ck
            .members
            .first()
            .ok_or_else(|| Error::Config("checkpoint holds no networks".into()))?;
        match first.config().head {
            HeadKind::Gaussian => Ok(Trained::Gaussian(ck.members.clone())),
            HeadKind::NormalWishart if ck.members.len() == 1 => Ok(Trained::NormalWishart(first.clone())),
            HeadKind::Mixture { .. } if ck.members.len() == 1 => Ok(Trained::Mixture(first.clone())),
            _ => Err(Error::Config(
                "checkpoint mixes heads or has several non-gaussian networks".into(),
            )),
        }
    }

    /// Predictions in the units the model was trained in.
    pub fn predict(&self, x: &Matrix, mode: Scalarization) -> Result<Vec<Prediction>> {
        match self {
            Trained::Gaussian(ms) if ms.len() == 1 => ms[0]
                .predict(x)?
                .into_iter()
                .map(|h| match h {
                    HeadOutput::Gaussian(p) => Ok(Prediction {
                        mean: p.mean.clone(),
                        report: gaussian_report(&p, mode),
                        predictive: Predictive::Gaussian(p),
                    }),
                    _ => Err(Error::Config("expected a gaussian head".into())),
                })
                .collect(),
            Trained::Gaussian(ms) => member_predictions(ms, x)?
                .into_iter()
                .map(|row| mixture_prediction(row, mode))
                .collect(),
            Trained::NormalWishart(m) => m
                .predict(x)?
                .into_iter()
                .map(|h| match h {
                    HeadOutput::NormalWishart(o) => Ok(Prediction {
                        mean: o.m.clone(),
                        report: nw_measures(&o, mode, None)?,
                        predictive: Predictive::StudentT(posterior_predictive(&o)?),
                    }),
                    _ => Err(Error::Config("expected a normal_wishart head".into())),
                })
                .collect(),
            Trained::Mixture(m) => m
                .predict(x)?
                .into_iter()
                .map(|h| match h {
                    HeadOutput::Mixture(c) if c.len() == 1 => Ok(Prediction {
                        mean: c[0].mean.clone(),
                        report: gaussian_report(&c[0], mode),
                        predictive: Predictive::Mixture(c),
                    }),
                    HeadOutput::Mixture(c) => mixture_prediction(c, mode),
                    _ => Err(Error::Config("expected a mixture head".into())),
                })
                .collect(),
        }
    }
}

fn mixture_prediction(components: Vec<NormalParams>, mode: Scalarization) -> Result<Prediction> {
    let report = ensemble_measures_with(&components, mode, None)?;
    Ok(Prediction {
        mean: crate::uncertainty::ensemble_mean(&components),
        report,
        predictive: Predictive::Mixture(components),
    })
}

fn new_model(spec: &FitSpec, input_dim: usize, output_dim: usize, head: HeadKind, seed: u64) -> Result<Mlp> {
    let config = MlpConfig {
        input_dim,
        hidden_sizes: spec.hidden_sizes.clone(),
        activation: Default::default(),
        head,
        output_dim,
    };
    Mlp::new(config, &mut rng_from_seed(stream(seed, Stream::Init)))
}

fn gaussian_head(h: HeadVars) -> Result<crate::nn::mlp::GaussianVars> {
    match h {
        HeadVars::Gaussian(q) => Ok(q),
        _ => Err(Error::Config("expected a gaussian head".into())),
    }
}

/// One network trained by Gaussian maximum likelihood.
pub fn fit_gaussian(spec: &FitSpec, x: &Matrix, y: &Matrix, seed: u64) -> Result<Mlp> {
    check_dim(x.rows(), y.rows())?;
    let mut model = new_model(spec, x.cols(), y.cols(), HeadKind::Gaussian, seed)?;
    let mut rng = rng_from_seed(stream(seed, Stream::Shuffle));
    train(&mut model, x.rows(), &spec.train, &mut rng, |g, m, idx, _| {
        let q = gaussian_head(m.graph_forward(g, &take_rows(x, idx))?)?;
        let per = lg::gaussian_nll(g, &q, &take_rows(y, idx))?;
        Ok(g.mean(per))
    })?;
    Ok(model)
}

/// Independently seeded members trained in parallel.
pub fn fit_ensemble(spec: &FitSpec, members: usize, x: &Matrix, y: &Matrix, seed: u64) -> Result<Vec<Mlp>> {
    (0..members)
        .into_par_iter()
        .map(|i| fit_gaussian(spec, x, y, stream(seed, Stream::Member(i as u64))))
        .collect()
}

/// Prior network trained with the multitask reverse-KL objective. Each
/// in-domain batch is paired with a random OOD batch of proportional size.
pub fn fit_nwpn(spec: &FitSpec, x: &Matrix, y: &Matrix, ood: &Matrix, seed: u64) -> Result<Mlp> {
    check_dim(x.rows(), y.rows())?;
    let targets: Vec<Vec<f64>> = (0..y.rows()).map(|i| y.row(i).to_vec()).collect();
    let p = spec.prior;
    let base = PriorConfig::from_targets(&targets, p.epsilon, p.beta_in, p.gamma)?;
    if p.gamma > 0.0 && ood.rows() == 0 {
        return Err(Error::InvalidArgument("gamma > 0 needs OOD training inputs".into()));
    }
    let mut model = new_model(spec, x.cols(), y.cols(), HeadKind::NormalWishart, seed)?;
    let mut rng = rng_from_seed(stream(seed, Stream::Shuffle));
    let mut ood_rng = rng_from_seed(stream(seed, Stream::OodBatch));
    let ratio = ood.rows() as f64 / x.rows() as f64;
    let warmup = p.gamma_warmup_epochs;
    train(&mut model, x.rows(), &spec.train, &mut rng, |g, m, idx, epoch| {
        let mut cfg = base.clone();
        if warmup > 0 {
            cfg.gamma *= ((epoch + 1) as f64 / warmup as f64).min(1.0);
        }
        let ood_batch = if cfg.gamma > 0.0 {
            let n = ((idx.len() as f64 * ratio).round() as usize).max(1);
            let pick: Vec<usize> = (0..n).map(|_| ood_rng.random_range(0..ood.rows())).collect();
            Some(take_rows(ood, &pick))
        } else {
            None
        };
        lg::multitask_rkl(g, m, &take_rows(x, idx), &take_rows(y, idx), ood_batch.as_ref(), &cfg)
    })?;
    Ok(model)
}

/// Student trained on an ensemble's predictions. Teacher outputs are
/// recomputed every epoch on the inputs plus, when `input_noise > 0`, a
/// freshly perturbed copy of them.
pub fn fit_distilled(spec: &FitSpec, teacher: &[Mlp], x: &Matrix, output_dim: usize, seed: u64) -> Result<Trained> {
    if teacher.len() < 2 {
        return Err(Error::Config(
            "distillation needs a teacher ensemble of at least 2 members".into(),
        ));
    }
    let head = spec.kind.head(teacher.len());
    let mut model = new_model(spec, x.cols(), output_dim, head, seed)?;
    let sigma = spec.distill.input_noise;
    let n = if sigma > 0.0 { 2 * x.rows() } else { x.rows() };
    let mut rng = rng_from_seed(stream(seed, Stream::Shuffle));
    let mut noise_rng = rng_from_seed(stream(seed, Stream::Noise));
    let mut cached: Option<(usize, Matrix, Vec<Vec<NormalParams>>)> = None;
    let epochs = spec.train.epochs;
    let kind = spec.kind;
    let anneal = spec.distill.anneal;
    train(&mut model, n, &spec.train, &mut rng, |g, m, idx, epoch| {
        if cached.as_ref().is_none_or(|c| c.0 != epoch) {
            let inputs = if sigma > 0.0 {
                let mut noisy = x.clone();
                for v in noisy.as_mut_slice() {
                    let e: f64 = noise_rng.sample(StandardNormal);
                    *v += sigma * e;
                }
                stack(x, &noisy)?
            } else {
                x.clone()
            };
            let preds = member_predictions(teacher, &inputs)?;
            cached = Some((epoch, inputs, preds));
        }
        let (_, inputs, preds) = cached.as_ref().expect("filled above");
        let xb = take_rows(inputs, idx);
        let rows: Vec<Vec<NormalParams>> = idx.iter().map(|&i| preds[i].clone()).collect();
        let per = match (kind, m.graph_forward(g, &xb)?) {
            (ModelKind::End, HeadVars::Gaussian(q)) => lg::end(g, &q, &MemberBatch::new(&rows)?)?,
            (ModelKind::MdEnd, HeadVars::Mixture(cs)) => lg::md_end(g, &cs, &MemberBatch::new(&rows)?)?,
            (ModelKind::Endd, HeadVars::NormalWishart(o)) => {
                let t = anneal_temperature(&anneal, epoch, epochs)?;
                lg::endd(g, &o, &MemberBatch::tempered(&rows, t)?, t)?
            }
            _ => return Err(Error::Config(format!("{} is not a distillation model", kind.name()))),
        };
        Ok(g.mean(per))
    })?;
    Ok(match head {
        HeadKind::Gaussian => Trained::Gaussian(vec![model]),
        HeadKind::NormalWishart => Trained::NormalWishart(model),
        HeadKind::Mixture { .. } => Trained::Mixture(model),
    })
}

/// Fits the configured family. `ood` feeds the prior network; `teacher`
/// the distillation families.
pub fn fit(
    spec: &FitSpec,
    x: &Matrix,
    y: &Matrix,
    ood: Option<&Matrix>,
    teacher: Option<&[Mlp]>,
    seed: u64,
) -> Result<Trained> {
    match spec.kind {
        ModelKind::Single => Ok(Trained::Gaussian(vec![fit_gaussian(spec, x, y, seed)?])),
        ModelKind::Ensemble { members } => Ok(Trained::Gaussian(fit_ensemble(spec, members, x, y, seed)?)),
        ModelKind::NwpnRkl => {
            let empty = Matrix::zeros(0, x.cols());
            Ok(Trained::NormalWishart(fit_nwpn(
                spec,
                x,
                y,
                ood.unwrap_or(&empty),
                seed,
            )?))
        }
        ModelKind::End | ModelKind::MdEnd | ModelKind::Endd => {
            let teacher = teacher.ok_or_else(|| Error::Config("distillation needs a teacher ensemble".into()))?;
            fit_distilled(spec, teacher, x, y.cols(), seed)
        }
    }
}

/// Fits one Normal-Wishart directly to a sample of Gaussians by
/// minimizing the EnD² loss with full-batch Adam: the distillation
/// objective with the network replaced by free parameters.
pub fn distill_constant(members: &[NormalParams], t: f64, steps: usize, lr: f64) -> Result<NormalWishartParams> {
    let k = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one member".into()))?
        .dim();
    let head = HeadKind::NormalWishart;
    let width = head.raw_dim(k);
    let mut raw = Matrix::zeros(1, width);
    let mean = crate::uncertainty::ensemble_mean(members);
    raw.as_mut_slice()[..k].copy_from_slice(&mean);
    raw[(0, width - 2)] = softplus_inverse(1.0);
    raw[(0, width - 1)] = softplus_inverse(1.0);
    let batch = MemberBatch::tempered(&[members.to_vec()], t)?;
    let shapes = [(1, width)];
    let mut params = vec![raw];
    let mut state = AdamState::new(&shapes);
    let adam = AdamConfig {
        lr,
        ..Default::default()
    };
    for step in 0..steps {
        let mut g = Graph::new();
        let r = g.param(0, params[0].clone());
        let HeadVars::NormalWishart(o) = head_vars(&mut g, r, head, k) else {
            unreachable!("normal_wishart head")
        };
        let loss = lg::endd(&mut g, &o, &batch, t)?;
        let loss = g.mean(loss);
        let value = g.scalar_value(loss);
        if !value.is_finite() {
            return Err(Error::Divergence {
                epoch: step,
                loss: value,
            });
        }
        g.backward(loss)?;
        adam_step(&mut params, &g.param_grads(&shapes), &mut state, &adam)?;
    }
    nw_from_raw(params[0].row(0), k)
}
