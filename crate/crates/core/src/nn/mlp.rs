//! Fully connected relu network with Gaussian, Normal-Wishart or mixture heads.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{softplus, softplus_inverse, Graph, Var};
use crate::distributions::{NormalParams, NormalWishartParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{packed_index, Matrix, SymPD};

/// Lower bound added to κ after softplus.
pub const KAPPA_MIN: f64 = 1e-3;
/// ν is kept above K + 1 + this margin.
pub const NU_MARGIN: f64 = 1e-2;
/// Lower bound added to every Cholesky diagonal entry after softplus.
pub const CHOL_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    Gaussian,
    NormalWishart,
    Mixture { components: usize },
}

impl HeadKind {
    /// Raw outputs needed for K-dimensional targets.
    pub fn raw_dim(&self, k: usize) -> usize {
        let tri = k * (k + 1) / 2;
        match self {
            HeadKind::Gaussian => k + tri,
            HeadKind::NormalWishart => k + tri + 2,
            HeadKind::Mixture { components } => components * (k + tri),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub head: HeadKind,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input_dim and output_dim must be positive".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config(
                "need at least one hidden layer, all of positive width".into(),
            ));
        }
        if let HeadKind::Mixture { components: 0 } = self.head {
            return Err(Error::Config("mixture head needs at least one component".into()));
        }
        Ok(())
    }

    pub fn raw_dim(&self) -> usize {
        self.head.raw_dim(self.output_dim)
    }

    /// (rows, cols) of every parameter: weight then bias for each layer.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_sizes);
        widths.push(self.raw_dim());
        widths.windows(2).flat_map(|w| [(w[0], w[1]), (1, w[1])]).collect()
    }
}

/// Distribution emitted for one input.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadOutput {
    Gaussian(NormalParams),
    NormalWishart(NormalWishartParams),
    Mixture(Vec<NormalParams>),
}

impl HeadOutput {
    pub fn mean(&self) -> Vec<f64> {
        match self {
            HeadOutput::Gaussian(p) => p.mean.clone(),
            HeadOutput::NormalWishart(o) => o.m.clone(),
            HeadOutput::Mixture(c) => crate::uncertainty::ensemble_mean(c),
        }
    }
}

fn chol_from_raw(raw: &[f64], k: usize) -> Result<SymPD> {
    let mut c = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..i {
            c[(i, j)] = raw[packed_index(i, j)];
        }
        c[(i, i)] = softplus(raw[packed_index(i, i)]) + CHOL_FLOOR;
    }
    SymPD::from_cholesky(c)
}

/// Gaussian head transform: mean, then packed Cholesky of the precision.
pub fn gaussian_from_raw(raw: &[f64], k: usize) -> Result<NormalParams> {
    check_dim(HeadKind::Gaussian.raw_dim(k), raw.len())?;
    NormalParams::new(raw[..k].to_vec(), chol_from_raw(&raw[k..], k)?)
}

/// Normal-Wishart head transform: m, packed Cholesky of L, κ, ν.
pub fn nw_from_raw(raw: &[f64], k: usize) -> Result<NormalWishartParams> {
    check_dim(HeadKind::NormalWishart.raw_dim(k), raw.len())?;
    let tri = k * (k + 1) / 2;
    let l = chol_from_raw(&raw[k..k + tri], k)?;
    let kappa = softplus(raw[k + tri]) + KAPPA_MIN;
    let nu = softplus(raw[k + tri + 1]) + k as f64 + 1.0 + NU_MARGIN;
    NormalWishartParams::new(raw[..k].to_vec(), l, kappa, nu)
}

pub fn mixture_from_raw(raw: &[f64], k: usize, components: usize) -> Result<Vec<NormalParams>> {
    check_dim(HeadKind::Mixture { components }.raw_dim(k), raw.len())?;
    raw.chunks(HeadKind::Gaussian.raw_dim(k))
        .map(|c| gaussian_from_raw(c, k))
        .collect()
}

pub fn head_from_raw(raw: &[f64], head: HeadKind, k: usize) -> Result<HeadOutput> {
    Ok(match head {
        HeadKind::Gaussian => HeadOutput::Gaussian(gaussian_from_raw(raw, k)?),
        HeadKind::NormalWishart => HeadOutput::NormalWishart(nw_from_raw(raw, k)?),
        HeadKind::Mixture { components } => HeadOutput::Mixture(mixture_from_raw(raw, k, components)?),
    })
}

/// Batched Gaussian parameters as B×1 columns; `chol` is packed lower
/// triangular with transformed diagonal.
#[derive(Clone, Debug)]
pub struct GaussianVars {
    pub mean: Vec<Var>,
    pub chol: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct NwVars {
    pub m: Vec<Var>,
    pub chol: Vec<Var>,
    pub kappa: Var,
    pub nu: Var,
}

#[derive(Clone, Debug)]
pub enum HeadVars {
    Gaussian(GaussianVars),
    NormalWishart(NwVars),
    Mixture(Vec<GaussianVars>),
}

fn chol_vars(g: &mut Graph, raw: Var, offset: usize, k: usize) -> Vec<Var> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in 0..=i {
            let c = g.column(raw, offset + packed_index(i, j));
            out.push(if i == j {
                let s = g.softplus(c);
                g.offset(s, CHOL_FLOOR)
            } else {
                c
            });
        }
    }
    out
}

fn gaussian_vars(g: &mut Graph, raw: Var, offset: usize, k: usize) -> GaussianVars {
    GaussianVars {
        mean: (0..k).map(|i| g.column(raw, offset + i)).collect(),
        chol: chol_vars(g, raw, offset + k, k),
    }
}

/// Graph version of the head transforms applied to a B×raw_dim node.
pub fn head_vars(g: &mut Graph, raw: Var, head: HeadKind, k: usize) -> HeadVars {
    assert_eq!(g.shape(raw).1, head.raw_dim(k), "raw head width");
    let tri = k * (k + 1) / 2;
    match head {
        HeadKind::Gaussian => HeadVars::Gaussian(gaussian_vars(g, raw, 0, k)),
        HeadKind::NormalWishart => {
            let m = (0..k).map(|i| g.column(raw, i)).collect();
            let chol = chol_vars(g, raw, k, k);
            let rk = g.column(raw, k + tri);
            let sk = g.softplus(rk);
            let kappa = g.offset(sk, KAPPA_MIN);
            let rn = g.column(raw, k + tri + 1);
            let sn = g.softplus(rn);
            let nu = g.offset(sn, k as f64 + 1.0 + NU_MARGIN);
            HeadVars::NormalWishart(NwVars { m, chol, kappa, nu })
        }
        HeadKind::Mixture { components } => HeadVars::Mixture(
            (0..components)
                .map(|c| gaussian_vars(g, raw, c * (k + tri), k))
                .collect(),
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    config: MlpConfig,
    params: Vec<Matrix>,
}

impl Mlp {
    /// He-initialized network: hidden weights N(0, 2/fan_in), output weights
    /// N(0, 1/fan_in), biases U(±1/√fan_in) except the κ and ν biases which
    /// start at softplus⁻¹(1).
    pub fn new<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        let n_layers = shapes.len() / 2;
        let mut params = Vec::with_capacity(shapes.len());
        for (l, pair) in shapes.chunks(2).enumerate() {
            let (fan_in, fan_out) = pair[0];
            let gain = if l + 1 == n_layers { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            params.push(Matrix::from_vec(fan_in, fan_out, w)?);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Matrix::from_vec(1, fan_out, b)?);
        }
        if config.head == HeadKind::NormalWishart {
            let k = config.output_dim;
            let tri = k * (k + 1) / 2;
            let bias = params.last_mut().expect("output bias");
            bias[(0, k + tri)] = softplus_inverse(1.0);
            bias[(0, k + tri + 1)] = softplus_inverse(1.0);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: MlpConfig, params: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        check_dim(shapes.len(), params.len())?;
        for (&(r, c), p) in shapes.iter().zip(&params) {
            check_dim(r, p.rows())?;
            check_dim(c, p.cols())?;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.config.param_shapes()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.as_slice().len()).sum()
    }

    /// Raw head outputs for a batch of inputs (rows).
    pub fn raw_forward(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.config.input_dim, x.cols())?;
        let mut h = x.clone();
        let n_layers = self.params.len() / 2;
        for l in 0..n_layers {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let mut z = h.matmul(w)?;
            let cols = z.cols();
            for (idx, v) in z.as_mut_slice().iter_mut().enumerate() {
                *v += b[(0, idx % cols)];
                if l + 1 < n_layers && *v <= 0.0 {
                    *v = 0.0;
                }
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<HeadOutput> {
        let raw = self.raw_forward(&Matrix::from_vec(1, x.len(), x.to_vec())?)?;
        head_from_raw(raw.row(0), self.config.head, self.config.output_dim)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<HeadOutput>> {
        let raw = self.raw_forward(x)?;
        (0..raw.rows())
            .map(|i| head_from_raw(raw.row(i), self.config.head, self.config.output_dim))
            .collect()
    }

    /// Records the network on `g` and returns the raw B×raw_dim output node.
    pub fn graph_raw(&self, g: &mut Graph, x: &Matrix) -> Result<Var> {
        check_dim(self.config.input_dim, x.cols())?;
        let mut h = g.leaf(x.clone());
        let n_layers = self.params.len() / 2;
        for l in 0..n_layers {
            let w = g.param(2 * l, self.params[2 * l].clone());
            let b = g.param(2 * l + 1, self.params[2 * l + 1].clone());
            let z = g.matmul(h, w);
            let z = g.add(z, b);
            h = if l + 1 < n_layers { g.relu(z) } else { z };
        }
        Ok(h)
    }

    pub fn graph_forward(&self, g: &mut Graph, x: &Matrix) -> Result<HeadVars> {
        let raw = self.graph_raw(g, x)?;
        Ok(head_vars(g, raw, self.config.head, self.config.output_dim))
    }
}
