//! Datasets: the synthetic 1-D benchmark, factor-analysis OOD sampling,
//! CSV ingestion, standardization, k-fold splits and input noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, Matrix};

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-8;
/// Lower bound on factor-analysis noise variances.
pub const PSI_FLOOR: f64 = 1e-6;

pub const SYNTH_RANGE: (f64, f64) = (-10.0, 10.0);
pub const SYNTH_OOD_RANGES: [(f64, f64); 2] = [(-25.0, -20.0), (20.0, 25.0)];

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Population mean and standard deviation of every column, std floored.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() == 0 {
            return Err(Error::InvalidArgument("statistics of an empty matrix".into()));
        }
        let n = m.rows() as f64;
        let mut mean = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (a, b) in mean.iter_mut().zip(m.row(i)) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n);
        let mut var = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (j, v) in var.iter_mut().enumerate() {
                *v += (m[(i, j)] - mean[j]).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        check_dim(self.mean.len(), m.cols())?;
        let mut out = m.clone();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out[(i, j)] = (m[(i, j)] - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        check_dim(self.mean.len(), m.cols())?;
        let mut out = m.clone();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out[(i, j)] = m[(i, j)] * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Option<Matrix>,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub feature_stats: Option<ColumnStats>,
    #[serde(default)]
    pub target_stats: Option<ColumnStats>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Option<Matrix>, provenance: impl Into<String>) -> Result<Self> {
        if let Some(t) = &targets {
            check_dim(inputs.rows(), t.rows())?;
        }
        for (i, v) in inputs
            .as_slice()
            .iter()
            .chain(targets.iter().flat_map(|t| t.as_slice()))
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value at flat index {i}")));
            }
        }
        Ok(Self {
            inputs,
            targets,
            feature_names: Vec::new(),
            feature_stats: None,
            target_stats: None,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn targets(&self) -> Result<&Matrix> {
        self.targets
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("dataset '{}' has no targets", self.provenance)))
    }

    /// Targets as one vector per row.
    pub fn target_rows(&self) -> Result<Vec<Vec<f64>>> {
        let t = self.targets()?;
        Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), m.cols(), data).expect("subset shape")
        };
        Self {
            inputs: pick(&self.inputs),
            targets: self.targets.as_ref().map(pick),
            feature_names: self.feature_names.clone(),
            feature_stats: self.feature_stats.clone(),
            target_stats: self.target_stats.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn synth_mean(x: f64) -> f64 {
    x.sin() + x / 10.0
}

pub fn synth_variance(x: f64) -> f64 {
    1.0 / (x.abs() + 1.0) + 0.01
}

/// x ~ U[−10, 10], y ~ N(sin x + x/10, 1/(|x|+1) + 0.01).
pub fn synth_generate(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(SYNTH_RANGE.0..=SYNTH_RANGE.1);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(synth_mean(x) + synth_variance(x).sqrt() * e);
    }
    Dataset::new(
        Matrix::from_vec(n, 1, xs)?,
        Some(Matrix::from_vec(n, 1, ys)?),
        "synthetic",
    )
}

/// Inputs uniform on [−25, −20] ∪ [20, 25], each interval equally likely.
pub fn synth_ood(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let xs = (0..n)
        .map(|_| {
            let (lo, hi) = SYNTH_OOD_RANGES[rng.random_range(0..2)];
            rng.random_range(lo..=hi)
        })
        .collect();
    Dataset::new(Matrix::from_vec(n, 1, xs)?, None, "synthetic-ood")
}

/// x ~ N(μ, W Wᵀ + diag Ψ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorAnalysisModel {
    pub w: Matrix,
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
}

impl FactorAnalysisModel {
    pub fn covariance(&self) -> Matrix {
        let mut c = self.w.matmul(&self.w.transpose()).expect("square");
        for (i, p) in self.psi.iter().enumerate() {
            c[(i, i)] += p;
        }
        c
    }

    /// Mean Gaussian log-likelihood per row of `x`.
    pub fn log_likelihood(&self, x: &Matrix) -> Result<f64> {
        let d = self.mu.len();
        check_dim(d, x.cols())?;
        let sigma = cholesky(&self.covariance())?;
        let mut s = 0.0;
        for i in 0..x.rows() {
            let r: Vec<f64> = x.row(i).iter().zip(&self.mu).map(|(a, b)| a - b).collect();
            s += sigma.inv_quad_form(&r)?;
        }
        let n = x.rows() as f64;
        Ok(-0.5 * (d as f64 * (2.0 * PI).ln() + sigma.logdet() + s / n))
    }
}

/// Default latent dimensionality: min(D − 1, 5), at least 1.
pub fn fa_default_latent(d: usize) -> usize {
    d.saturating_sub(1).clamp(1, 5)
}

fn sym_inverse(m: &Matrix) -> Result<Matrix> {
    Ok(cholesky(m)?.inverse().to_matrix())
}

/// EM for factor analysis. Returns the model and the mean log-likelihood
/// before every iteration plus the final one.
pub fn fa_fit_traced(
    x: &Matrix,
    d: usize,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<(FactorAnalysisModel, Vec<f64>)> {
    let (n, dim) = (x.rows(), x.cols());
    if d == 0 || d > dim {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {d} must lie in 1..={dim}"
        )));
    }
    if n <= dim {
        return Err(Error::InvalidArgument(format!(
            "factor analysis needs N > D, got N={n}, D={dim}"
        )));
    }
    let stats = ColumnStats::from_matrix(x)?;
    let mu = stats.mean.clone();
    let mut s = Matrix::zeros(dim, dim);
    for i in 0..n {
        let r: Vec<f64> = x.row(i).iter().zip(&mu).map(|(a, b)| a - b).collect();
        s = s.add(&Matrix::outer(&r, &r))?;
    }
    let s = s.scale(1.0 / n as f64);
    let mut rng = rng_from_seed(seed);
    let init = Normal::new(0.0, 0.1).expect("finite");
    let mut w = Matrix::zeros(dim, d);
    for i in 0..dim {
        for j in 0..d {
            w[(i, j)] = init.sample(&mut rng) * stats.std[i];
        }
    }
    let mut psi: Vec<f64> = (0..dim).map(|i| s[(i, i)].max(PSI_FLOOR)).collect();
    let mut model = FactorAnalysisModel {
        w,
        mu,
        psi: psi.clone(),
    };
    let mut trace = vec![model.log_likelihood(x)?];
    for _ in 0..iters {
        let sigma_inv = sym_inverse(&model.covariance())?;
        let beta = model.w.transpose().matmul(&sigma_inv)?;
        let bs = beta.matmul(&s)?;
        let a = Matrix::identity(d)
            .sub(&beta.matmul(&model.w)?)?
            .add(&bs.matmul(&beta.transpose())?)?;
        let w_new = s.matmul(&beta.transpose())?.matmul(&sym_inverse(&a)?)?;
        let wbs = w_new.matmul(&bs)?;
        for (i, p) in psi.iter_mut().enumerate() {
            *p = (s[(i, i)] - wbs[(i, i)]).max(PSI_FLOOR);
        }
        model.w = w_new;
        model.psi = psi.clone();
        let ll = model.log_likelihood(x)?;
        let prev = *trace.last().expect("non-empty");
        trace.push(ll);
        if (ll - prev).abs() <= tol * prev.abs().max(1.0) {
            break;
        }
    }
    Ok((model, trace))
}

pub fn fa_fit(x: &Matrix, d: usize, iters: usize, seed: u64) -> Result<FactorAnalysisModel> {
    Ok(fa_fit_traced(x, d, iters, 1e-6, seed)?.0)
}

/// n draws from N(μ, scale · (W Wᵀ + Ψ)).
pub fn fa_sample_ood(model: &FactorAnalysisModel, n: usize, scale: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and scale > 0, got {n} and {scale}"
        )));
    }
    let (dim, d) = (model.w.rows(), model.w.cols());
    let mut rng = rng_from_seed(seed);
    let root = scale.sqrt();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let wz = model.w.matvec(&z)?;
        for i in 0..dim {
            let e: f64 = rng.sample(StandardNormal);
            data.push(model.mu[i] + root * (wz[i] + model.psi[i].sqrt() * e));
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, None, "fa-ood")
}

/// How a delimited file is read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Target column name (with a header) or zero-based index; `None` for inputs only.
    #[serde(default)]
    pub target_column: Option<String>,
    #[serde(default)]
    pub drop_constant: bool,
    /// Keep only the first this many feature columns.
    #[serde(default)]
    pub max_columns: Option<usize>,
    /// Keep only the first this many rows.
    #[serde(default)]
    pub max_rows: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            has_header: true,
            target_column: None,
            drop_constant: false,
            max_columns: None,
            max_rows: None,
        }
    }
}

/// Reads a comma-separated numeric file. Row numbers in errors are 1-based
/// data rows; column numbers are 1-based.
pub fn csv_ingest(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = if schema.has_header {
        reader.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        if schema.max_rows.is_some_and(|m| rows.len() >= m) {
            break;
        }
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: c + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    column: c + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let width = rows.first().map_or(header.len(), Vec::len);
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    let names: Vec<String> = if header.is_empty() {
        (0..width).map(|j| format!("col{j}")).collect()
    } else {
        header
    };
    let target = match &schema.target_column {
        None => None,
        Some(t) => Some(
            names
                .iter()
                .position(|n| n == t)
                .or_else(|| t.parse::<usize>().ok().filter(|&j| j < width))
                .ok_or_else(|| Error::Config(format!("target column '{t}' not found in {}", path.display())))?,
        ),
    };
    let mut features: Vec<usize> = (0..width).filter(|&j| Some(j) != target).collect();
    if schema.drop_constant {
        features.retain(|&j| rows.iter().any(|r| r[j] != rows[0][j]));
    }
    if let Some(m) = schema.max_columns {
        features.truncate(m);
    }
    let n = rows.len();
    let mut x = Vec::with_capacity(n * features.len());
    for r in &rows {
        x.extend(features.iter().map(|&j| r[j]));
    }
    let y = target
        .map(|t| Matrix::from_vec(n, 1, rows.iter().map(|r| r[t]).collect()))
        .transpose()?;
    let mut ds = Dataset::new(Matrix::from_vec(n, features.len(), x)?, y, path.display().to_string())?;
    ds.feature_names = features.iter().map(|&j| names[j].clone()).collect();
    Ok(ds)
}

/// Writes features then (if present) a `target` column, with a header.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = if ds.feature_names.len() == ds.input_dim() {
        ds.feature_names.clone()
    } else {
        (0..ds.input_dim()).map(|j| format!("x{j}")).collect()
    };
    if ds.targets.is_some() {
        header.push("target".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.inputs.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(t) = &ds.targets {
            rec.extend(t.row(i).iter().map(|v| format!("{v:?}")));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Standardizes `train` with its own statistics and every other set with
/// the same statistics. Targets are standardized too when requested and
/// present; their statistics are kept for de-standardizing.
pub fn standardize(train: &Dataset, others: &[Dataset], targets: bool) -> Result<(Dataset, Vec<Dataset>)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot standardize an empty training set".into(),
        ));
    }
    let fs = ColumnStats::from_matrix(&train.inputs)?;
    let ts = match (&train.targets, targets) {
        (Some(t), true) => Some(ColumnStats::from_matrix(t)?),
        _ => None,
    };
    let apply = |d: &Dataset| -> Result<Dataset> {
        let mut out = d.clone();
        out.inputs = fs.apply(&d.inputs)?;
        if let (Some(s), Some(t)) = (&ts, &d.targets) {
            out.targets = Some(s.apply(t)?);
        }
        out.feature_stats = Some(fs.clone());
        out.target_stats = ts.clone();
        Ok(out)
    };
    let tr = apply(train)?;
    let rest = others.iter().map(apply).collect::<Result<Vec<_>>>()?;
    Ok((tr, rest))
}

/// Shuffled k-fold (train, test) index splits; the first N mod k folds get one extra row.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k-fold needs 2 <= k <= N, got k={k}, N={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let test = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        out.push((train, test));
        start += size;
    }
    Ok(out)
}

/// Adds N(0, σ²) noise to every input; targets are untouched.
pub fn gaussian_input_noise(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = rng_from_seed(seed);
    for v in out.inputs.as_mut_slice() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    Ok(out)
}
