//! Dense matrices and symmetric positive-definite matrices carried by their
//! lower Cholesky factor.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Pivots at or below this value make [`cholesky`] fail.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix literal");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Outer product x yᵀ.
    pub fn outer(x: &[f64], y: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(x.len(), y.len());
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                m[(i, j)] = a * b;
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric positive-definite K×K matrix stored as its lower Cholesky
/// factor `chol` (matrix = chol · cholᵀ, strictly positive diagonal).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymPD {
    chol: Matrix,
}

impl TryFrom<Matrix> for SymPD {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        cholesky(&m)
    }
}

impl From<SymPD> for Matrix {
    fn from(s: SymPD) -> Matrix {
        s.to_matrix()
    }
}

impl SymPD {
    pub fn identity(k: usize) -> Self {
        Self {
            chol: Matrix::identity(k),
        }
    }

    /// Diagonal matrix with the given strictly positive entries.
    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        if let Some((index, &pivot)) = diag.iter().enumerate().find(|(_, d)| !(**d > PIVOT_TOLERANCE)) {
            return Err(Error::NotPositiveDefinite { index, pivot });
        }
        let sq: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
        Ok(Self {
            chol: Matrix::from_diag(&sq),
        })
    }

    /// Wraps an existing lower-triangular factor. The strict upper triangle
    /// is ignored; the diagonal must be strictly positive.
    pub fn from_cholesky(mut chol: Matrix) -> Result<Self> {
        check_dim(chol.rows(), chol.cols())?;
        let k = chol.rows();
        for i in 0..k {
            let d = chol[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: i, pivot: d });
            }
            for j in i + 1..k {
                chol[(i, j)] = 0.0;
            }
        }
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.rows()
    }

    pub fn chol(&self) -> &Matrix {
        &self.chol
    }

    pub fn to_matrix(&self) -> Matrix {
        let k = self.dim();
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|t| self.chol[(i, t)] * self.chol[(j, t)]).sum();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol[(i, i)].ln()).sum::<f64>()
    }

    /// Solves chol · z = b.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let k = self.dim();
        check_dim(k, b.len())?;
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut s = b[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
        }
        Ok(z)
    }

    /// Solves cholᵀ · x = z.
    pub fn backward_solve(&self, z: &[f64]) -> Result<Vec<f64>> {
        let k = self.dim();
        check_dim(k, z.len())?;
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = z[i];
            for j in i + 1..k {
                s -= self.chol[(j, i)] * x[j];
            }
            x[i] = s / self.chol[(i, i)];
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let z = self.forward_solve(b)?;
        self.backward_solve(&z)
    }

    /// xᵀ S x = ‖cholᵀ x‖².
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let k = self.dim();
        check_dim(k, x.len())?;
        let mut s = 0.0;
        for j in 0..k {
            let v: f64 = (j..k).map(|i| self.chol[(i, j)] * x[i]).sum();
            s += v * v;
        }
        Ok(s)
    }

    /// xᵀ S⁻¹ x = ‖chol⁻¹ x‖².
    pub fn inv_quad_form(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_solve(x)?.iter().map(|v| v * v).sum())
    }

    /// Inverse of the lower factor, itself lower triangular.
    pub fn chol_inverse(&self) -> Matrix {
        let k = self.dim();
        let mut inv = Matrix::zeros(k, k);
        for j in 0..k {
            inv[(j, j)] = 1.0 / self.chol[(j, j)];
            for i in j + 1..k {
                let s: f64 = (j..i).map(|t| self.chol[(i, t)] * inv[(t, j)]).sum();
                inv[(i, j)] = -s / self.chol[(i, i)];
            }
        }
        inv
    }

    pub fn inverse(&self) -> SymPD {
        // S⁻¹ = X^T X with X = chol⁻¹; re-factor for a lower factor.
        let x = self.chol_inverse();
        let k = self.dim();
        let mut m = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let v: f64 = (a..k).map(|t| x[(t, a)] * x[(t, b)]).sum();
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        cholesky_unchecked_symmetry(&m).unwrap_or_else(|_| {
            // S⁻¹ of a valid factor is PD; this only fails from round-off on
            // pathologically conditioned input.
            SymPD { chol: x.transpose() }
        })
    }

    /// Σ_ij A_ij B_ij = tr(A B) for symmetric A, B.
    pub fn trace_of_product(&self, other: &SymPD) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        let a = self.to_matrix();
        let b = other.to_matrix();
        Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum())
    }

    /// c · S for c > 0.
    pub fn scale(&self, c: f64) -> Result<SymPD> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("SymPD scale must be positive, got {c}")));
        }
        Ok(SymPD {
            chol: self.chol.scale(c.sqrt()),
        })
    }

    /// Lower-triangle entries in row-major packed order (0,0), (1,0), (1,1), ...
    pub fn packed(&self) -> Vec<f64> {
        packed_lower(&self.to_matrix())
    }
}

/// Packs the lower triangle of a square matrix, row by row.
pub fn packed_lower(m: &Matrix) -> Vec<f64> {
    let k = m.rows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Index of (i, j), j ≤ i, in the packed lower-triangle layout.
pub fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

pub fn cholesky(matrix: &Matrix) -> Result<SymPD> {
    check_dim(matrix.rows(), matrix.cols())?;
    if !matrix.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(Error::InvalidArgument("cholesky input is not symmetric".into()));
    }
    cholesky_unchecked_symmetry(matrix)
}

fn cholesky_unchecked_symmetry(matrix: &Matrix) -> Result<SymPD> {
    let k = matrix.rows();
    let mut l = Matrix::zeros(k, k);
    for j in 0..k {
        let mut d = matrix[(j, j)];
        for t in 0..j {
            d -= l[(j, t)] * l[(j, t)];
        }
        if !(d > PIVOT_TOLERANCE) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..k {
            let mut s = matrix[(i, j)];
            for t in 0..j {
                s -= l[(i, t)] * l[(j, t)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(SymPD { chol: l })
}

pub fn logdet(s: &SymPD) -> f64 {
    s.logdet()
}

pub fn solve(s: &SymPD, b: &[f64]) -> Result<Vec<f64>> {
    s.solve(b)
}

pub fn inverse(s: &SymPD) -> SymPD {
    s.inverse()
}

pub fn trace_of_product(a: &SymPD, b: &SymPD) -> Result<f64> {
    a.trace_of_product(b)
}
