//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are stored column-major, which is also the order used by
//! [`vec`] / [`invec`] to move between the delay-Doppler grid and its
//! vectorized form. Heavy lifting (products, SVD, Hermitian eigensolver) is
//! delegated to `nalgebra`; fast unitary transforms live in [`fft`].

pub mod fft;

use std::f64::consts::PI;
use std::ops::{Index, Mul};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;

/// Default relative threshold on singular values used by [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    C64::new(phase.cos(), phase.sin())
}

fn all_finite<'a>(it: impl IntoIterator<Item = &'a C64>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Dense complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub(crate) fn from_inner(m: DMatrix<C64>) -> Self {
        CMatrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let m = DMatrix::from_fn(rows, cols, f);
        if !all_finite(m.iter()) {
            return Err(Error::Contract("matrix entries must be finite".into()));
        }
        Ok(CMatrix(m))
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return dim_err(format!("{} entries cannot fill {rows}x{cols}", data.len()));
        }
        if !all_finite(data) {
            return Err(Error::Contract("matrix entries must be finite".into()));
        }
        Ok(CMatrix(DMatrix::from_row_slice(rows, cols, data)))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        CMatrix(m)
    }

    /// Builds a matrix whose j-th column is `columns[j]`.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != rows) {
            return dim_err("column length mismatch");
        }
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    /// Column-major entry slice.
    pub fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix(self.0.adjoint())
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix(&self.0 * s)
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<C64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `self^H self` deviation from identity, max entry.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.adjoint() * self;
        g.max_abs_diff(&CMatrix::identity(g.rows()))
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols(), x.len(), "matrix-vector dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        for (j, xj) in x.iter().enumerate() {
            if *xj == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.0.column(j).iter()) {
                *o += a * xj;
            }
        }
        out
    }

    pub fn try_mul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols() != other.rows() {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            ));
        }
        Ok(CMatrix(&self.0 * &other.0))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Panics on a shape mismatch; use [`CMatrix::try_mul`] for a checked product.
impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(self.0 * &rhs.0)
    }
}

/// Non-empty complex vector with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector(Vec<C64>);

impl CVector {
    pub fn new(v: Vec<C64>) -> Result<Self> {
        if v.is_empty() {
            return dim_err("vector length must be positive");
        }
        if !all_finite(&v) {
            return Err(Error::Contract("vector entries must be finite".into()));
        }
        Ok(CVector(v))
    }

    pub(crate) fn from_vec(v: Vec<C64>) -> Self {
        debug_assert!(!v.is_empty());
        CVector(v)
    }

    pub fn zeros(n: usize) -> Self {
        CVector(vec![C64::new(0.0, 0.0); n.max(1)])
    }

    pub fn from_real(v: &[f64]) -> Result<Self> {
        Self::new(v.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn max_abs_diff(&self, other: &CVector) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl std::ops::Deref for CVector {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Unitary n-point DFT matrix, entry (k, l) = exp(-j 2 pi k l / n) / sqrt(n).
pub fn dft_matrix(n: usize) -> Result<CMatrix> {
    dft_submatrix(n, n)
}

/// First `l` columns of [`dft_matrix`]`(n)`.
pub fn dft_submatrix(n: usize, l: usize) -> Result<CMatrix> {
    if n == 0 {
        return dim_err("DFT size must be at least 1");
    }
    if l == 0 || l > n {
        return dim_err(format!("DFT column count {l} must lie in [1, {n}]"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    // Reduce k*l mod n in integers so large sizes keep full phase accuracy.
    CMatrix::from_fn(n, l, |k, c| {
        let kl = ((k as u128 * c as u128) % n as u128) as f64;
        cis(-2.0 * PI * kl / n as f64) * scale
    })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let (Some(rows), Some(cols)) = (rows, cols) else {
        return dim_err("Kronecker product dimensions overflow");
    };
    if rows.checked_mul(cols).is_none() {
        return dim_err("Kronecker product size overflows");
    }
    let (br, bc) = (b.rows(), b.cols());
    Ok(CMatrix(DMatrix::from_fn(rows, cols, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })))
}

/// Column-wise vectorization.
pub fn vec(x: &CMatrix) -> CVector {
    CVector::from_vec(x.as_slice().to_vec())
}

/// Inverse of [`vec`]: reshape into a `rows`-row matrix, column by column.
pub fn invec(v: &[C64], rows: usize) -> Result<CMatrix> {
    if rows == 0 || v.len() % rows != 0 {
        return dim_err(format!("length {} is not divisible by {rows} rows", v.len()));
    }
    Ok(CMatrix(DMatrix::from_column_slice(rows, v.len() / rows, v)))
}

/// Singular values, descending.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.0.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * sigma_max`; 0 for the zero matrix.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    rank_from_singular_values(&singular_values(a), rel_tol)
}

pub(crate) fn rank_from_singular_values(s: &[f64], rel_tol: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Real eigenvalues, descending; ties keep their original order.
    pub values: Vec<f64>,
    /// Unit eigenvectors as columns, ordered like `values`.
    pub vectors: CMatrix,
}

pub fn eig_hermitian(a: &CMatrix) -> Result<HermitianEigen> {
    if a.rows() != a.cols() {
        return dim_err("eigen-decomposition needs a square matrix");
    }
    let scale = a.max_abs();
    let asym = a.max_abs_diff(&a.adjoint());
    if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (asymmetry {asym:.3e} vs scale {scale:.3e})"
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(a.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors: CMatrix(vectors) })
}
