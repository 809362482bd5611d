//! Dense complex linear algebra.
//!
//! Everything downstream (block embeddings, protocol simulation, target
//! unitaries) runs on [`ComplexMatrix`]. Decompositions are backed by
//! `nalgebra`; this module fixes the conventions the rest of the crate relies
//! on: descending singular values, a deterministic per-pair phase, ascending
//! eigenvalues, and `exp(-iHt)` through the Hermitian eigenbasis.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{HsvtError, Result};
use crate::tol;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix {}x{} ", self.rows(), self.cols())?;
        f.debug_list()
            .entries((0..self.rows()).map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect::<Vec<_>>()))
            .finish()
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(HsvtError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, &entries))
    }

    pub fn from_real_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Wraps an nalgebra matrix after checking every entry is finite.
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HsvtError::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_dmatrix_unchecked(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_diagonal(&diag.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Column vector (`n x 1`) from amplitudes.
    pub fn column(entries: &[Complex64]) -> Self {
        Self(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.0[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<Complex64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.rows() == 0 || self.cols() == 0 {
            return 0.0;
        }
        let sv = self.0.clone().singular_values();
        sv.iter().cloned().fold(0.0, f64::max)
    }

    /// `||M - M^dagger||_F`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// `||M^dagger M - I||_2`.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let g = self.0.adjoint() * &self.0 - DMatrix::<Complex64>::identity(n, n);
        ComplexMatrix(g).spectral_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn submatrix(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        Self(self.0.view((row0, col0), (rows, cols)).into_owned())
    }

    /// Block matrix `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        if a.rows() != b.rows() || c.rows() != d.rows() || a.cols() != c.cols() || b.cols() != d.cols() {
            return Err(HsvtError::InvalidInput("block shapes are inconsistent".into()));
        }
        let (n, m) = (a.rows(), c.rows());
        let (p, q) = (a.cols(), b.cols());
        let mut out = DMatrix::zeros(n + m, p + q);
        out.view_mut((0, 0), (n, p)).copy_from(&a.0);
        out.view_mut((0, p), (n, q)).copy_from(&b.0);
        out.view_mut((n, 0), (m, p)).copy_from(&c.0);
        out.view_mut((n, p), (m, q)).copy_from(&d.0);
        Ok(Self(out))
    }

    /// Stacks column vectors into a matrix.
    pub fn from_columns(rows: usize, columns: &[DVector<Complex64>]) -> Self {
        let mut out = DMatrix::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            out.set_column(j, c);
        }
        Self(out)
    }

    pub fn column_vector(&self, j: usize) -> DVector<Complex64> {
        self.0.column(j).into_owned()
    }

    pub fn mul_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.0 * v
    }

    /// Direct sum `diag(self, other)`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (n, m) = (self.rows(), other.rows());
        let (p, q) = (self.cols(), other.cols());
        let mut out = DMatrix::zeros(n + m, p + q);
        out.view_mut((0, 0), (n, p)).copy_from(&self.0);
        out.view_mut((n, p), (m, q)).copy_from(&other.0);
        Self(out)
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

/// Thin singular value decomposition `A = sum_j sigma_j |l_j><r_j|`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Descending, non-negative; values below [`tol::ZERO_SINGULAR`] are exactly 0.
    pub singulars: Vec<f64>,
    /// `m x min(m, n)`, orthonormal columns `|l_j>`.
    pub left_vectors: ComplexMatrix,
    /// `n x min(m, n)`, orthonormal columns `|r_j>`.
    pub right_vectors: ComplexMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singulars.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn sigma_max(&self) -> f64 {
        self.singulars.first().copied().unwrap_or(0.0)
    }

    /// `sum_j g(sigma_j) |l_j><r_j|`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let l = self.left_vectors.as_dmatrix();
        let r = self.right_vectors.as_dmatrix();
        let mut scaled = l.clone();
        for (j, &s) in self.singulars.iter().enumerate() {
            scaled.column_mut(j).scale_mut(g(s));
        }
        ComplexMatrix(scaled * r.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|s| s)
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    /// `V diag(g(lambda)) V^dagger`.
    pub fn apply_function(&self, g: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let v = self.eigenvectors.as_dmatrix();
        let mut scaled = v.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let gl = g(lam);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= gl;
            }
        }
        ComplexMatrix(scaled * v.adjoint())
    }
}

fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(HsvtError::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Singular value decomposition with descending singular values.
///
/// Phase convention: the first entry of each right vector whose modulus
/// exceeds `1e-12` is made real and positive; the left vector absorbs the
/// same phase so `|l_j><r_j|` is unchanged.
pub fn svd(a: &ComplexMatrix) -> Result<SvdResult> {
    ensure_finite(a)?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(HsvtError::InvalidInput("svd of an empty matrix".into()));
    }
    let dec = SVD::try_new(a.0.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| HsvtError::InvalidInput("svd failed to converge".into()))?;
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v_t requested").adjoint();
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));

    let p = order.len();
    let mut left = DMatrix::zeros(m, p);
    let mut right = DMatrix::zeros(n, p);
    let mut singulars = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let s = dec.singular_values[src];
        singulars.push(if s < tol::ZERO_SINGULAR { 0.0 } else { s });
        let mut r = v.column(src).into_owned();
        let mut l = u.column(src).into_owned();
        if let Some(z) = r.iter().find(|z| z.norm() > 1e-12) {
            let phase = z.conj() / z.norm();
            r *= phase;
            l *= phase;
        }
        right.set_column(dst, &r);
        left.set_column(dst, &l);
    }
    Ok(SvdResult {
        singulars,
        left_vectors: ComplexMatrix(left),
        right_vectors: ComplexMatrix(right),
    })
}

/// Eigendecomposition of a Hermitian matrix (the input is symmetrized first).
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEig> {
    ensure_finite(h)?;
    if !h.is_square() {
        return Err(HsvtError::InvalidInput(format!(
            "hermitian eigendecomposition needs a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let defect = h.hermitian_defect();
    let scale = h.frobenius_norm().max(1.0);
    if defect > tol::HERMITIAN * scale {
        return Err(HsvtError::InvalidInput(format!(
            "matrix is not hermitian: ||H - H^dagger|| = {defect:e}"
        )));
    }
    let sym = (&h.0 + h.0.adjoint()) * Complex64::new(0.5, 0.0);
    let dec = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..dec.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let n = h.rows();
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(dec.eigenvalues[src]);
        vecs.set_column(dst, &dec.eigenvectors.column(src));
    }
    Ok(HermitianEig {
        eigenvalues: vals,
        eigenvectors: ComplexMatrix(vecs),
    })
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    if !t.is_finite() {
        return Err(HsvtError::InvalidInput(format!("evolution time {t} is not finite")));
    }
    let eig = hermitian_eig(h)?;
    Ok(eig.apply_function(|lam| Complex64::from_polar(1.0, -lam * t)))
}

/// Hermitian PSD square root. Eigenvalues in `[-1e-8, 0)` are clamped to 0.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(m)?;
    if let Some(&lo) = eig.eigenvalues.first() {
        if lo < -tol::PSD_REJECT {
            return Err(HsvtError::NotPsd { min_eigenvalue: lo });
        }
    }
    Ok(eig.apply_function(|lam| Complex64::new(lam.max(0.0).sqrt(), 0.0)))
}

/// Spectral-norm distance `||U - V||_2`.
pub fn op_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(HsvtError::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            u.shape(),
            v.shape()
        )));
    }
    Ok((u - v).spectral_norm())
}
