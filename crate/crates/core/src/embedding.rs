//! Block Hamiltonians `H = [[D_R, A^dagger], [A, D_L]]` on `H_R (+) H_L`.
//!
//! Ordering convention: the first `n = cols(A)` coordinates are `H_R`, the
//! last `m = rows(A)` are `H_L`, so `A` sits in the lower-left block.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{HsvtError, Result};
use crate::numerics::{self, expm_hermitian, hermitian_eig, ComplexMatrix, SvdResult};
use crate::tol;

/// Hamiltonian with `A` as its off-diagonal block and optional on-diagonal blocks.
#[derive(Debug, Clone)]
pub struct BlockHamiltonian {
    a_block: ComplexMatrix,
    diag_r: Option<ComplexMatrix>,
    diag_l: Option<ComplexMatrix>,
    sigma_max: f64,
}

/// `Z = diag(+I_n, -I_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZOperator {
    pub n: usize,
    pub m: usize,
}

impl ZOperator {
    pub fn matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.signs())
    }

    /// Diagonal entries of `Z`.
    pub fn signs(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.n];
        s.extend(std::iter::repeat_n(-1.0, self.m));
        s
    }

    /// `exp(i theta Z)`.
    pub fn rotation(&self, theta: f64) -> ComplexMatrix {
        let d: Vec<Complex64> = self
            .signs()
            .into_iter()
            .map(|s| Complex64::from_polar(1.0, s * theta))
            .collect();
        ComplexMatrix::from_diagonal(&d)
    }
}

/// One invariant plane: `H` acts as `sigma X` on `span{r (+) 0, 0 (+) l}`.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    pub sigma: f64,
    pub r_vec: DVector<Complex64>,
    pub l_vec: DVector<Complex64>,
}

/// Decomposition of `H_R (+) H_L` into the invariant planes of a zero-diagonal
/// block Hamiltonian plus the leftover kernels.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    pub n: usize,
    pub m: usize,
    pub triples: Vec<SubspacePair>,
    /// `n x (n - p)` orthonormal basis of `H_R` not covered by any pair.
    pub kernel_r: ComplexMatrix,
    /// `m x (m - p)` orthonormal basis of `H_L` not covered by any pair.
    pub kernel_l: ComplexMatrix,
}

impl SubspaceDecomposition {
    /// The two full-space basis vectors `(r (+) 0, 0 (+) l)` of pair `j`.
    pub fn pair_basis(&self, j: usize) -> (DVector<Complex64>, DVector<Complex64>) {
        let p = &self.triples[j];
        let mut a = DVector::zeros(self.n + self.m);
        let mut b = DVector::zeros(self.n + self.m);
        a.rows_mut(0, self.n).copy_from(&p.r_vec);
        b.rows_mut(self.n, self.m).copy_from(&p.l_vec);
        (a, b)
    }

    /// `2 x 2` matrix of `op` in the basis of pair `j`.
    pub fn restrict(&self, op: &ComplexMatrix, j: usize) -> [[Complex64; 2]; 2] {
        let (a, b) = self.pair_basis(j);
        let basis = [a, b];
        let mut out = [[numerics::ZERO; 2]; 2];
        for (row, u) in basis.iter().enumerate() {
            for (col, v) in basis.iter().enumerate() {
                out[row][col] = u.dotc(&op.mul_vec(v));
            }
        }
        out
    }

    /// Full-space orthonormal basis of the `H_R` kernel followed by the `H_L` kernel.
    pub fn kernel_basis(&self) -> ComplexMatrix {
        let zr = ComplexMatrix::zeros(self.m, self.kernel_r.cols());
        let zl = ComplexMatrix::zeros(self.n, self.kernel_l.cols());
        let top = ComplexMatrix::from_blocks(
            &self.kernel_r,
            &zl,
            &zr,
            &self.kernel_l,
        );
        top.expect("kernel block shapes are consistent")
    }

    /// Largest residual of the eigen-relation `H (r (+) +-l) = +-sigma (r (+) +-l)`.
    pub fn eigen_residual(&self, h: &ComplexMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, pair) in self.triples.iter().enumerate() {
            let (a, b) = self.pair_basis(j);
            for sign in [1.0, -1.0] {
                let v = (&a + &b * Complex64::new(sign, 0.0)) / Complex64::new(2f64.sqrt(), 0.0);
                let hv = h.mul_vec(&v);
                let r = (hv - &v * Complex64::new(sign * pair.sigma, 0.0)).norm();
                worst = worst.max(r);
            }
        }
        worst
    }
}

impl BlockHamiltonian {
    /// `n = dim H_R = cols(A)`.
    pub fn n(&self) -> usize {
        self.a_block.cols()
    }

    /// `m = dim H_L = rows(A)`.
    pub fn m(&self) -> usize {
        self.a_block.rows()
    }

    pub fn dim(&self) -> usize {
        self.n() + self.m()
    }

    pub fn a_block(&self) -> &ComplexMatrix {
        &self.a_block
    }

    pub fn diag_r(&self) -> Option<&ComplexMatrix> {
        self.diag_r.as_ref()
    }

    pub fn diag_l(&self) -> Option<&ComplexMatrix> {
        self.diag_l.as_ref()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn z_operator(&self) -> ZOperator {
        ZOperator { n: self.n(), m: self.m() }
    }

    /// True if any on-diagonal block has a nonzero entry.
    pub fn has_diagonal(&self) -> bool {
        let nz = |d: &Option<ComplexMatrix>| d.as_ref().is_some_and(|d| d.max_abs() > 0.0);
        nz(&self.diag_r) || nz(&self.diag_l)
    }

    /// Full `(n + m) x (n + m)` matrix.
    pub fn assemble(&self) -> ComplexMatrix {
        let (n, m) = (self.n(), self.m());
        let dr = self.diag_r.clone().unwrap_or_else(|| ComplexMatrix::zeros(n, n));
        let dl = self.diag_l.clone().unwrap_or_else(|| ComplexMatrix::zeros(m, m));
        ComplexMatrix::from_blocks(&dr, &self.a_block.adjoint(), &self.a_block, &dl)
            .expect("block shapes validated at construction")
    }

    /// Off-diagonal part `[[0, A^dagger], [A, 0]]`.
    pub fn off_diagonal(&self) -> ComplexMatrix {
        self.without_diagonal().assemble()
    }

    pub fn without_diagonal(&self) -> BlockHamiltonian {
        BlockHamiltonian {
            a_block: self.a_block.clone(),
            diag_r: None,
            diag_l: None,
            sigma_max: self.sigma_max,
        }
    }

    fn require_zero_diagonal(&self, what: &str) -> Result<()> {
        if self.has_diagonal() {
            Err(HsvtError::Precondition(format!(
                "{what} needs zero on-diagonal blocks; remove them with refocus_evolution first"
            )))
        } else {
            Ok(())
        }
    }
}

/// Embeds a contraction `A` (and optional Hermitian diagonal blocks).
pub fn embed(
    a: &ComplexMatrix,
    diag_r: Option<&ComplexMatrix>,
    diag_l: Option<&ComplexMatrix>,
) -> Result<BlockHamiltonian> {
    let s = numerics::svd(a)?;
    embed_with_svd(a, &s, diag_r, diag_l)
}

pub(crate) fn embed_with_svd(
    a: &ComplexMatrix,
    s: &SvdResult,
    diag_r: Option<&ComplexMatrix>,
    diag_l: Option<&ComplexMatrix>,
) -> Result<BlockHamiltonian> {
    let sigma_max = s.sigma_max();
    if sigma_max > 1.0 + tol::CONTRACTION {
        return Err(HsvtError::Normalization { sigma_max });
    }
    let (m, n) = a.shape();
    for (d, dim, name) in [(diag_r, n, "H_R"), (diag_l, m, "H_L")] {
        if let Some(d) = d {
            if d.shape() != (dim, dim) {
                return Err(HsvtError::InvalidInput(format!(
                    "{name} diagonal block must be {dim}x{dim}, got {}x{}",
                    d.rows(),
                    d.cols()
                )));
            }
            if !d.is_finite() {
                return Err(HsvtError::InvalidInput(format!("{name} diagonal block is not finite")));
            }
            if d.hermitian_defect() > tol::HERMITIAN * d.frobenius_norm().max(1.0) {
                return Err(HsvtError::InvalidInput(format!("{name} diagonal block is not hermitian")));
            }
        }
    }
    Ok(BlockHamiltonian {
        a_block: a.clone(),
        diag_r: diag_r.cloned(),
        diag_l: diag_l.cloned(),
        sigma_max,
    })
}

/// `G_phi = [[0, e^{i phi} A^dagger], [e^{-i phi} A, 0]] = e^{i phi Z/2} H e^{-i phi Z/2}`.
pub fn conjugated_generator(h: &BlockHamiltonian, phi: f64) -> Result<ComplexMatrix> {
    h.require_zero_diagonal("conjugated_generator")?;
    let up = Complex64::from_polar(1.0, phi);
    let a = &h.a_block;
    let n = h.n();
    let m = h.m();
    ComplexMatrix::from_blocks(
        &ComplexMatrix::zeros(n, n),
        &a.adjoint().scale(up),
        &a.scale(up.conj()),
        &ComplexMatrix::zeros(m, m),
    )
}

/// Splits `H_R (+) H_L` into the invariant planes of `H`.
pub fn decompose_subspaces(h: &BlockHamiltonian) -> Result<SubspaceDecomposition> {
    h.require_zero_diagonal("decompose_subspaces")?;
    let s = numerics::svd(&h.a_block)?;
    Ok(decomposition_from_svd(&s, h.n(), h.m()))
}

pub(crate) fn decomposition_from_svd(s: &SvdResult, n: usize, m: usize) -> SubspaceDecomposition {
    let triples = s
        .singulars
        .iter()
        .enumerate()
        .map(|(j, &sigma)| SubspacePair {
            sigma,
            r_vec: s.right_vectors.column_vector(j),
            l_vec: s.left_vectors.column_vector(j),
        })
        .collect();
    SubspaceDecomposition {
        n,
        m,
        triples,
        kernel_r: orthogonal_complement(&s.right_vectors),
        kernel_l: orthogonal_complement(&s.left_vectors),
    }
}

/// Orthonormal basis of the complement of the column span of `q` (orthonormal columns).
fn orthogonal_complement(q: &ComplexMatrix) -> ComplexMatrix {
    let n = q.rows();
    let p = q.cols();
    if p >= n {
        return ComplexMatrix::zeros(n, 0);
    }
    let qd = q.as_dmatrix();
    let proj = DMatrix::<Complex64>::identity(n, n) - qd * qd.adjoint();
    let eig = hermitian_eig(&ComplexMatrix::from_dmatrix_unchecked(proj))
        .expect("projector is hermitian and finite");
    // eigenvalues ascending: the last n - p are ~1
    let cols: Vec<DVector<Complex64>> = (p..n).map(|j| eig.eigenvectors.column_vector(j)).collect();
    ComplexMatrix::from_columns(n, &cols)
}

/// Averages away the on-diagonal blocks by alternating `+-H` with `Z` conjugation.
///
/// Returns `prod_steps [exp(-iH d) Z exp(+iH d) Z]` with `d = total_t / (2 steps)`.
/// Since `Z exp(iH d) Z = exp(i Z H Z d)` and `H - ZHZ = 2 H_off`, each factor is
/// `exp(-2i H_off d) + O(d^2)`; the product converges to `exp(-i H_off total_t)`
/// at first order and is exact when the diagonal blocks vanish.
pub fn refocus_evolution(h: &BlockHamiltonian, total_t: f64, steps: usize) -> Result<ComplexMatrix> {
    if steps == 0 {
        return Err(HsvtError::InvalidInput("refocus_evolution needs steps >= 1".into()));
    }
    if !total_t.is_finite() {
        return Err(HsvtError::InvalidInput("total_t must be finite".into()));
    }
    let full = h.assemble();
    let d = total_t / (2.0 * steps as f64);
    let eig = hermitian_eig(&full)?;
    let forward = eig.apply_function(|lam| Complex64::from_polar(1.0, -lam * d));
    let backward = eig.apply_function(|lam| Complex64::from_polar(1.0, lam * d));
    let signs = h.z_operator().signs();
    // Z B Z flips the sign of the off-diagonal blocks of B
    let zbz = ComplexMatrix::from_fn(full.rows(), full.cols(), |i, j| backward.get(i, j) * signs[i] * signs[j]);
    let step = &forward * &zbz;
    let mut out = ComplexMatrix::identity(full.rows());
    for _ in 0..steps {
        out = &step * &out;
    }
    Ok(out)
}

/// Smallest power-of-two step count whose step-doubling error estimate is
/// below `budget / 10`.
pub fn refocus_steps_for(h: &BlockHamiltonian, total_t: f64, budget: f64) -> Result<usize> {
    if !h.has_diagonal() {
        return Ok(1);
    }
    let mut steps = 1usize;
    let mut prev = refocus_evolution(h, total_t, steps)?;
    while steps < (1 << 20) {
        let next = refocus_evolution(h, total_t, steps * 2)?;
        // first order: err(2s) ~ ||R(s) - R(2s)||
        if numerics::op_distance(&prev, &next)? <= budget / 10.0 {
            return Ok(steps * 2);
        }
        prev = next;
        steps *= 2;
    }
    Ok(steps)
}

/// `exp(-i H_off t)`, the evolution that refocusing approximates.
pub fn off_diagonal_evolution(h: &BlockHamiltonian, t: f64) -> Result<ComplexMatrix> {
    expm_hermitian(&h.off_diagonal(), t)
}
