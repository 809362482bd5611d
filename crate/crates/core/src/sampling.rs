//! Seeded random instance generators used by tests, sweeps and the acceptance suite.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::numerics::ComplexMatrix;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / 2f64.sqrt()
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = random_complex(rng, n, n);
    (&g + &g.adjoint()).scale_real(0.5)
}

/// Haar-ish random unitary from the QR factor of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = random_complex(rng, n, n).into_dmatrix();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                out[(i, j)] = q[(i, j)] * phase;
            }
        }
    }
    ComplexMatrix::from_dmatrix_unchecked(out)
}

/// `rows x cols` matrix with random singular vectors and singular values drawn
/// uniformly from `[lo, hi]`.
pub fn random_contraction<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> ComplexMatrix {
    let p = rows.min(cols);
    let dist = Uniform::new_inclusive(lo, hi).expect("valid singular value range");
    let sigmas: Vec<f64> = (0..p).map(|_| dist.sample(rng)).collect();
    with_singular_values(rng, rows, cols, &sigmas)
}

/// `rows x cols` matrix `U diag(sigmas) V^dagger` with random unitaries `U`, `V`.
pub fn with_singular_values<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    sigmas: &[f64],
) -> ComplexMatrix {
    assert!(sigmas.len() <= rows.min(cols));
    let u = random_unitary(rng, rows);
    let v = random_unitary(rng, cols);
    let mut d = DMatrix::zeros(rows, cols);
    for (j, &s) in sigmas.iter().enumerate() {
        d[(j, j)] = Complex64::new(s, 0.0);
    }
    let d = ComplexMatrix::from_dmatrix_unchecked(d);
    &(&u * &d) * &v.adjoint()
}

/// Unit-norm random state.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..dim).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}
