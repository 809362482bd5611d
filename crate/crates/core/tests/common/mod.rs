//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hqsvt::applications::StateVector;
use hqsvt::compiler::{PhaseSchedule, PhaseStep};
use hqsvt::ComplexMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// `exp(m)` for any square matrix: scaling and squaring around a Taylor series.
pub fn taylor_expm(m: &CMat) -> CMat {
    let norm: f64 = m.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = (norm.log2().ceil().max(0.0) as u32) + 4;
    let scaled = m / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let n = m.nrows();
    let mut term = CMat::identity(n, n);
    let mut sum = term.clone();
    for j in 1..40 {
        term = &term * &scaled / Complex64::new(j as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `A^n v` by repeated matrix-vector products.
pub fn repeated_apply(a: &CMat, v: &CVec, n: usize) -> CVec {
    let mut out = v.clone();
    for _ in 0..n {
        out = a * out;
    }
    out
}

/// `A^n` by repeated multiplication.
pub fn matrix_power(a: &CMat, n: usize) -> CMat {
    let mut out = CMat::identity(a.nrows(), a.ncols());
    for _ in 0..n {
        out = &out * a;
    }
    out
}

/// Largest singular value by power iteration on `A^dagger A`.
pub fn power_iteration_norm(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    let mut v = CVec::from_fn(g.nrows(), |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.3));
    let mut lam = 0.0;
    for _ in 0..5000 {
        let w = &g * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(nw, 0.0);
        if (nw - lam).abs() <= 1e-15 * nw {
            lam = nw;
            break;
        }
        lam = nw;
    }
    lam.sqrt()
}

pub fn spectral(m: &CMat) -> f64 {
    m.clone().singular_values().max()
}

pub fn dm(m: &ComplexMatrix) -> CMat {
    m.as_dmatrix().clone()
}

pub fn random_state<R: Rng>(rng: &mut R, d: usize) -> StateVector {
    StateVector::new(hqsvt::sampling::random_state(rng, d)).unwrap()
}

/// Schedule with `k` uniform phases, times in `[0.2, 2]` and a random frame.
pub fn random_schedule<R: Rng>(rng: &mut R, k: usize) -> PhaseSchedule {
    let steps = (0..k)
        .map(|_| PhaseStep::new(rng.random_range(-3.2..3.2), rng.random_range(0.2..2.0)).unwrap())
        .collect();
    PhaseSchedule::with_frame(steps, rng.random_range(-3.2..3.2)).unwrap()
}

/// Least-squares slope and Pearson correlation of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxy / sxx, sxy / (sxx * syy).sqrt())
}
