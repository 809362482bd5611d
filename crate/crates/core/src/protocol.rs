//! Full-space simulation of alternating-phase protocols and the closed-form
//! target unitary they are meant to realize.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::compiler::{PhaseSchedule, ReducedUnitary};
use crate::embedding::{decomposition_from_svd, SubspaceDecomposition};
use crate::error::{HsvtError, Result};
use crate::numerics::{self, hermitian_eig, op_distance, ComplexMatrix, I};
use crate::target::TargetFunction;
use crate::tol;

/// Multiplicative error on each pulse area: `t -> t (1 + eta z)`, `z ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlNoiseModel {
    eta: f64,
    seed: u64,
}

impl ControlNoiseModel {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(HsvtError::InvalidInput(format!("eta must be finite and >= 0, got {eta}")));
        }
        Ok(Self { eta, seed })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Relative time errors `eta z_k` for a schedule of `k` steps.
    pub fn draws(&self, k: usize) -> Vec<f64> {
        standard_normals(self.seed, k).into_iter().map(|z| self.eta * z).collect()
    }
}

fn standard_normals(seed: u64, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `U_f = i [[sqrt(I - f(A)^dagger f(A)), f(A)^dagger], [f(A), -sqrt(I - f(A) f(A)^dagger)]]`.
#[derive(Debug, Clone)]
pub struct TargetUnitary {
    matrix: ComplexMatrix,
    decomposition: SubspaceDecomposition,
    f_values: Vec<f64>,
    in_domain: Vec<bool>,
}

impl TargetUnitary {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn decomposition(&self) -> &SubspaceDecomposition {
        &self.decomposition
    }

    /// Singular values of `A`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        self.decomposition.triples.iter().map(|p| p.sigma).collect()
    }

    /// `f(sigma_j)` as applied (0 on zero singular values).
    pub fn f_values(&self) -> &[f64] {
        &self.f_values
    }

    /// Whether each singular value lies in the target function's domain.
    pub fn in_domain(&self) -> &[bool] {
        &self.in_domain
    }

    /// `i [[sqrt(1 - f^2), f], [f, -sqrt(1 - f^2)]]` for pair `j`.
    pub fn plane_block(&self, j: usize) -> ReducedUnitary {
        crate::compiler::reduced_target(self.f_values[j])
    }
}

/// Builds the target unitary from the SVD of `A`.
///
/// `f` is applied through its closed form, also to singular values outside
/// its domain (those are flagged). Zero singular values and the kernels map
/// to `f = 0`.
pub fn build_target_unitary(a: &ComplexMatrix, f: &TargetFunction) -> Result<TargetUnitary> {
    let s = numerics::svd(a)?;
    let sigma_max = s.sigma_max();
    if sigma_max > 1.0 + tol::CONTRACTION {
        return Err(HsvtError::Normalization { sigma_max });
    }
    let mut f_values = Vec::with_capacity(s.singulars.len());
    let mut in_domain = Vec::with_capacity(s.singulars.len());
    for &sigma in &s.singulars {
        let v = if sigma > 0.0 { f.eval_analytic(sigma.min(1.0)) } else { 0.0 };
        if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
            return Err(HsvtError::Cap { value: v.abs(), cap: 1.0 });
        }
        f_values.push(v.clamp(-1.0, 1.0));
        in_domain.push(f.contains(sigma));
    }
    let (m, n) = a.shape();
    let decomposition = decomposition_from_svd(&s, n, m);
    let matrix = assemble_target(&s.right_vectors, &s.left_vectors, &f_values);
    Ok(TargetUnitary {
        matrix,
        decomposition,
        f_values,
        in_domain,
    })
}

fn assemble_target(right: &ComplexMatrix, left: &ComplexMatrix, f_values: &[f64]) -> ComplexMatrix {
    let v = right.as_dmatrix();
    let w = left.as_dmatrix();
    let (n, m) = (v.nrows(), w.nrows());
    let weighted = |base: &DMatrix<Complex64>, g: &dyn Fn(f64) -> f64| {
        let mut out = base.clone();
        for (j, &fv) in f_values.iter().enumerate() {
            out.column_mut(j).scale_mut(g(fv));
        }
        out
    };
    // |f| within rounding of 1 counts as 1, otherwise sqrt amplifies the error to ~1e-8
    let comp = |fv: f64| if 1.0 - fv.abs() <= 1e-12 { 0.0 } else { (1.0 - fv * fv).sqrt() };
    // I - V V^dagger + V C V^dagger, likewise on the left
    let top_left = DMatrix::identity(n, n) - v * v.adjoint() + weighted(v, &comp) * v.adjoint();
    let bottom_right = DMatrix::identity(m, m) - w * w.adjoint() + weighted(w, &comp) * w.adjoint();
    let fa = weighted(w, &|fv| fv) * v.adjoint();
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&top_left);
    out.view_mut((0, n), (n, m)).copy_from(&fa.adjoint());
    out.view_mut((n, 0), (m, n)).copy_from(&fa);
    out.view_mut((n, n), (m, m)).copy_from(&(-bottom_right));
    ComplexMatrix::from_dmatrix_unchecked(out * I)
}

/// Output of [`simulate_protocol`].
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub unitary: ComplexMatrix,
    /// Distance to a target, once compared (see [`ProtocolResult::compared_to`]).
    pub achieved_eps: Option<f64>,
    pub schedule_used: PhaseSchedule,
    pub noise_model: Option<ControlNoiseModel>,
}

impl ProtocolResult {
    pub fn compared_to(mut self, target: &TargetUnitary) -> Result<Self> {
        self.achieved_eps = Some(op_distance(&self.unitary, &target.matrix)?);
        Ok(self)
    }
}

/// Eigenbasis of the zero-diagonal block Hamiltonian, reused across runs.
struct Evolution {
    n: usize,
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl Evolution {
    fn new(a: &ComplexMatrix) -> Result<Self> {
        let sigma_max = a.spectral_norm();
        if sigma_max > 1.0 + tol::CONTRACTION {
            return Err(HsvtError::Normalization { sigma_max });
        }
        let (m, n) = a.shape();
        let h = ComplexMatrix::from_blocks(&ComplexMatrix::zeros(n, n), &a.adjoint(), a, &ComplexMatrix::zeros(m, m))?;
        let eig = hermitian_eig(&h)?;
        Ok(Self {
            n,
            values: eig.eigenvalues,
            vectors: eig.eigenvectors.into_dmatrix(),
        })
    }

    fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Z` signs as a phase vector `e^{i s_j x}`.
    fn z_phases(&self, x: f64) -> Vec<Complex64> {
        (0..self.dim())
            .map(|j| Complex64::from_polar(1.0, if j < self.n { x } else { -x }))
            .collect()
    }

    /// `exp(i theta Z) prod_k D_k exp(-iH t_k) D_k^dagger` with `D_k = exp(i phi_k Z / 2)`.
    fn run(&self, phases: &[f64], times: &[f64], frame: f64) -> ComplexMatrix {
        let d = self.dim();
        let mut u = DMatrix::<Complex64>::identity(d, d);
        let vd = self.vectors.adjoint();
        for (&phi, &t) in phases.iter().zip(times) {
            let mut e = self.vectors.clone();
            for (j, &lam) in self.values.iter().enumerate() {
                let z = Complex64::from_polar(1.0, -lam * t);
                e.column_mut(j).iter_mut().for_each(|x| *x *= z);
            }
            let mut step = e * &vd;
            let ph = self.z_phases(phi / 2.0);
            for r in 0..d {
                for c in 0..d {
                    step[(r, c)] *= ph[r] * ph[c].conj();
                }
            }
            u = step * u;
        }
        let fr = self.z_phases(frame);
        for (r, z) in fr.iter().enumerate() {
            u.row_mut(r).iter_mut().for_each(|x| *x *= z);
        }
        ComplexMatrix::from_dmatrix_unchecked(u)
    }
}

fn schedule_arrays(schedule: &PhaseSchedule) -> (Vec<f64>, Vec<f64>) {
    schedule.steps().iter().map(|s| (s.phi(), s.t())).unzip()
}

/// Runs `exp(i theta Z) prod_k exp(-i G_{phi_k} t~_k)` on the full space.
pub fn simulate_protocol(
    a: &ComplexMatrix,
    schedule: &PhaseSchedule,
    noise: Option<&ControlNoiseModel>,
) -> Result<ProtocolResult> {
    let evo = Evolution::new(a)?;
    let (phases, mut times) = schedule_arrays(schedule);
    if let Some(model) = noise {
        for (t, e) in times.iter_mut().zip(model.draws(phases.len())) {
            *t *= 1.0 + e;
        }
    }
    Ok(ProtocolResult {
        unitary: evo.run(&phases, &times, schedule.frame_phase()),
        achieved_eps: None,
        schedule_used: schedule.clone(),
        noise_model: noise.copied(),
    })
}

/// Residual of one invariant plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubspaceResidual {
    pub sigma: f64,
    pub residual: f64,
    /// Whether `sigma` lies in the target's synthesis domain.
    pub in_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub distance: f64,
    pub eps: f64,
    pub pass: bool,
    pub subspaces: Vec<SubspaceResidual>,
    /// Residual restricted to the kernels of `A` and `A^dagger` (0 if there are none).
    pub kernel_residual: f64,
    /// Largest residual among in-domain subspaces.
    pub max_in_domain: f64,
    /// Singular values outside the synthesis domain.
    pub out_of_domain: Vec<f64>,
}

/// Compares a simulated protocol with its target.
pub fn verify(result: &ProtocolResult, target: &TargetUnitary, eps: f64) -> Result<Verification> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(HsvtError::InvalidInput("eps must be positive".into()));
    }
    let distance = op_distance(&result.unitary, &target.matrix)?;
    let diff = &result.unitary - &target.matrix;
    let dec = &target.decomposition;
    let mut subspaces = Vec::with_capacity(dec.triples.len());
    for (j, pair) in dec.triples.iter().enumerate() {
        let block = dec.restrict(&diff, j);
        subspaces.push(SubspaceResidual {
            sigma: pair.sigma,
            residual: ReducedUnitary(block).distance(&ReducedUnitary([[numerics::ZERO; 2]; 2])),
            in_domain: target.in_domain[j],
        });
    }
    let kb = dec.kernel_basis();
    let kernel_residual = if kb.cols() == 0 {
        0.0
    } else {
        (&(&kb.adjoint() * &diff) * &kb).spectral_norm()
    };
    let max_in_domain = subspaces
        .iter()
        .filter(|s| s.in_domain)
        .map(|s| s.residual)
        .fold(0.0, f64::max);
    let out_of_domain = subspaces.iter().filter(|s| !s.in_domain).map(|s| s.sigma).collect();
    Ok(Verification {
        distance,
        eps,
        pass: distance <= eps,
        subspaces,
        kernel_residual,
        max_in_domain,
        out_of_domain,
    })
}

/// One row of a noise sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub eta: f64,
    pub trials: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
    pub steps: usize,
    pub total_time: f64,
    /// `mean_distance / (steps * eta)`; absent at `eta = 0`.
    pub fitted_c: Option<f64>,
}

/// Mean and max distance between noisy and noiseless runs for each `eta`.
///
/// Trial `i` draws its pulse errors from seed `seed + i`; the same standard
/// normal draws are scaled by every `eta`.
pub fn noise_sweep(
    a: &ComplexMatrix,
    schedule: &PhaseSchedule,
    etas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<NoiseRow>> {
    if trials == 0 {
        return Err(HsvtError::InvalidInput("noise_sweep needs trials >= 1".into()));
    }
    for &eta in etas {
        ControlNoiseModel::new(eta, seed)?;
    }
    let evo = Evolution::new(a)?;
    let (phases, times) = schedule_arrays(schedule);
    let frame = schedule.frame_phase();
    let clean = evo.run(&phases, &times, frame);
    let k = phases.len();
    let total_time: f64 = times.iter().sum();
    let draws: Vec<Vec<f64>> = (0..trials)
        .map(|i| standard_normals(seed.wrapping_add(i as u64), k))
        .collect();
    etas.iter()
        .map(|&eta| {
            let distances: Vec<f64> = draws
                .par_iter()
                .map(|z| {
                    let noisy: Vec<f64> = times.iter().zip(z).map(|(t, z)| t * (1.0 + eta * z)).collect();
                    let u = evo.run(&phases, &noisy, frame);
                    op_distance(&u, &clean).expect("same shape")
                })
                .collect();
            let mean = distances.iter().sum::<f64>() / trials as f64;
            let max = distances.iter().copied().fold(0.0, f64::max);
            Ok(NoiseRow {
                eta,
                trials,
                mean_distance: mean,
                max_distance: max,
                steps: k,
                total_time,
                fitted_c: (eta > 0.0 && k > 0).then(|| mean / (k as f64 * eta)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{reduced_model, PhaseStep};
    use crate::embedding::{conjugated_generator, embed};
    use crate::numerics::{expm_hermitian, sqrt_psd};
    use crate::sampling;
    use crate::target::TargetKind;
    use rand::Rng;

    fn identity_f() -> TargetFunction {
        TargetFunction::new(TargetKind::Identity, 0.1, 0.9).unwrap()
    }

    #[test]
    fn target_of_zero_matrix() {
        let a = ComplexMatrix::zeros(2, 2);
        let t = build_target_unitary(&a, &identity_f()).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[I, I, -I, -I]);
        assert!(op_distance(t.matrix(), &expected).unwrap() < 1e-14);
    }

    #[test]
    fn target_of_unitary_is_off_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sampling::random_unitary(&mut rng, 3);
        let t = build_target_unitary(&a, &identity_f()).unwrap();
        let z = ComplexMatrix::zeros(3, 3);
        let expected = ComplexMatrix::from_blocks(&z, &a.adjoint(), &a, &z).unwrap().scale(I);
        assert!(op_distance(t.matrix(), &expected).unwrap() < 1e-10);
        assert!(t.in_domain().iter().all(|d| !d));
    }

    #[test]
    fn target_matches_direct_block_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = sampling::random_contraction(&mut rng, 3, 4, 0.1, 0.9);
        let t = build_target_unitary(&a, &identity_f()).unwrap();
        let top = sqrt_psd(&(&ComplexMatrix::identity(4) - &(&a.adjoint() * &a))).unwrap();
        let bottom = sqrt_psd(&(&ComplexMatrix::identity(3) - &(&a * &a.adjoint()))).unwrap();
        let expected = ComplexMatrix::from_blocks(&top, &a.adjoint(), &a, &-&bottom).unwrap().scale(I);
        assert!(op_distance(t.matrix(), &expected).unwrap() < 1e-10);
        let u = t.matrix();
        assert!(u.unitarity_defect() < 1e-10);
        assert!((u + &u.adjoint()).spectral_norm() < 1e-10);
    }

    #[test]
    fn target_rejects_cap_violation_and_non_contraction() {
        let a = ComplexMatrix::from_real_diagonal(&[0.99]);
        let f = TargetFunction::new(TargetKind::InverseSqrtComplement { c: 0.3 }, 0.1, 0.9).unwrap();
        assert!(matches!(build_target_unitary(&a, &f), Err(HsvtError::Cap { .. })));
        let big = ComplexMatrix::from_real_diagonal(&[1.5]);
        assert!(matches!(build_target_unitary(&big, &identity_f()), Err(HsvtError::Normalization { .. })));
    }

    #[test]
    fn empty_schedule_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sampling::random_contraction(&mut rng, 2, 3, 0.1, 0.9);
        let r = simulate_protocol(&a, &PhaseSchedule::new(vec![]), None).unwrap();
        assert!(op_distance(&r.unitary, &ComplexMatrix::identity(5)).unwrap() < 1e-14);
    }

    #[test]
    fn single_step_matches_direct_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = sampling::random_contraction(&mut rng, 3, 2, 0.1, 0.9);
        let (phi, t) = (0.83, 1.7);
        let s = PhaseSchedule::new(vec![PhaseStep::new(phi, t).unwrap()]);
        let r = simulate_protocol(&a, &s, None).unwrap();
        let g = conjugated_generator(&embed(&a, None, None).unwrap(), phi).unwrap();
        let direct = expm_hermitian(&g, t).unwrap();
        assert!(op_distance(&r.unitary, &direct).unwrap() < 1e-12);
    }

    #[test]
    fn restriction_matches_reduced_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = sampling::random_contraction(&mut rng, 4, 3, 0.05, 0.95);
        let phases: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = PhaseSchedule::from_phases(&phases, 0.4).unwrap();
        let r = simulate_protocol(&a, &s, None).unwrap();
        let t = build_target_unitary(&a, &identity_f()).unwrap();
        let dec = t.decomposition();
        for (j, pair) in dec.triples.iter().enumerate() {
            let block = ReducedUnitary(dec.restrict(&r.unitary, j));
            assert!(block.distance(&reduced_model(&s, pair.sigma)) < 1e-10);
        }
    }

    #[test]
    fn zero_noise_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = sampling::random_contraction(&mut rng, 2, 2, 0.1, 0.9);
        let s = PhaseSchedule::from_phases(&[0.1, 0.7, -0.4], 0.0).unwrap();
        let clean = simulate_protocol(&a, &s, None).unwrap();
        let noisy = simulate_protocol(&a, &s, Some(&ControlNoiseModel::new(0.0, 99).unwrap())).unwrap();
        assert_eq!(clean.unitary, noisy.unitary);
    }

    #[test]
    fn noisy_runs_repeat_with_same_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = sampling::random_contraction(&mut rng, 2, 3, 0.1, 0.9);
        let s = PhaseSchedule::from_phases(&[0.1, 0.7, -0.4, 1.1], 0.0).unwrap();
        let m = ControlNoiseModel::new(1e-2, 5).unwrap();
        let u1 = simulate_protocol(&a, &s, Some(&m)).unwrap().unitary;
        let u2 = simulate_protocol(&a, &s, Some(&m)).unwrap().unitary;
        assert_eq!(u1, u2);
        assert!(u1.unitarity_defect() < 1e-10);
    }

    #[test]
    fn verify_identical_and_perturbed() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = sampling::random_contraction(&mut rng, 3, 3, 0.2, 0.8);
        let t = build_target_unitary(&a, &identity_f()).unwrap();
        let same = ProtocolResult {
            unitary: t.matrix().clone(),
            achieved_eps: None,
            schedule_used: PhaseSchedule::new(vec![]),
            noise_model: None,
        };
        let v = verify(&same, &t, 1e-3).unwrap();
        assert_eq!(v.distance, 0.0);
        assert!(v.pass);

        // f -> f + 1e-2 sigma changes each plane block by about 1e-2
        let f2 = TargetFunction::new(TargetKind::ScaledPower { p: 1.0, c: 1.01 }, 0.1, 0.9).unwrap();
        let t2 = build_target_unitary(&a, &f2).unwrap();
        let pert = ProtocolResult {
            unitary: t2.matrix().clone(),
            ..same
        };
        let v = verify(&pert, &t, 1e-3).unwrap();
        assert!(!v.pass);
        assert!(v.distance > 2e-3 && v.distance < 2e-2, "{}", v.distance);
        let max_sub = v.subspaces.iter().map(|s| s.residual).fold(0.0, f64::max);
        assert!(max_sub <= v.distance * (1.0 + 1e-9) && 2.0 * max_sub >= v.distance);
    }

    #[test]
    fn verify_rejects_shape_mismatch() {
        let t = build_target_unitary(&ComplexMatrix::zeros(2, 2), &identity_f()).unwrap();
        let r = simulate_protocol(&ComplexMatrix::zeros(1, 1), &PhaseSchedule::new(vec![]), None).unwrap();
        assert!(matches!(verify(&r, &t, 1e-3), Err(HsvtError::InvalidInput(_))));
    }

    #[test]
    fn noise_sweep_zero_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = sampling::random_contraction(&mut rng, 3, 3, 0.1, 0.9);
        let phases: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = PhaseSchedule::from_phases(&phases, 0.0).unwrap();
        let rows = noise_sweep(&a, &s, &[0.0, 1e-4, 2e-4], 50, 1).unwrap();
        assert_eq!(rows[0].mean_distance, 0.0);
        assert!(rows[0].fitted_c.is_none());
        let ratio = rows[2].mean_distance / rows[1].mean_distance;
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
        assert!(noise_sweep(&a, &s, &[1e-3], 0, 1).is_err());
    }
}
