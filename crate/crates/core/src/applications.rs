//! Applications of the inverse block encoding `U = i [[sqrt(I - A^dagger A), A^dagger], [A, -sqrt(I - A A^dagger)]]`:
//! matrix application, power cascades, forward-Euler ODE integration and
//! history states.
//!
//! Every operation runs on one of two backends. [`Backend::Exact`] builds `U`
//! in closed form from the SVD; [`Backend::Protocol`] simulates a compiled
//! schedule. The phase `i` carried by each application of `U` is removed from
//! the reported blocks.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::compiler::{synthesize_to_accuracy, PhaseSchedule, SolverOptions, SynthesisReport};
use crate::error::{HsvtError, Result};
use crate::numerics::{self, ComplexMatrix, I};
use crate::protocol::{build_target_unitary, simulate_protocol, verify, ProtocolResult, TargetUnitary, Verification};
use crate::target::{TargetFunction, TargetKind};
use crate::tol;

/// Amplitudes of a (possibly unnormalized) state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HsvtError::InvalidInput("state has non-finite amplitudes".into()));
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(HsvtError::InvalidInput("cannot normalize the zero state".into()));
        }
        Ok(Self {
            amplitudes: self.amplitudes.iter().map(|z| z / n).collect(),
        })
    }

    pub fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amplitudes)
    }

    fn from_dvector(v: &DVector<Complex64>) -> Self {
        Self {
            amplitudes: v.iter().copied().collect(),
        }
    }

    /// `||self - other||_2`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// How the inverse block encoding `U` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// Closed form from the SVD.
    Exact,
    /// Full-space simulation of a compiled schedule for `f(sigma) = sigma`.
    Protocol(PhaseSchedule),
}

fn block_unitary(a: &ComplexMatrix, backend: &Backend) -> Result<ComplexMatrix> {
    match backend {
        Backend::Exact => Ok(inverse_block_unitary(a)?.matrix().clone()),
        Backend::Protocol(schedule) => Ok(simulate_protocol(a, schedule, None)?.unitary),
    }
}

/// Closed-form `U` for `f(sigma) = sigma`.
pub fn inverse_block_unitary(a: &ComplexMatrix) -> Result<TargetUnitary> {
    let f = TargetFunction::on_default_domain(TargetKind::Identity)?;
    build_target_unitary(a, &f)
}

fn require_contraction(a: &ComplexMatrix) -> Result<f64> {
    let s = a.spectral_norm();
    if s > 1.0 + tol::CONTRACTION {
        return Err(HsvtError::Normalization { sigma_max: s });
    }
    Ok(s)
}

fn require_unit(psi: &StateVector) -> Result<()> {
    let n = psi.norm();
    if (n - 1.0).abs() > tol::STATE_NORM {
        return Err(HsvtError::Precondition(format!("state must have unit norm, got {n}")));
    }
    Ok(())
}

/// Amplitude-amplification rounds `ceil(pi / (4 sqrt(p)))`.
pub fn amplification_iterations(p: f64) -> u64 {
    (std::f64::consts::PI / (4.0 * p.sqrt())).ceil() as u64
}

/// Options of the compile-and-simulate pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOptions {
    /// Synthesis domain; by default it brackets the nonzero singular values of `A`.
    pub domain: Option<(f64, f64)>,
    /// Starting degree; by default the Chebyshev estimate for the domain.
    pub k: Option<usize>,
    pub solver: SolverOptions,
    /// Degree increments tried after a non-converged synthesis.
    pub escalations: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            domain: None,
            k: None,
            solver: SolverOptions::default(),
            escalations: 6,
        }
    }
}

/// Default synthesis domain for `A`: its nonzero singular values with a margin.
pub fn domain_for(a: &ComplexMatrix) -> Result<(f64, f64)> {
    let s = numerics::svd(a)?;
    let nonzero: Vec<f64> = s.singulars.iter().copied().filter(|&x| x > 0.0).collect();
    let (Some(&hi), Some(&lo)) = (nonzero.first(), nonzero.last()) else {
        return Ok((crate::target::DEFAULT_SIGMA_LO, crate::target::DEFAULT_SIGMA_HI));
    };
    if hi >= 1.0 - tol::HISTORY_GAP {
        return Err(HsvtError::Domain { sigma: hi, lo: 0.0, hi: 1.0 - tol::HISTORY_GAP });
    }
    Ok((0.9 * lo, hi + 0.1 * (1.0 - hi)))
}

/// Output of [`inverse_block_encode`].
#[derive(Debug, Clone)]
pub struct InverseBlockEncoding {
    pub schedule: PhaseSchedule,
    pub result: ProtocolResult,
    pub target: TargetUnitary,
    pub synthesis: SynthesisReport,
    pub verification: Verification,
}

/// Compiles a schedule for `f(sigma) = sigma` and simulates it on `A`.
///
/// Degree selection follows [`synthesize_to_accuracy`]; a miss after all
/// escalations is reported as [`HsvtError::NotConverged`].
pub fn inverse_block_encode(a: &ComplexMatrix, eps: f64, opts: &PipelineOptions) -> Result<InverseBlockEncoding> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HsvtError::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    require_contraction(a)?;
    let (lo, hi) = match opts.domain {
        Some(d) => d,
        None => domain_for(a)?,
    };
    let f = TargetFunction::new(TargetKind::Identity, lo, hi)?;
    let target = build_target_unitary(a, &f)?;
    if let Some(i) = target.in_domain().iter().zip(target.singular_values()).position(|(&ok, s)| !ok && s > 0.0) {
        return Err(HsvtError::Domain {
            sigma: target.singular_values()[i],
            lo,
            hi,
        });
    }
    let solver = SolverOptions {
        target_eps: eps,
        ..opts.solver.clone()
    };
    let (schedule, report) = synthesize_to_accuracy(&f, opts.k, opts.escalations, &solver)?;
    if !report.converged {
        return Err(HsvtError::NotConverged {
            max_residual: report.max_residual,
            target_eps: eps,
        });
    }
    let result = simulate_protocol(a, &schedule, None)?.compared_to(&target)?;
    let verification = verify(&result, &target, eps)?;
    Ok(InverseBlockEncoding {
        schedule,
        result,
        target,
        synthesis: report,
        verification,
    })
}

/// Output of [`apply_matrix`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Application {
    /// `A psi / ||A psi||`.
    pub state: StateVector,
    /// `<psi| A^dagger A |psi>`.
    pub success_prob: f64,
    pub amplification_iterations: u64,
}

/// Applies `U` to `(psi, 0)` and post-selects the lower block.
pub fn apply_matrix(a: &ComplexMatrix, psi: &StateVector, backend: &Backend) -> Result<Application> {
    require_contraction(a)?;
    require_unit(psi)?;
    let (m, n) = a.shape();
    if psi.dim() != n {
        return Err(HsvtError::InvalidInput(format!("state has dimension {}, A has {n} columns", psi.dim())));
    }
    let u = block_unitary(a, backend)?;
    let mut input = DVector::zeros(n + m);
    input.rows_mut(0, n).copy_from(&psi.to_dvector());
    let out = u.mul_vec(&input);
    let lower: DVector<Complex64> = out.rows(n, m) * (-I);
    let p = lower.norm_squared();
    if p < tol::ZERO_PROBABILITY {
        return Err(HsvtError::ZeroProbability { probability: p });
    }
    Ok(Application {
        state: StateVector::from_dvector(&(lower / Complex64::new(p.sqrt(), 0.0))),
        success_prob: p,
        amplification_iterations: amplification_iterations(p),
    })
}

/// The `n + 1` registers produced by a power cascade.
///
/// Block `j < n` holds `sqrt(I - A^dagger A) A^j psi`, block `n` holds `A^n psi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeState {
    pub registers: Vec<StateVector>,
}

impl CascadeState {
    pub fn total_norm_sqr(&self) -> f64 {
        self.registers.iter().map(StateVector::norm_sqr).sum()
    }

    pub fn final_block(&self) -> &StateVector {
        self.registers.last().expect("cascade has at least two registers")
    }

    /// Probability of finding the last register populated.
    pub fn final_prob(&self) -> f64 {
        self.final_block().norm_sqr()
    }
}

fn require_square(a: &ComplexMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(HsvtError::InvalidInput(format!(
            "A must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Applies `U` to register pairs `(0, 1), (1, 2), ..., (n - 1, n)` in turn.
pub fn power_cascade(a: &ComplexMatrix, psi: &StateVector, n: usize, backend: &Backend) -> Result<CascadeState> {
    require_square(a)?;
    require_contraction(a)?;
    if n == 0 {
        return Err(HsvtError::InvalidInput("power_cascade needs n >= 1".into()));
    }
    let d = a.rows();
    if psi.dim() != d {
        return Err(HsvtError::InvalidInput(format!("state has dimension {}, A is {d}x{d}", psi.dim())));
    }
    let u = block_unitary(a, backend)?;
    run_cascade(&u, psi, n)
}

fn run_cascade(u: &ComplexMatrix, psi: &StateVector, n: usize) -> Result<CascadeState> {
    let d = psi.dim();
    let mut blocks: Vec<DVector<Complex64>> = vec![DVector::zeros(d); n + 1];
    blocks[0] = psi.to_dvector();
    let mut pair = DVector::zeros(2 * d);
    for j in 0..n {
        pair.rows_mut(0, d).copy_from(&blocks[j]);
        pair.rows_mut(d, d).copy_from(&blocks[j + 1]);
        let out = u.mul_vec(&pair);
        blocks[j] = out.rows(0, d).into_owned();
        blocks[j + 1] = out.rows(d, d).into_owned();
    }
    // block j < n picked up i^{j+1}, block n picked up i^n
    let mut phase = -I;
    let mut registers = Vec::with_capacity(n + 1);
    for (j, b) in blocks.iter().enumerate() {
        if j == n {
            phase *= I;
        }
        registers.push(StateVector::from_dvector(&(b * phase)));
        phase *= -I;
    }
    Ok(CascadeState { registers })
}

/// `d psi / dt = B psi` discretized with `n` forward-Euler steps of size `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeProblem {
    pub b: ComplexMatrix,
    pub dt: f64,
    pub steps: usize,
    pub psi0: StateVector,
}

impl OdeProblem {
    /// `I + B dt`.
    pub fn euler_matrix(&self) -> ComplexMatrix {
        &ComplexMatrix::identity(self.b.rows()) + &self.b.scale_real(self.dt)
    }

    /// Checks `sigma_max(I + B dt) <= 1 + 1e-10` and returns `sigma_max`.
    pub fn check_dissipative(&self) -> Result<f64> {
        require_square(&self.b)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(HsvtError::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(HsvtError::InvalidInput("ode needs at least one step".into()));
        }
        if self.psi0.dim() != self.b.rows() {
            return Err(HsvtError::InvalidInput(format!(
                "psi0 has dimension {}, B is {}x{}",
                self.psi0.dim(),
                self.b.rows(),
                self.b.cols()
            )));
        }
        let sigma_max = self.euler_matrix().spectral_norm();
        if sigma_max > 1.0 + tol::CONTRACTION {
            let herm = &self.b + &self.b.adjoint();
            let lam = numerics::hermitian_eig(&herm)?.eigenvalues.last().copied().unwrap_or(0.0);
            return Err(HsvtError::Generator {
                sigma_max,
                max_hermitian_eigenvalue: lam,
            });
        }
        Ok(sigma_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    pub cascade: CascadeState,
    /// `(I + B dt)^n psi0`, unnormalized.
    pub final_state: StateVector,
    /// `<psi(T)|psi(T)>`.
    pub success_prob: f64,
}

/// Runs the power cascade with `A = I + B dt`.
///
/// `psi0` need not be normalized; the cascade is linear.
pub fn ode_solve(problem: &OdeProblem, backend: &Backend) -> Result<OdeSolution> {
    problem.check_dissipative()?;
    let a = problem.euler_matrix();
    let u = block_unitary(&a, backend)?;
    let cascade = run_cascade(&u, &problem.psi0, problem.steps)?;
    let final_state = cascade.final_block().clone();
    let success_prob = final_state.norm_sqr();
    Ok(OdeSolution {
        cascade,
        final_state,
        success_prob,
    })
}

/// How the history-state inversion is carried out.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryBackend {
    /// Closed-form cascade and direct inverse of `sqrt(I - A^dagger A)`.
    Exact,
    /// Simulated cascade plus a simulated inversion.
    ///
    /// `inversion` must realize the upper-left block `i c / sqrt(1 - sigma^2)`,
    /// i.e. be compiled for the target of [`inversion_target`] with the same `c`.
    Protocol {
        cascade: PhaseSchedule,
        inversion: PhaseSchedule,
        c: f64,
    },
}

/// Target whose upper-left block is `c / sqrt(1 - sigma^2)` on `[lo, hi]`:
/// `f_c(sigma) = sqrt(1 - c^2 / (1 - sigma^2))`, tabulated on 33 Chebyshev nodes.
///
/// `c` defaults to `0.9 sqrt(1 - hi^2)` so `f_c` stays real and below 1.
pub fn inversion_target(lo: f64, hi: f64, c: Option<f64>) -> Result<(TargetFunction, f64)> {
    let c = c.unwrap_or(0.9 * (1.0 - hi * hi).sqrt());
    if !(c > 0.0 && c <= (1.0 - hi * hi).sqrt()) {
        return Err(HsvtError::InvalidInput(format!("inversion scale c = {c} out of range for sigma_hi = {hi}")));
    }
    let samples = crate::compiler::sigma_grid(lo, hi, 33)
        .into_iter()
        .map(|s| (s, (1.0 - c * c / (1.0 - s * s)).max(0.0).sqrt()))
        .collect();
    let f = TargetFunction::with_cap(TargetKind::CustomSamples { samples }, lo, hi, 1.0)?;
    Ok((f, c))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryResult {
    /// Normalized `sum_k A^k psi |k>`, registers `0..=n`.
    pub history: Vec<StateVector>,
    /// Probability that the inversion step succeeds without amplification.
    pub success_prob: f64,
    pub amplification_iterations: u64,
    /// `sigma_max / sigma_min` of `sqrt(I - A^dagger A)`.
    pub kappa_tilde: f64,
    /// Scale `c` of the inversion `c sqrt(I - A^dagger A)^{-1}`.
    pub inversion_scale: f64,
}

impl HistoryResult {
    /// The history state as one flat vector, register after register.
    pub fn flattened(&self) -> StateVector {
        StateVector {
            amplitudes: self.history.iter().flat_map(|r| r.amplitudes.iter().copied()).collect(),
        }
    }
}

/// History state `sum_{k=0}^{n} A^k psi |k>` (normalized).
///
/// The cascade leaves `sqrt(I - A^dagger A) A^k psi` in registers `k < n`;
/// applying `c sqrt(I - A^dagger A)^{-1}` there (and `c` to register `n`)
/// yields `c A^k psi` with probability `c^2 sum_k ||A^k psi||^2`.
pub fn history_state(a: &ComplexMatrix, psi: &StateVector, n: usize, backend: &HistoryBackend) -> Result<HistoryResult> {
    require_square(a)?;
    require_unit(psi)?;
    if n == 0 {
        return Err(HsvtError::InvalidInput("history_state needs n >= 1".into()));
    }
    let d = a.rows();
    if psi.dim() != d {
        return Err(HsvtError::InvalidInput(format!("state has dimension {}, A is {d}x{d}", psi.dim())));
    }
    let s = numerics::svd(a)?;
    let sigma_max = s.sigma_max();
    if sigma_max > 1.0 + tol::CONTRACTION {
        return Err(HsvtError::Normalization { sigma_max });
    }
    // eigenvalues of I - A^dagger A directly: 1 - sigma^2 cancels badly near sigma = 1
    let gram = &ComplexMatrix::identity(d) - &(&a.adjoint() * a);
    let lam = numerics::hermitian_eig(&gram)?.eigenvalues;
    let m_min = lam.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let m_max = lam.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    if m_min <= tol::INVERSION_FLOOR {
        let kappa_tilde = if m_min > 0.0 { m_max / m_min } else { f64::INFINITY };
        return Err(HsvtError::SingularInversion { kappa_tilde });
    }
    let kappa_tilde = m_max / m_min;
    let (cascade, inverted, c) = match backend {
        HistoryBackend::Exact => {
            let cascade = power_cascade(a, psi, n, &Backend::Exact)?;
            let inv = s.right_vectors.as_dmatrix().clone();
            // sqrt(I - A^dagger A)^{-1} = V diag(1 / sqrt(1 - sigma^2)) V^dagger
            let mut scaled = inv.clone();
            for (j, &sg) in s.singulars.iter().enumerate() {
                scaled.column_mut(j).scale_mut(m_min / (1.0 - sg * sg).sqrt());
            }
            let op = ComplexMatrix::from_dmatrix_unchecked(scaled * inv.adjoint());
            (cascade, op, m_min)
        }
        HistoryBackend::Protocol { cascade, inversion, c } => {
            let cascade = power_cascade(a, psi, n, &Backend::Protocol(cascade.clone()))?;
            let u = simulate_protocol(a, inversion, None)?.unitary;
            // upper-left block carries i c / sqrt(1 - sigma^2)
            let op = u.submatrix(0, 0, d, d).scale(-I);
            (cascade, op, *c)
        }
    };
    let mut unnormalized: Vec<DVector<Complex64>> = Vec::with_capacity(n + 1);
    for (j, reg) in cascade.registers.iter().enumerate() {
        let v = reg.to_dvector();
        unnormalized.push(if j < n { inverted.mul_vec(&v) } else { v * Complex64::new(c, 0.0) });
    }
    let p: f64 = unnormalized.iter().map(|v| v.norm_squared()).sum();
    if p < tol::ZERO_PROBABILITY {
        return Err(HsvtError::ZeroProbability { probability: p });
    }
    let norm = Complex64::new(p.sqrt(), 0.0);
    Ok(HistoryResult {
        history: unnormalized.iter().map(|v| StateVector::from_dvector(&(v / norm))).collect(),
        success_prob: p,
        amplification_iterations: amplification_iterations(p),
        kappa_tilde,
        inversion_scale: c,
    })
}
