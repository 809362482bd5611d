//! Phase-schedule synthesis.
//!
//! A schedule is an ordered list of steps `(phi_k, t_k)` followed by a fixed
//! output frame `exp(i theta Z)`. Inside the invariant plane of a singular
//! value `sigma` (basis `r (+) 0`, `0 (+) l`) the conjugated generator
//! `G_phi` acts as `sigma (cos(phi) X - sin(phi) Y)`, so the whole protocol
//! reduces to the `2 x 2` unitary
//!
//! ```text
//! R(sigma) = diag(e^{i theta}, e^{-i theta}) * prod_k exp(-i sigma t_k (cos(phi_k) X - sin(phi_k) Y))
//! ```
//!
//! (later steps on the left). Synthesis fits `R(sigma)` to the plane block
//! `i [[sqrt(1 - f^2), f], [f, -sqrt(1 - f^2)]]` of the target unitary on a
//! Chebyshev grid by Levenberg-Marquardt with an exact Jacobian.
//!
//! The product part equals the identity at `sigma = 0`, which pins its
//! diagonal corner to 1 there; the `theta = pi/2` frame (`iZ`) carries the
//! factor `i` of the target, so the product only has to realize
//! `sqrt(1 - f^2) I + i f Y`, which is also the identity at `sigma = 0`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HsvtError, Result};
use crate::numerics::{I, ONE, ZERO};
use crate::target::{chebyshev_nodes, degree_for_accuracy, TargetFunction};

/// Axis convention recorded in serialized schedules.
pub const CONVENTION: &str = "cosX-sinY";
pub const SCHEDULE_HEADER: &str = "# hsvt-schedule v1";
pub const MAX_DEGREE: usize = 200;
/// Frame used by synthesized schedules: `exp(i pi/2 Z) = iZ`.
pub const SYNTHESIS_FRAME: f64 = FRAC_PI_2;

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut a = phi.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One alternating step: evolve under `G_phi` for time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStep {
    phi: f64,
    t: f64,
}

impl PhaseStep {
    pub fn new(phi: f64, t: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(HsvtError::InvalidInput(format!("phase {phi} is not finite")));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(HsvtError::InvalidInput(format!("step time must be positive, got {t}")));
        }
        Ok(Self { phi: wrap_angle(phi), t })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Ordered steps plus the output frame angle `theta` of `exp(i theta Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    steps: Vec<PhaseStep>,
    frame_phase: f64,
}

impl PhaseSchedule {
    /// Schedule without an output frame.
    pub fn new(steps: Vec<PhaseStep>) -> Self {
        Self { steps, frame_phase: 0.0 }
    }

    pub fn with_frame(steps: Vec<PhaseStep>, frame_phase: f64) -> Result<Self> {
        if !frame_phase.is_finite() {
            return Err(HsvtError::InvalidInput("frame phase must be finite".into()));
        }
        Ok(Self {
            steps,
            frame_phase: wrap_angle(frame_phase),
        })
    }

    /// Steps with `t = 1` and the given phases.
    pub fn from_phases(phases: &[f64], frame_phase: f64) -> Result<Self> {
        let steps = phases.iter().map(|&p| PhaseStep::new(p, 1.0)).collect::<Result<Vec<_>>>()?;
        Self::with_frame(steps, frame_phase)
    }

    pub fn steps(&self) -> &[PhaseStep] {
        &self.steps
    }

    pub fn degree(&self) -> usize {
        self.steps.len()
    }

    pub fn frame_phase(&self) -> f64 {
        self.frame_phase
    }

    pub fn convention(&self) -> &'static str {
        CONVENTION
    }

    /// Text form: header line then one `phi,t` line per step (17 significant digits).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{SCHEDULE_HEADER} k={} convention={CONVENTION} frame={:.16e}\n",
            self.degree(),
            self.frame_phase
        );
        for s in &self.steps {
            let _ = writeln!(out, "{:.16e},{:.16e}", s.phi, s.t);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, field: &str, message: String| HsvtError::Parse {
            line,
            field: field.to_string(),
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "header", "empty schedule file".into()))?;
        let header = header.trim();
        let rest = header
            .strip_prefix(SCHEDULE_HEADER)
            .ok_or_else(|| parse_err(hline + 1, "header", format!("expected `{SCHEDULE_HEADER}`")))?;
        let mut k = None;
        let mut frame = 0.0;
        let mut convention = None;
        for token in rest.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| parse_err(hline + 1, token, "expected key=value".into()))?;
            match key {
                "k" => {
                    k = Some(value.parse::<usize>().map_err(|e| parse_err(hline + 1, "k", e.to_string()))?)
                }
                "convention" => convention = Some(value.to_string()),
                "frame" => {
                    frame = value
                        .parse::<f64>()
                        .map_err(|e| parse_err(hline + 1, "frame", e.to_string()))?
                }
                other => return Err(parse_err(hline + 1, other, "unknown header key".into())),
            }
        }
        let k = k.ok_or_else(|| parse_err(hline + 1, "k", "missing step count".into()))?;
        match convention.as_deref() {
            Some(CONVENTION) => {}
            Some(other) => {
                return Err(parse_err(hline + 1, "convention", format!("unsupported convention `{other}`")))
            }
            None => return Err(parse_err(hline + 1, "convention", "missing convention".into())),
        }
        let mut steps = Vec::with_capacity(k);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let (phi, t) = line
                .trim()
                .split_once(',')
                .ok_or_else(|| parse_err(lineno, "phi,t", "expected two comma-separated values".into()))?;
            let phi: f64 = phi.trim().parse().map_err(|e: std::num::ParseFloatError| parse_err(lineno, "phi", e.to_string()))?;
            let t: f64 = t.trim().parse().map_err(|e: std::num::ParseFloatError| parse_err(lineno, "t", e.to_string()))?;
            let step = PhaseStep::new(phi, t).map_err(|e| parse_err(lineno, "t", e.to_string()))?;
            steps.push(step);
        }
        if steps.len() != k {
            return Err(parse_err(hline + 1, "k", format!("header says k={k} but file has {} steps", steps.len())));
        }
        Self::with_frame(steps, frame).map_err(|e| parse_err(hline + 1, "frame", e.to_string()))
    }
}

/// `2 x 2` unitary of the protocol inside one invariant plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedUnitary(pub [[Complex64; 2]; 2]);

impl ReducedUnitary {
    pub fn identity() -> Self {
        Self([[ONE, ZERO], [ZERO, ONE]])
    }

    /// Upper-left entry (the `P` corner).
    pub fn p_corner(&self) -> Complex64 {
        self.0[0][0]
    }

    /// Lower-left entry (the `Q` corner, carries `i f(sigma)` in the target).
    pub fn q_corner(&self) -> Complex64 {
        self.0[1][0]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        Self([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    /// `||U^dagger U - I||_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let u = &self.0;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let g = u[0][i].conj() * u[0][j] + u[1][i].conj() * u[1][j];
                let e = if i == j { ONE } else { ZERO };
                worst = worst.max((g - e).norm());
            }
        }
        worst
    }

    /// Operator-norm distance to another `2 x 2` matrix.
    pub fn distance(&self, other: &Self) -> f64 {
        let d = DMatrix::from_fn(2, 2, |i, j| self.0[i][j] - other.0[i][j]);
        d.singular_values().max()
    }
}

/// `exp(-i sigma t (cos(phi) X - sin(phi) Y))`.
fn step_factor(phi: f64, t: f64, sigma: f64) -> ReducedUnitary {
    let (s, c) = (sigma * t).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    ReducedUnitary([[Complex64::new(c, 0.0), -I * s * e], [-I * s * e.conj(), Complex64::new(c, 0.0)]])
}

fn frame_factor(theta: f64) -> ReducedUnitary {
    ReducedUnitary([
        [Complex64::from_polar(1.0, theta), ZERO],
        [ZERO, Complex64::from_polar(1.0, -theta)],
    ])
}

/// The protocol restricted to the invariant plane of singular value `sigma`.
pub fn reduced_model(schedule: &PhaseSchedule, sigma: f64) -> ReducedUnitary {
    let mut u = ReducedUnitary::identity();
    for s in &schedule.steps {
        u = step_factor(s.phi, s.t, sigma).mul(&u);
    }
    frame_factor(schedule.frame_phase).mul(&u)
}

/// Plane block of the target unitary: `i [[sqrt(1 - f^2), f], [f, -sqrt(1 - f^2)]]`.
pub fn reduced_target(f_value: f64) -> ReducedUnitary {
    let c = (1.0 - f_value * f_value).max(0.0).sqrt();
    ReducedUnitary([[I * c, I * f_value], [I * f_value, -I * c]])
}

/// `max_grid | |P|^2 + |Q|^2 - 1 |` over the first column of the reduced model.
pub fn verify_pq_constraint(schedule: &PhaseSchedule, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&s| {
            let u = reduced_model(schedule, s);
            (u.p_corner().norm_sqr() + u.q_corner().norm_sqr() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Total evolution time and number of alternating steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleCost {
    pub total_time: f64,
    pub steps: usize,
}

pub fn schedule_cost(schedule: &PhaseSchedule) -> ScheduleCost {
    ScheduleCost {
        total_time: schedule.steps.iter().map(|s| s.t).sum(),
        steps: schedule.steps.len(),
    }
}

/// Chebyshev-spaced nodes in sigma over `[lo, hi]`, ascending.
pub fn sigma_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut g: Vec<f64> = chebyshev_nodes(count)
        .into_iter()
        .map(|u| 0.5 * (lo + hi) + 0.5 * (hi - lo) * u)
        .collect();
    g.reverse();
    g
}

/// Evenly spaced nodes including both ends.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// Angle-finding options.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub target_eps: f64,
    pub seed: u64,
    /// Extra randomized starts after the all-zero initial phases.
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    /// Also optimize the step times (opt-in; default all `t = 1`).
    pub variable_times: bool,
    /// Output frame angle; synthesized schedules use `pi/2`.
    pub frame_phase: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            target_eps: 1e-3,
            seed: 0,
            restarts: 8,
            max_iterations: 2000,
            gradient_tol: 1e-12,
            variable_times: false,
            frame_phase: SYNTHESIS_FRAME,
        }
    }
}

/// Audit trail of one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub k: usize,
    pub grid: Vec<f64>,
    /// Operator distance between the reduced model and the plane target at each node.
    pub residual_per_node: Vec<f64>,
    pub max_residual: f64,
    /// Max residual on an independent uniform grid ten times denser.
    pub validation_max_residual: f64,
    pub target_eps: f64,
    pub iterations: usize,
    pub starts: usize,
    pub converged: bool,
}

/// Default grid size `4k`.
pub fn default_grid_size(k: usize) -> usize {
    4 * k
}

/// Fits a `k`-step schedule to the target on `grid_size` Chebyshev nodes.
///
/// Never fails on non-convergence: the best schedule found is returned with
/// `converged = false`.
pub fn synthesize_schedule(
    f: &TargetFunction,
    k: usize,
    grid_size: usize,
    opts: &SolverOptions,
) -> Result<(PhaseSchedule, SynthesisReport)> {
    if k == 0 || k > MAX_DEGREE {
        return Err(HsvtError::InvalidInput(format!("degree must lie in 1..={MAX_DEGREE}, got {k}")));
    }
    if grid_size < 2 * k {
        return Err(HsvtError::InvalidInput(format!("grid_size must be >= 2k = {}, got {grid_size}", 2 * k)));
    }
    if opts.target_eps.is_nan() || opts.target_eps <= 0.0 {
        return Err(HsvtError::InvalidInput("target_eps must be positive".into()));
    }
    let grid = sigma_grid(f.sigma_lo(), f.sigma_hi(), grid_size);
    let mut targets = Vec::with_capacity(grid.len());
    for &s in &grid {
        let v = f.eval(s)?;
        if v.abs() > f.cap() {
            return Err(HsvtError::Cap { value: v.abs(), cap: f.cap() });
        }
        targets.push(reduced_target(v));
    }
    let problem = FitProblem {
        grid: &grid,
        targets: &targets,
        frame: frame_factor(opts.frame_phase),
        variable_times: opts.variable_times,
        k,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut starts = 0;
    for attempt in 0..=opts.restarts {
        let init = match (&best, attempt) {
            (_, 0) | (None, _) => problem.initial_params(),
            (Some((params, _)), _) => {
                // perturb the best point found so far; the spread grows with each restart
                let spread = 0.25 * attempt as f64;
                let mut p = params.clone();
                for x in p.iter_mut().take(k) {
                    *x += spread * (rng.random::<f64>() - 0.5) * 2.0;
                }
                p
            }
        };
        let outcome = levenberg_marquardt(&problem, init, opts);
        iterations += outcome.iterations;
        starts += 1;
        let better = best.as_ref().is_none_or(|(_, r)| outcome.max_residual < *r);
        if better {
            best = Some((outcome.params, outcome.max_residual));
        }
        if best.as_ref().is_some_and(|(_, r)| *r <= opts.target_eps / 2.0) {
            break;
        }
    }
    let (params, _) = best.expect("at least one start");
    let schedule = problem.schedule(&params, opts.frame_phase)?;

    let residual_per_node: Vec<f64> = grid
        .iter()
        .zip(&targets)
        .map(|(&s, t)| reduced_model(&schedule, s).distance(t))
        .collect();
    let max_residual = residual_per_node.iter().copied().fold(0.0, f64::max);
    let validation_max_residual = uniform_grid(f.sigma_lo(), f.sigma_hi(), 10 * grid_size)
        .into_iter()
        .map(|s| reduced_model(&schedule, s).distance(&reduced_target(f.eval_analytic(s))))
        .fold(0.0, f64::max);
    let report = SynthesisReport {
        k,
        grid,
        residual_per_node,
        max_residual,
        validation_max_residual,
        target_eps: opts.target_eps,
        iterations,
        starts,
        converged: max_residual <= opts.target_eps,
    };
    Ok((schedule, report))
}

/// Synthesizes at increasing degree until the residual meets `opts.target_eps`.
///
/// Starts at `k_start` (default: the Chebyshev estimate for the gap
/// `1 - sigma_hi`) and grows `k` by a quarter, at least 2, after each miss.
/// Returns the last attempt, converged or not.
pub fn synthesize_to_accuracy(
    f: &TargetFunction,
    k_start: Option<usize>,
    escalations: usize,
    opts: &SolverOptions,
) -> Result<(PhaseSchedule, SynthesisReport)> {
    let mut k = match k_start {
        Some(k) => k,
        None => degree_for_accuracy(1.0 - f.sigma_hi(), opts.target_eps)?.k,
    }
    .clamp(1, MAX_DEGREE);
    let mut attempt = 0;
    loop {
        let (schedule, report) = synthesize_schedule(f, k, default_grid_size(k), opts)?;
        if report.converged || attempt >= escalations || k >= MAX_DEGREE {
            return Ok((schedule, report));
        }
        attempt += 1;
        k = (k + (k / 4).max(2)).min(MAX_DEGREE);
    }
}

struct FitProblem<'a> {
    grid: &'a [f64],
    targets: &'a [ReducedUnitary],
    frame: ReducedUnitary,
    variable_times: bool,
    k: usize,
}

struct FitOutcome {
    params: Vec<f64>,
    max_residual: f64,
    iterations: usize,
}

impl FitProblem<'_> {
    fn n_params(&self) -> usize {
        if self.variable_times {
            2 * self.k
        } else {
            self.k
        }
    }

    /// Phases all zero; with variable times the trailing parameters are `ln t = 0`.
    fn initial_params(&self) -> Vec<f64> {
        vec![0.0; self.n_params()]
    }

    fn times(&self, params: &[f64]) -> Vec<f64> {
        if self.variable_times {
            params[self.k..].iter().map(|u| u.exp()).collect()
        } else {
            vec![1.0; self.k]
        }
    }

    fn schedule(&self, params: &[f64], frame: f64) -> Result<PhaseSchedule> {
        let times = self.times(params);
        let steps = params[..self.k]
            .iter()
            .zip(times)
            .map(|(&p, t)| PhaseStep::new(p, t))
            .collect::<Result<Vec<_>>>()?;
        PhaseSchedule::with_frame(steps, frame)
    }

    /// Residual vector (re/im of the first-column error at every node) and,
    /// optionally, its Jacobian. Also returns the max per-node residual.
    fn evaluate(&self, params: &[f64], with_jacobian: bool) -> (DVector<f64>, Option<DMatrix<f64>>, f64) {
        let k = self.k;
        let times = self.times(params);
        let rows = 4 * self.grid.len();
        let mut res = DVector::zeros(rows);
        let mut jac = with_jacobian.then(|| DMatrix::zeros(rows, self.n_params()));
        let mut worst: f64 = 0.0;
        let mut cols: Vec<[Complex64; 2]> = vec![[ZERO; 2]; k + 1];
        let mut factors: Vec<ReducedUnitary> = Vec::with_capacity(k);
        for (g, (&sigma, target)) in self.grid.iter().zip(self.targets).enumerate() {
            factors.clear();
            factors.extend((0..k).map(|j| step_factor(params[j], times[j], sigma)));
            // cols[j] = F_j ... F_1 e_1 (cols[0] = e_1)
            cols[0] = [ONE, ZERO];
            for j in 0..k {
                cols[j + 1] = apply(&factors[j], cols[j]);
            }
            let out = apply(&self.frame, cols[k]);
            let d0 = out[0] - target.0[0][0];
            let d1 = out[1] - target.0[1][0];
            worst = worst.max((d0.norm_sqr() + d1.norm_sqr()).sqrt());
            let r0 = 4 * g;
            res[r0] = d0.re;
            res[r0 + 1] = d0.im;
            res[r0 + 2] = d1.re;
            res[r0 + 3] = d1.im;
            if let Some(jac) = jac.as_mut() {
                // left = frame * F_k ... F_{j+1}, accumulated from the end
                let mut left = self.frame;
                for j in (0..k).rev() {
                    let phi = params[j];
                    let t = times[j];
                    let (s, c) = (sigma * t).sin_cos();
                    let e = Complex64::from_polar(1.0, phi);
                    let dphi = ReducedUnitary([[ZERO, e * s], [-e.conj() * s, ZERO]]);
                    let dv = apply(&left.mul(&dphi), cols[j]);
                    set_jac(jac, r0, j, dv);
                    if self.variable_times {
                        // d/d(ln t) = t * d/dt
                        let w = sigma * t;
                        let dt = ReducedUnitary([
                            [Complex64::new(-w * s, 0.0), -I * w * c * e],
                            [-I * w * c * e.conj(), Complex64::new(-w * s, 0.0)],
                        ]);
                        let dv = apply(&left.mul(&dt), cols[j]);
                        set_jac(jac, r0, k + j, dv);
                    }
                    left = left.mul(&factors[j]);
                }
            }
        }
        (res, jac, worst)
    }
}

fn apply(m: &ReducedUnitary, v: [Complex64; 2]) -> [Complex64; 2] {
    [m.0[0][0] * v[0] + m.0[0][1] * v[1], m.0[1][0] * v[0] + m.0[1][1] * v[1]]
}

fn set_jac(jac: &mut DMatrix<f64>, r0: usize, col: usize, dv: [Complex64; 2]) {
    jac[(r0, col)] = dv[0].re;
    jac[(r0 + 1, col)] = dv[0].im;
    jac[(r0 + 2, col)] = dv[1].re;
    jac[(r0 + 3, col)] = dv[1].im;
}

/// Levenberg-Marquardt with Marquardt diagonal scaling and Nielsen damping updates.
fn levenberg_marquardt(problem: &FitProblem<'_>, mut params: Vec<f64>, opts: &SolverOptions) -> FitOutcome {
    let n = params.len();
    let (mut res, jac, mut worst) = problem.evaluate(&params, true);
    let mut jac = jac.expect("jacobian requested");
    let mut cost = res.norm_squared();
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut stalls = 0;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if worst <= opts.target_eps / 2.0 {
            break;
        }
        let jt = jac.transpose();
        let grad = &jt * &res;
        if grad.amax() <= opts.gradient_tol {
            break;
        }
        let jtj = &jt * &jac;
        iterations += 1;
        let mut damped = jtj.clone();
        for i in 0..n {
            damped[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let step = chol.solve(&(-&grad));
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        let (trial_res, _, trial_worst) = problem.evaluate(&trial, false);
        let trial_cost = trial_res.norm_squared();
        // predicted reduction of the linear model
        let predicted = -(step.dot(&grad) * 2.0 + step.dot(&(&jtj * &step)));
        let rho = if predicted > 0.0 { (cost - trial_cost) / predicted } else { -1.0 };
        if rho > 0.0 {
            let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
            stalls = if rel < 1e-13 { stalls + 1 } else { 0 };
            params = trial;
            let (r, j, w) = problem.evaluate(&params, true);
            res = r;
            jac = j.expect("jacobian requested");
            worst = w;
            debug_assert!((worst - trial_worst).abs() < 1e-12);
            cost = trial_cost;
            lambda *= (1.0_f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            lambda = lambda.max(1e-15);
            nu = 2.0;
            if stalls >= 20 {
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    FitOutcome {
        params,
        max_residual: worst,
        iterations,
    }
}
