//! Python bindings for `hqsvt`.
//!
//! Matrices cross the boundary as lists of rows of Python `complex`, states as
//! flat lists of `complex`.

use hqsvt::applications::{self, Backend, HistoryBackend, OdeProblem, StateVector};
use hqsvt::compiler::{self, PhaseSchedule, PhaseStep, SolverOptions, SynthesisReport};
use hqsvt::protocol::{self, ControlNoiseModel};
use hqsvt::target::{TargetFunction, TargetKind, DEFAULT_SIGMA_HI, DEFAULT_SIGMA_LO};
use hqsvt::{ComplexMatrix, HsvtError};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(hqsvt_py, HsvtException, PyValueError, "Raised for every library error.");
create_exception!(hqsvt_py, NotConvergedError, HsvtException, "Synthesis missed its accuracy target.");

fn to_py(e: HsvtError) -> PyErr {
    match e {
        HsvtError::NotConverged { .. } => NotConvergedError::new_err(e.to_string()),
        _ => HsvtException::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<Complex64>>;

fn matrix(rows: Rows) -> PyResult<ComplexMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(HsvtException::new_err("matrix rows have different lengths"));
    }
    ComplexMatrix::from_row_major(r, c, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn rows(m: &ComplexMatrix) -> Rows {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

fn state(amplitudes: Vec<Complex64>) -> PyResult<StateVector> {
    StateVector::new(amplitudes).map_err(to_py)
}

/// Target function `f` on `[sigma_lo, sigma_hi]`.
#[pyclass(name = "TargetFunction", module = "hqsvt_py", frozen)]
struct PyTarget(TargetFunction);

#[pymethods]
impl PyTarget {
    /// `kind` is one of identity, scaled-power, inverse-sqrt-complement, sine, custom.
    #[new]
    #[pyo3(signature = (kind="identity", sigma_lo=DEFAULT_SIGMA_LO, sigma_hi=DEFAULT_SIGMA_HI, p=1.0, c=1.0, samples=None, cap=None))]
    fn new(
        kind: &str,
        sigma_lo: f64,
        sigma_hi: f64,
        p: f64,
        c: f64,
        samples: Option<Vec<(f64, f64)>>,
        cap: Option<f64>,
    ) -> PyResult<Self> {
        let kind = match kind {
            "identity" => TargetKind::Identity,
            "scaled-power" => TargetKind::ScaledPower { p, c },
            "inverse-sqrt-complement" => TargetKind::InverseSqrtComplement { c },
            "sine" => TargetKind::Sine,
            "custom" => TargetKind::CustomSamples {
                samples: samples.ok_or_else(|| HsvtException::new_err("custom targets need samples"))?,
            },
            other => return Err(HsvtException::new_err(format!("unknown target kind {other:?}"))),
        };
        let f = match cap {
            Some(cap) => TargetFunction::with_cap(kind, sigma_lo, sigma_hi, cap),
            None => TargetFunction::new(kind, sigma_lo, sigma_hi),
        };
        f.map(Self).map_err(to_py)
    }

    #[getter]
    fn sigma_lo(&self) -> f64 {
        self.0.sigma_lo()
    }

    #[getter]
    fn sigma_hi(&self) -> f64 {
        self.0.sigma_hi()
    }

    /// `f(sigma)`; raises outside the domain.
    fn __call__(&self, sigma: f64) -> PyResult<f64> {
        self.0.eval(sigma).map_err(to_py)
    }

    fn contains(&self, sigma: f64) -> bool {
        self.0.contains(sigma)
    }
}

/// Ordered `(phi, t)` steps plus a terminal frame phase.
#[pyclass(name = "PhaseSchedule", module = "hqsvt_py", frozen)]
struct PySchedule(PhaseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (phases, times=None, frame_phase=0.0))]
    fn new(phases: Vec<f64>, times: Option<Vec<f64>>, frame_phase: f64) -> PyResult<Self> {
        let times = times.unwrap_or_else(|| vec![1.0; phases.len()]);
        if times.len() != phases.len() {
            return Err(HsvtException::new_err("phases and times differ in length"));
        }
        let steps = phases
            .iter()
            .zip(&times)
            .map(|(&p, &t)| PhaseStep::new(p, t))
            .collect::<hqsvt::Result<Vec<_>>>()
            .map_err(to_py)?;
        PhaseSchedule::with_frame(steps, frame_phase).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        PhaseSchedule::from_text(text).map(Self).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn phases(&self) -> Vec<f64> {
        self.0.steps().iter().map(PhaseStep::phi).collect()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.steps().iter().map(PhaseStep::t).collect()
    }

    #[getter]
    fn frame_phase(&self) -> f64 {
        self.0.frame_phase()
    }

    fn __len__(&self) -> usize {
        self.0.degree()
    }

    fn __repr__(&self) -> String {
        format!("PhaseSchedule(k={}, frame_phase={})", self.0.degree(), self.0.frame_phase())
    }

    /// 2x2 action on the invariant plane of singular value `sigma`.
    fn reduced_model(&self, sigma: f64) -> Rows {
        compiler::reduced_model(&self.0, sigma).0.iter().map(|r| r.to_vec()).collect()
    }
}

/// Outcome of a synthesis run.
#[pyclass(name = "SynthesisReport", module = "hqsvt_py", frozen, get_all)]
struct PyReport {
    k: usize,
    max_residual: f64,
    validation_max_residual: f64,
    target_eps: f64,
    converged: bool,
    iterations: usize,
    residual_per_node: Vec<f64>,
    grid: Vec<f64>,
}

impl From<SynthesisReport> for PyReport {
    fn from(r: SynthesisReport) -> Self {
        Self {
            k: r.k,
            max_residual: r.max_residual,
            validation_max_residual: r.validation_max_residual,
            target_eps: r.target_eps,
            converged: r.converged,
            iterations: r.iterations,
            residual_per_node: r.residual_per_node,
            grid: r.grid,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "SynthesisReport(k={}, max_residual={:e}, converged={})",
            self.k,
            self.max_residual,
            if self.converged { "True" } else { "False" }
        )
    }
}

/// Fits a schedule to `f`. With `k=None` the degree grows until `eps` is met.
///
/// Returns `(schedule, report)` even when the target is missed.
#[pyfunction]
#[pyo3(signature = (f, k=None, eps=1e-3, seed=0, restarts=8, max_iterations=2000, variable_times=false, grid_size=None))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    f: &PyTarget,
    k: Option<usize>,
    eps: f64,
    seed: u64,
    restarts: usize,
    max_iterations: usize,
    variable_times: bool,
    grid_size: Option<usize>,
) -> PyResult<(PySchedule, PyReport)> {
    let opts = SolverOptions {
        target_eps: eps,
        seed,
        restarts,
        max_iterations,
        variable_times,
        ..SolverOptions::default()
    };
    let f = &f.0;
    let (s, r) = py
        .detach(|| match k {
            Some(k) => compiler::synthesize_schedule(f, k, grid_size.unwrap_or(compiler::default_grid_size(k)), &opts),
            None => compiler::synthesize_to_accuracy(f, None, 6, &opts),
        })
        .map_err(to_py)?;
    Ok((PySchedule(s), r.into()))
}

/// Unitary of the alternating protocol on the embedding of `a`.
#[pyfunction]
#[pyo3(signature = (a, schedule, noise_eta=None, seed=0))]
fn simulate(a: Rows, schedule: &PySchedule, noise_eta: Option<f64>, seed: u64) -> PyResult<Rows> {
    let a = matrix(a)?;
    let noise = noise_eta.map(|eta| ControlNoiseModel::new(eta, seed)).transpose().map_err(to_py)?;
    let r = protocol::simulate_protocol(&a, &schedule.0, noise.as_ref()).map_err(to_py)?;
    Ok(rows(&r.unitary))
}

/// Ideal unitary realizing `f` on the singular values of `a`.
#[pyfunction]
fn target_unitary(a: Rows, f: &PyTarget) -> PyResult<Rows> {
    let t = protocol::build_target_unitary(&matrix(a)?, &f.0).map_err(to_py)?;
    Ok(rows(t.matrix()))
}

/// Spectral-norm distance between two matrices.
#[pyfunction]
fn op_distance(u: Rows, v: Rows) -> PyResult<f64> {
    hqsvt::numerics::op_distance(&matrix(u)?, &matrix(v)?).map_err(to_py)
}

/// Simulates `schedule` on `a` and compares with the target of `f`.
#[pyfunction]
fn verify<'py>(py: Python<'py>, a: Rows, schedule: &PySchedule, f: &PyTarget, eps: f64) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(a)?;
    let target = protocol::build_target_unitary(&a, &f.0).map_err(to_py)?;
    let result = protocol::simulate_protocol(&a, &schedule.0, None).map_err(to_py)?;
    let v = protocol::verify(&result, &target, eps).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("distance", v.distance)?;
    d.set_item("eps", v.eps)?;
    d.set_item("passed", v.pass)?;
    d.set_item("kernel_residual", v.kernel_residual)?;
    d.set_item("max_in_domain", v.max_in_domain)?;
    d.set_item(
        "subspaces",
        v.subspaces.iter().map(|s| (s.sigma, s.residual, s.in_domain)).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// `(eta, mean_distance, max_distance)` for each `eta`.
#[pyfunction]
#[pyo3(signature = (a, schedule, etas, trials=200, seed=0))]
fn noise_sweep(py: Python<'_>, a: Rows, schedule: &PySchedule, etas: Vec<f64>, trials: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
    let a = matrix(a)?;
    let s = &schedule.0;
    let rows = py
        .detach(|| protocol::noise_sweep(&a, s, &etas, trials, seed))
        .map_err(to_py)?;
    Ok(rows.iter().map(|r| (r.eta, r.mean_distance, r.max_distance)).collect())
}

fn backend(schedule: Option<&PySchedule>) -> Backend {
    schedule.map_or(Backend::Exact, |s| Backend::Protocol(s.0.clone()))
}

/// `(A psi / |A psi|, success probability)`; exact unless a schedule is given.
#[pyfunction]
#[pyo3(signature = (a, psi, schedule=None))]
fn apply_matrix(a: Rows, psi: Vec<Complex64>, schedule: Option<&PySchedule>) -> PyResult<(Vec<Complex64>, f64)> {
    let r = applications::apply_matrix(&matrix(a)?, &state(psi)?, &backend(schedule)).map_err(to_py)?;
    Ok((r.state.amplitudes().to_vec(), r.success_prob))
}

/// The `n + 1` cascade registers; the last one holds `A^n psi`.
#[pyfunction]
#[pyo3(signature = (a, psi, n, schedule=None))]
fn power_cascade(a: Rows, psi: Vec<Complex64>, n: usize, schedule: Option<&PySchedule>) -> PyResult<Vec<Vec<Complex64>>> {
    let c = applications::power_cascade(&matrix(a)?, &state(psi)?, n, &backend(schedule)).map_err(to_py)?;
    Ok(c.registers.iter().map(|r| r.amplitudes().to_vec()).collect())
}

/// Forward-Euler `(I + B dt)^steps psi0`.
#[pyfunction]
#[pyo3(signature = (b, psi0, dt, steps, schedule=None))]
fn ode_solve(b: Rows, psi0: Vec<Complex64>, dt: f64, steps: usize, schedule: Option<&PySchedule>) -> PyResult<Vec<Complex64>> {
    let problem = OdeProblem {
        b: matrix(b)?,
        dt,
        steps,
        psi0: state(psi0)?,
    };
    let sol = applications::ode_solve(&problem, &backend(schedule)).map_err(to_py)?;
    Ok(sol.final_state.amplitudes().to_vec())
}

/// `(history, success_prob, kappa_tilde)` with `history` the normalized registers.
#[pyfunction]
fn history_state(a: Rows, psi: Vec<Complex64>, n: usize) -> PyResult<(Vec<Vec<Complex64>>, f64, f64)> {
    let h = applications::history_state(&matrix(a)?, &state(psi)?, n, &HistoryBackend::Exact).map_err(to_py)?;
    Ok((
        h.history.iter().map(|r| r.amplitudes().to_vec()).collect(),
        h.success_prob,
        h.kappa_tilde,
    ))
}

#[pymodule]
fn hqsvt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HsvtException", m.py().get_type::<HsvtException>())?;
    m.add("NotConvergedError", m.py().get_type::<NotConvergedError>())?;
    m.add_class::<PyTarget>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(target_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(op_distance, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(noise_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(apply_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(power_cascade, m)?)?;
    m.add_function(wrap_pyfunction!(ode_solve, m)?)?;
    m.add_function(wrap_pyfunction!(history_state, m)?)?;
    Ok(())
}
