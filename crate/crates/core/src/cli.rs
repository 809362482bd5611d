//! Command-line entry points.
//!
//! Every command takes the same set of flags, which mirror the keys of a JSON
//! config file (`--config`). Flags override file values; unknown file keys are
//! rejected.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::applications::{
    self, domain_for, history_state, inverse_block_encode, inversion_target, ode_solve, Backend, HistoryBackend,
    OdeProblem, PipelineOptions, StateVector,
};
use crate::compiler::{
    default_grid_size, schedule_cost, synthesize_schedule, synthesize_to_accuracy, PhaseSchedule, SolverOptions,
    MAX_DEGREE,
};
use crate::error::{HsvtError, Result};
use crate::io;
use crate::numerics::ComplexMatrix;
use crate::protocol::{build_target_unitary, noise_sweep, simulate_protocol, verify, ControlNoiseModel};
use crate::sampling;
use crate::target::{TargetFunction, TargetKind, DEFAULT_SIGMA_HI, DEFAULT_SIGMA_LO};
use crate::tol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;

/// Exit status for an error class.
pub fn exit_code(e: &HsvtError) -> i32 {
    match e {
        HsvtError::Config(_) => EXIT_CONFIG,
        HsvtError::Parse { .. } => EXIT_PARSE,
        HsvtError::NotConverged { .. } => EXIT_NOT_CONVERGED,
        HsvtError::Io(_) => EXIT_IO,
        _ => EXIT_PRECONDITION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hqsvt", version, about = "Compile and simulate Hamiltonian singular value transformations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a phase schedule to a target function.
    Synthesize(RunArgs),
    /// Simulate a schedule on a matrix and compare with the target unitary.
    Simulate(RunArgs),
    /// Residual-vs-degree or distance-vs-noise table as CSV.
    Sweep(RunArgs),
    /// Apply a matrix to a state by post-selection.
    Apply(RunArgs),
    /// Forward-Euler integration of d psi/dt = B psi through a power cascade.
    Ode(RunArgs),
    /// History state sum_k A^k psi |k>.
    History(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synthesize(_) => "synthesize",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Apply(_) => "apply",
            Command::Ode(_) => "ode",
            Command::History(_) => "history",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Synthesize(a)
            | Command::Simulate(a)
            | Command::Sweep(a)
            | Command::Apply(a)
            | Command::Ode(a)
            | Command::History(a) => a,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with any of the options below (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionName {
    Identity,
    ScaledPower,
    InverseSqrtComplement,
    Sine,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendName {
    Exact,
    Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Synthesis residual for each degree in `ks`.
    Synthesis,
    /// Chebyshev truncation residual of f(arccos x) for each degree in `ks`.
    Chebyshev,
    /// Noisy-vs-noiseless distance for each value in `etas`.
    Noise,
}

/// All options of all commands. Unset options take documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Target function [default: identity].
    #[arg(long, value_enum)]
    pub function: Option<FunctionName>,
    /// Exponent p of scaled-power [default: 1].
    #[arg(long)]
    pub power: Option<f64>,
    /// Coefficient c of scaled-power / inverse-sqrt-complement [default: 1].
    #[arg(long)]
    pub coefficient: Option<f64>,
    /// (sigma, f) pairs of the custom function (config file only).
    #[arg(skip)]
    pub samples: Option<Vec<(f64, f64)>>,
    /// Lower end of the synthesis domain [default: 0.05].
    #[arg(long)]
    pub sigma_lo: Option<f64>,
    /// Upper end of the synthesis domain [default: 0.95].
    #[arg(long)]
    pub sigma_hi: Option<f64>,
    /// Bound on |f| over the domain [default: 0.999].
    #[arg(long)]
    pub cap: Option<f64>,
    /// Target accuracy [default: 1e-3].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of steps; by default chosen from eps.
    #[arg(long)]
    pub k: Option<usize>,
    /// Synthesis grid size [default: 4k].
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Seed for every random choice [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Randomized restarts of the angle finder [default: 8].
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Iteration cap per start [default: 2000].
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Also optimize step times [default: false].
    #[arg(long)]
    pub variable_times: Option<bool>,
    /// Degree increases tried when k is automatic [default: 6].
    #[arg(long)]
    pub escalations: Option<usize>,
    /// Sweep type [default: synthesis].
    #[arg(long, value_enum)]
    pub sweep: Option<SweepKind>,
    /// Degrees for synthesis/chebyshev sweeps.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub ks: Option<Vec<usize>>,
    /// Relative pulse-area errors for noise sweeps.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub etas: Option<Vec<f64>>,
    /// Trials per eta [default: 200].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Pulse-area error for a single noisy simulation [default: none].
    #[arg(long)]
    pub noise_eta: Option<f64>,
    /// Dimension of the random matrix used when no matrix file is given (noise sweep).
    #[arg(long)]
    pub dim: Option<usize>,
    /// ODE time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// ODE steps or history length n.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Application backend [default: exact].
    #[arg(long, value_enum)]
    pub backend: Option<BackendName>,
    /// Matrix A (JSON).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// ODE generator B (JSON).
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Input state (JSON column).
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Schedule file (input for simulate, optional elsewhere).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Main output: schedule, CSV or state.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON report [default: stdout].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    /// Parses a config file; unknown keys are an error.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HsvtError::Config(e.to_string()))
    }

    /// `self` with every option set in `top` replaced.
    pub fn overridden_by(mut self, top: RunConfig) -> Self {
        overlay!(
            self, top, function, power, coefficient, samples, sigma_lo, sigma_hi, cap, eps, k, grid_size, seed,
            restarts, max_iterations, variable_times, escalations, sweep, ks, etas, trials, noise_eta, dim, dt,
            steps, backend, matrix, generator, state, schedule, output, report,
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn eps(&self) -> Result<f64> {
        let eps = self.eps.unwrap_or(1e-3);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(HsvtError::Config(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(eps)
    }

    fn domain(&self) -> Result<(f64, f64)> {
        let lo = self.sigma_lo.unwrap_or(DEFAULT_SIGMA_LO);
        let hi = self.sigma_hi.unwrap_or(DEFAULT_SIGMA_HI);
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(HsvtError::Config(format!("need 0 < sigma_lo < sigma_hi < 1, got [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }

    /// Target function from `function`, its parameters, domain and cap.
    pub fn target(&self) -> Result<TargetFunction> {
        let (lo, hi) = self.domain()?;
        let c = self.coefficient.unwrap_or(1.0);
        let kind = match self.function.unwrap_or(FunctionName::Identity) {
            FunctionName::Identity => TargetKind::Identity,
            FunctionName::ScaledPower => TargetKind::ScaledPower {
                p: self.power.unwrap_or(1.0),
                c,
            },
            FunctionName::InverseSqrtComplement => TargetKind::InverseSqrtComplement { c },
            FunctionName::Sine => TargetKind::Sine,
            FunctionName::Custom => TargetKind::CustomSamples {
                samples: self
                    .samples
                    .clone()
                    .ok_or_else(|| HsvtError::Config("function = custom needs `samples`".into()))?,
            },
        };
        let cap = self.cap.unwrap_or(tol::DEFAULT_CAP);
        TargetFunction::with_cap(kind, lo, hi, cap).map_err(|e| HsvtError::Config(e.to_string()))
    }

    pub fn solver(&self) -> Result<SolverOptions> {
        let d = SolverOptions::default();
        let max_iterations = self.max_iterations.unwrap_or(d.max_iterations);
        if max_iterations == 0 {
            return Err(HsvtError::Config("max_iterations must be >= 1".into()));
        }
        Ok(SolverOptions {
            target_eps: self.eps()?,
            seed: self.seed(),
            restarts: self.restarts.unwrap_or(d.restarts),
            max_iterations,
            variable_times: self.variable_times.unwrap_or(false),
            ..d
        })
    }

    fn k(&self) -> Result<Option<usize>> {
        match self.k {
            Some(k) if k == 0 || k > MAX_DEGREE => {
                Err(HsvtError::Config(format!("k must lie in 1..={MAX_DEGREE}, got {k}")))
            }
            k => Ok(k),
        }
    }

    fn grid_size(&self, k: usize) -> Result<usize> {
        let g = self.grid_size.unwrap_or(default_grid_size(k));
        if g < 2 * k {
            return Err(HsvtError::Config(format!("grid_size must be >= 2k = {}, got {g}", 2 * k)));
        }
        Ok(g)
    }

    fn pipeline(&self) -> Result<PipelineOptions> {
        let domain = match (self.sigma_lo, self.sigma_hi) {
            (None, None) => None,
            _ => Some(self.domain()?),
        };
        Ok(PipelineOptions {
            domain,
            k: self.k()?,
            solver: self.solver()?,
            escalations: self.escalations.unwrap_or(6),
        })
    }

    fn trials(&self) -> Result<usize> {
        match self.trials.unwrap_or(200) {
            0 => Err(HsvtError::Config("trials must be >= 1".into())),
            t => Ok(t),
        }
    }

    fn require_path<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        p.as_deref().ok_or_else(|| HsvtError::Config(format!("missing `{key}`")))
    }
}

#[derive(Debug, Serialize)]
struct Timing {
    elapsed_seconds: f64,
}

/// Everything a command reports. `timing` is the only run-dependent field.
#[derive(Debug, Serialize)]
struct Report<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: Value,
    timing: Timing,
}

/// Outcome of a command before the report is written.
struct Outcome {
    result: Value,
    status: i32,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Self { result, status: EXIT_OK }
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads the config file, overlays flags and runs the command.
pub fn run(command: &Command) -> Result<i32> {
    let args = command.args();
    let base = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HsvtError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    let config = base.overridden_by(args.options.clone());
    let start = Instant::now();
    let outcome = match command {
        Command::Synthesize(_) => cmd_synthesize(&config)?,
        Command::Simulate(_) => cmd_simulate(&config)?,
        Command::Sweep(_) => cmd_sweep(&config)?,
        Command::Apply(_) => cmd_apply(&config)?,
        Command::Ode(_) => cmd_ode(&config)?,
        Command::History(_) => cmd_history(&config)?,
    };
    let report = Report {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed(),
        config: &config,
        result: outcome.result,
        timing: Timing {
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match (&config.report, command) {
        (Some(p), _) => io::write_atomic(p, text.as_bytes())?,
        // a sweep without an output file already printed its CSV
        (None, Command::Sweep(_)) if config.output.is_none() => {}
        (None, _) => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(outcome.status)
}

fn schedule_json(s: &PhaseSchedule) -> Value {
    let cost = schedule_cost(s);
    json!({
        "steps": cost.steps,
        "total_time": cost.total_time,
        "frame_phase": s.frame_phase(),
        "convention": s.convention(),
    })
}

fn cmd_synthesize(config: &RunConfig) -> Result<Outcome> {
    let f = config.target()?;
    let solver = config.solver()?;
    let (schedule, report) = match config.k()? {
        Some(k) => synthesize_schedule(&f, k, config.grid_size(k)?, &solver)?,
        None => synthesize_to_accuracy(&f, None, config.escalations.unwrap_or(6), &solver)?,
    };
    let out = config.output.clone().unwrap_or_else(|| PathBuf::from("schedule.txt"));
    io::write_schedule(&out, &schedule)?;
    let result = json!({
        "schedule_file": out,
        "k": report.k,
        "grid_size": report.grid.len(),
        "max_residual": report.max_residual,
        "validation_max_residual": report.validation_max_residual,
        "target_eps": report.target_eps,
        "converged": report.converged,
        "iterations": report.iterations,
        "starts": report.starts,
        "schedule": schedule_json(&schedule),
        "pq_defect": crate::compiler::verify_pq_constraint(&schedule, &report.grid),
    });
    Ok(Outcome {
        result,
        status: if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
    })
}

fn shape_error(field: &str, message: String) -> HsvtError {
    HsvtError::Parse {
        line: 1,
        field: field.to_string(),
        message,
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<Outcome> {
    let a = io::read_matrix(config.require_path(&config.matrix, "matrix")?)?;
    let schedule = io::read_schedule(config.require_path(&config.schedule, "schedule")?)?;
    let f = config.target()?;
    let eps = config.eps()?;
    let noise = config
        .noise_eta
        .map(|eta| ControlNoiseModel::new(eta, config.seed()))
        .transpose()
        .map_err(|e| HsvtError::Config(e.to_string()))?;
    let target = build_target_unitary(&a, &f)?;
    let result = simulate_protocol(&a, &schedule, noise.as_ref())?.compared_to(&target)?;
    let v = verify(&result, &target, eps)?;
    Ok(Outcome::ok(json!({
        "dims": [a.rows(), a.cols()],
        "op_distance": v.distance,
        "eps": eps,
        "pass": v.pass,
        "subspaces": v.subspaces,
        "kernel_residual": v.kernel_residual,
        "max_in_domain_residual": v.max_in_domain,
        "out_of_domain_sigmas": v.out_of_domain,
        "unitarity_defect": result.unitary.unitarity_defect(),
        "noise_eta": config.noise_eta,
        "schedule": schedule_json(&schedule),
    })))
}

fn cmd_sweep(config: &RunConfig) -> Result<Outcome> {
    let kind = config.sweep.unwrap_or(SweepKind::Synthesis);
    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HsvtError::Io(e.to_string());
    let result = match kind {
        SweepKind::Synthesis | SweepKind::Chebyshev => {
            let f = config.target()?;
            let ks = config.ks.clone().unwrap_or_default();
            if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > MAX_DEGREE) {
                return Err(HsvtError::Config(format!("ks entries must lie in 1..={MAX_DEGREE}, got {bad}")));
            }
            let solver = config.solver()?;
            let rows: Vec<(usize, f64, f64, usize)> = ks
                .par_iter()
                .map(|&k| match kind {
                    SweepKind::Synthesis => {
                        let (s, r) = synthesize_schedule(&f, k, config.grid_size(k)?, &solver)?;
                        let c = schedule_cost(&s);
                        Ok((k, r.max_residual, c.total_time, c.steps))
                    }
                    _ => {
                        let e = f.arccos_expansion(k)?;
                        Ok((k, e.residual, k as f64, k))
                    }
                })
                .collect::<Result<_>>()?;
            out.write_record(["k", "max_residual", "total_time", "steps"]).map_err(csv_err)?;
            for (k, r, t, s) in &rows {
                out.write_record([k.to_string(), r.to_string(), t.to_string(), s.to_string()])
                    .map_err(csv_err)?;
            }
            json!({
                "sweep": kind,
                "rows": rows.iter().map(|(k, r, t, s)| json!({"k": k, "max_residual": r, "total_time": t, "steps": s})).collect::<Vec<_>>(),
            })
        }
        SweepKind::Noise => {
            let etas = config.etas.clone().unwrap_or_default();
            if let Some(&bad) = etas.iter().find(|&&e| !(e.is_finite() && e >= 0.0)) {
                return Err(HsvtError::Config(format!("etas must be finite and >= 0, got {bad}")));
            }
            let (lo, hi) = config.domain()?;
            let a = match (&config.matrix, config.dim) {
                (Some(p), _) => io::read_matrix(p)?,
                (None, Some(d)) if d >= 1 => {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
                    sampling::random_contraction(&mut rng, d, d, lo, hi)
                }
                _ => return Err(HsvtError::Config("noise sweep needs `matrix` or `dim` >= 1".into())),
            };
            let schedule = match &config.schedule {
                Some(p) => io::read_schedule(p)?,
                None => {
                    let f = config.target()?;
                    let (s, r) = synthesize_to_accuracy(&f, config.k()?, config.escalations.unwrap_or(6), &config.solver()?)?;
                    if !r.converged {
                        return Err(HsvtError::NotConverged {
                            max_residual: r.max_residual,
                            target_eps: r.target_eps,
                        });
                    }
                    s
                }
            };
            let rows = noise_sweep(&a, &schedule, &etas, config.trials()?, config.seed())?;
            out.write_record(["eta", "mean_distance", "max_distance", "total_time", "steps", "fitted_c"])
                .map_err(csv_err)?;
            for r in &rows {
                out.write_record([
                    r.eta.to_string(),
                    r.mean_distance.to_string(),
                    r.max_distance.to_string(),
                    r.total_time.to_string(),
                    r.steps.to_string(),
                    r.fitted_c.map(|c| c.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
            json!({ "sweep": kind, "rows": rows, "schedule": schedule_json(&schedule) })
        }
    };
    let bytes = out.into_inner().map_err(|e| HsvtError::Io(e.to_string()))?;
    match &config.output {
        Some(p) => io::write_atomic(p, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(Outcome::ok(result))
}

fn backend_name(config: &RunConfig) -> BackendName {
    config.backend.unwrap_or(BackendName::Exact)
}

/// Schedule for `f(sigma) = sigma` on `a`: from the `schedule` file or compiled.
fn identity_schedule(config: &RunConfig, a: &ComplexMatrix) -> Result<(PhaseSchedule, Option<f64>)> {
    if let Some(p) = &config.schedule {
        return Ok((io::read_schedule(p)?, None));
    }
    let enc = inverse_block_encode(a, config.eps()?, &config.pipeline()?)?;
    Ok((enc.schedule, enc.result.achieved_eps))
}

fn state_json(s: &StateVector) -> Value {
    json!(s.amplitudes().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

fn check_dims(state: &StateVector, expected: usize, what: &str) -> Result<()> {
    if state.dim() != expected {
        return Err(shape_error(
            "rows",
            format!("state has {} rows but {what} needs {expected}", state.dim()),
        ));
    }
    Ok(())
}

fn cmd_apply(config: &RunConfig) -> Result<Outcome> {
    let a = io::read_matrix(config.require_path(&config.matrix, "matrix")?)?;
    let psi = io::read_state(config.require_path(&config.state, "state")?)?;
    check_dims(&psi, a.cols(), "A")?;
    let (backend, compiled) = match backend_name(config) {
        BackendName::Exact => (Backend::Exact, None),
        BackendName::Protocol => {
            let (s, d) = identity_schedule(config, &a)?;
            (Backend::Protocol(s), d)
        }
    };
    let r = applications::apply_matrix(&a, &psi, &backend)?;
    if let Some(p) = &config.output {
        io::write_state(p, &r.state)?;
    }
    Ok(Outcome::ok(json!({
        "backend": backend_name(config),
        "success_prob": r.success_prob,
        "amplification_iterations": r.amplification_iterations,
        "state": state_json(&r.state),
        "protocol_distance": compiled,
        "steps": match &backend { Backend::Protocol(s) => Some(s.degree()), Backend::Exact => None },
    })))
}

fn cmd_ode(config: &RunConfig) -> Result<Outcome> {
    let b = io::read_matrix(config.require_path(&config.generator, "generator")?)?;
    let psi0 = io::read_state(config.require_path(&config.state, "state")?)?;
    check_dims(&psi0, b.rows(), "B")?;
    let dt = config.dt.ok_or_else(|| HsvtError::Config("missing `dt`".into()))?;
    let steps = config.steps.ok_or_else(|| HsvtError::Config("missing `steps`".into()))?;
    if !(dt.is_finite() && dt > 0.0) || steps == 0 {
        return Err(HsvtError::Config(format!("need dt > 0 and steps >= 1, got dt = {dt}, steps = {steps}")));
    }
    let problem = OdeProblem { b, dt, steps, psi0 };
    let sigma_max = problem.check_dissipative()?;
    let (backend, compiled) = match backend_name(config) {
        BackendName::Exact => (Backend::Exact, None),
        BackendName::Protocol => {
            let (s, d) = identity_schedule(config, &problem.euler_matrix())?;
            (Backend::Protocol(s), d)
        }
    };
    let sol = ode_solve(&problem, &backend)?;
    if let Some(p) = &config.output {
        io::write_state(p, &sol.final_state)?;
    }
    Ok(Outcome::ok(json!({
        "backend": backend_name(config),
        "final_time": dt * steps as f64,
        "final_state": state_json(&sol.final_state),
        "success_prob": sol.success_prob,
        "cascade_norm_sqr": sol.cascade.total_norm_sqr(),
        "sigma_max_euler": sigma_max,
        "protocol_distance": compiled,
    })))
}

fn cmd_history(config: &RunConfig) -> Result<Outcome> {
    let a = io::read_matrix(config.require_path(&config.matrix, "matrix")?)?;
    let psi = io::read_state(config.require_path(&config.state, "state")?)?;
    check_dims(&psi, a.cols(), "A")?;
    let n = config.steps.ok_or_else(|| HsvtError::Config("missing `steps`".into()))?;
    if n == 0 {
        return Err(HsvtError::Config("steps must be >= 1".into()));
    }
    let backend = match backend_name(config) {
        BackendName::Exact => HistoryBackend::Exact,
        BackendName::Protocol => {
            if !a.is_square() {
                return Err(HsvtError::InvalidInput("history needs a square matrix".into()));
            }
            let sigma = a.spectral_norm();
            if (1.0 - sigma * sigma).max(0.0).sqrt() <= tol::INVERSION_FLOOR {
                // let history_state raise the singular-inversion error with its diagnostics
                HistoryBackend::Exact
            } else {
                let (cascade, _) = identity_schedule(config, &a)?;
                let (lo, hi) = domain_for(&a)?;
                let (f, c) = inversion_target(lo, hi, None)?;
                let (inversion, r) =
                    synthesize_to_accuracy(&f, config.k()?, config.escalations.unwrap_or(6), &config.solver()?)?;
                if !r.converged {
                    return Err(HsvtError::NotConverged {
                        max_residual: r.max_residual,
                        target_eps: r.target_eps,
                    });
                }
                HistoryBackend::Protocol { cascade, inversion, c }
            }
        }
    };
    let h = history_state(&a, &psi, n, &backend)?;
    let flat = h.flattened();
    if let Some(p) = &config.output {
        io::write_state(p, &flat)?;
    }
    Ok(Outcome::ok(json!({
        "backend": backend_name(config),
        "kappa_tilde": h.kappa_tilde,
        "success_prob": h.success_prob,
        "amplification_iterations": h.amplification_iterations,
        "inversion_scale": h.inversion_scale,
        "history": state_json(&flat),
    })))
}
