use thiserror::Error;

/// Errors raised by the numerical kernels, the compiler and the applications.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HsvtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not a contraction: largest singular value {sigma_max} exceeds 1")]
    Normalization { sigma_max: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("sigma = {sigma} lies outside the admissible domain [{lo}, {hi}]")]
    Domain { sigma: f64, lo: f64, hi: f64 },

    #[error("|f| = {value} exceeds the cap {cap}")]
    Cap { value: f64, cap: f64 },

    #[error("chebyshev fit failed: {0}")]
    Fit(String),

    #[error(
        "generator is not dissipative: sigma_max(I + B dt) = {sigma_max}, \
         largest eigenvalue of B + B^dagger = {max_hermitian_eigenvalue}"
    )]
    Generator {
        sigma_max: f64,
        max_hermitian_eigenvalue: f64,
    },

    #[error("sqrt(I - A^dagger A) is singular (kappa_tilde = {kappa_tilde})")]
    SingularInversion { kappa_tilde: f64 },

    #[error("success probability {probability} is zero: the matrix annihilates the state")]
    ZeroProbability { probability: f64 },

    #[error("synthesis did not converge: max residual {max_residual} > target {target_eps}")]
    NotConverged { max_residual: f64, target_eps: f64 },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for HsvtError {
    fn from(e: std::io::Error) -> Self {
        HsvtError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HsvtError>;
