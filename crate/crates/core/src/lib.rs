//! Compile and simulate Hamiltonian singular value transformation schedules.

pub mod applications;
pub mod cli;
pub mod compiler;
pub mod embedding;
pub mod error;
pub mod io;
pub mod numerics;
pub mod protocol;
pub mod sampling;
pub mod target;
pub mod tol;

pub use error::{HsvtError, Result};
pub use numerics::ComplexMatrix;
