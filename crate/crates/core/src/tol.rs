//! Default numerical tolerances.

/// Singular values below this are treated as exactly zero.
pub const ZERO_SINGULAR: f64 = 1e-12;
/// Accepted `||H - H^dagger||_F` (relative to `max(1, ||H||_F)`).
pub const HERMITIAN: f64 = 1e-10;
/// Eigenvalues below `-PSD_REJECT` make a matrix non-PSD; above it they are clamped to 0.
pub const PSD_REJECT: f64 = 1e-8;
/// Slack on the contraction assumption `sigma_max(A) <= 1`.
pub const CONTRACTION: f64 = 1e-10;
/// Default cap on `|f|` inside the synthesis domain.
pub const DEFAULT_CAP: f64 = 1.0 - 1e-3;
/// Success probabilities below this signal that the matrix annihilates the state.
pub const ZERO_PROBABILITY: f64 = 1e-14;
/// Compiled schedules need `sigma_max(A) <= 1 - HISTORY_GAP`.
pub const HISTORY_GAP: f64 = 1e-6;
/// `history_state` rejects `sigma_min(sqrt(I - A^dagger A))` at or below this.
pub const INVERSION_FLOOR: f64 = 1e-6;
/// Unit-norm tolerance on input states.
pub const STATE_NORM: f64 = 1e-10;
