//! Target singular-value functions and their Chebyshev expansions.
//!
//! A [`TargetFunction`] is a real `f` on an admissible singular-value domain
//! `[sigma_lo, sigma_hi] ⊂ (0, 1)` with `|f| <= cap` there. Approximation
//! quality is studied through Chebyshev interpolants of `f(arccos x)` (and of
//! the induced `f(arccos x) / sqrt(1 - x^2)`), whose truncation error decays
//! like `exp(-sqrt(2 delta) k)` when the singular endpoints are `delta` away.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HsvtError, Result};
use crate::tol;

pub const DEFAULT_SIGMA_LO: f64 = 0.05;
pub const DEFAULT_SIGMA_HI: f64 = 0.95;
const CAP_CHECK_POINTS: usize = 2001;
const CUSTOM_MAX_DEGREE: usize = 24;

/// Shape of the target function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetKind {
    /// `f(sigma) = sigma` (inverse block encoding).
    Identity,
    /// `f(sigma) = c * sigma^p`.
    ScaledPower { p: f64, c: f64 },
    /// `f(sigma) = c / sqrt(1 - sigma^2)`.
    InverseSqrtComplement { c: f64 },
    /// `f(sigma) = sin(sigma)`.
    Sine,
    /// Tabulated `(sigma, f(sigma))` pairs, interpolated by a Chebyshev fit in sigma.
    CustomSamples { samples: Vec<(f64, f64)> },
}

/// A singular-value function with its admissible domain and cap.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunction {
    kind: TargetKind,
    sigma_lo: f64,
    sigma_hi: f64,
    cap: f64,
    custom_fit: Option<ChebyshevExpansion>,
}

/// Distances of the domain from the two singular endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainGaps {
    /// `1 - sigma_hi`.
    pub sigma_gap: f64,
    /// `1 - cos(sigma_lo)`: distance of `x = cos(sigma)` from `x = 1`.
    pub x_gap: f64,
}

impl TargetFunction {
    pub fn new(kind: TargetKind, sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        Self::with_cap(kind, sigma_lo, sigma_hi, tol::DEFAULT_CAP)
    }

    /// Target on the default domain `[0.05, 0.95]`.
    pub fn on_default_domain(kind: TargetKind) -> Result<Self> {
        Self::new(kind, DEFAULT_SIGMA_LO, DEFAULT_SIGMA_HI)
    }

    pub fn with_cap(kind: TargetKind, sigma_lo: f64, sigma_hi: f64, cap: f64) -> Result<Self> {
        if !(sigma_lo > 0.0 && sigma_lo < sigma_hi && sigma_hi < 1.0) {
            return Err(HsvtError::InvalidInput(format!(
                "domain must satisfy 0 < sigma_lo < sigma_hi < 1, got [{sigma_lo}, {sigma_hi}]"
            )));
        }
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(HsvtError::InvalidInput(format!("cap must lie in (0, 1], got {cap}")));
        }
        match &kind {
            TargetKind::ScaledPower { p, c } if !(p.is_finite() && *p >= 0.0 && c.is_finite()) => {
                return Err(HsvtError::InvalidInput("scaled-power needs finite p >= 0 and finite c".into()));
            }
            TargetKind::InverseSqrtComplement { c } if !c.is_finite() => {
                return Err(HsvtError::InvalidInput("inverse-sqrt-complement needs finite c".into()));
            }
            _ => {}
        }
        let custom_fit = match &kind {
            TargetKind::CustomSamples { samples } => Some(fit_samples(samples, sigma_lo, sigma_hi, cap)?),
            _ => None,
        };
        let f = Self {
            kind,
            sigma_lo,
            sigma_hi,
            cap,
            custom_fit,
        };
        let worst = (0..CAP_CHECK_POINTS)
            .map(|i| sigma_lo + (sigma_hi - sigma_lo) * i as f64 / (CAP_CHECK_POINTS - 1) as f64)
            .map(|s| f.eval_analytic(s).abs())
            .fold(0.0, f64::max);
        if !worst.is_finite() || worst > cap {
            return Err(HsvtError::Cap { value: worst, cap });
        }
        Ok(f)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo
    }

    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.sigma_lo - 1e-12 && sigma <= self.sigma_hi + 1e-12
    }

    pub fn gaps(&self) -> DomainGaps {
        DomainGaps {
            sigma_gap: 1.0 - self.sigma_hi,
            x_gap: 1.0 - self.sigma_lo.cos(),
        }
    }

    /// `f(sigma)` for `sigma` inside the domain.
    pub fn eval(&self, sigma: f64) -> Result<f64> {
        if !self.contains(sigma) {
            return Err(HsvtError::Domain {
                sigma,
                lo: self.sigma_lo,
                hi: self.sigma_hi,
            });
        }
        Ok(self.eval_analytic(sigma))
    }

    /// `f(sigma)` from the closed form, without the domain check.
    ///
    /// Custom tables are evaluated at `sigma` clamped to the domain.
    pub fn eval_analytic(&self, sigma: f64) -> f64 {
        match &self.kind {
            TargetKind::Identity => sigma,
            TargetKind::ScaledPower { p, c } => c * sigma.powf(*p),
            TargetKind::InverseSqrtComplement { c } => c / (1.0 - sigma * sigma).sqrt(),
            TargetKind::Sine => sigma.sin(),
            TargetKind::CustomSamples { .. } => {
                let fit = self.custom_fit.as_ref().expect("custom fit built at construction");
                fit.eval(sigma.clamp(self.sigma_lo, self.sigma_hi))
            }
        }
    }

    /// Chebyshev interpolant of `f(arccos x) / sqrt(1 - x^2)` on `[cos sigma_hi, cos sigma_lo]`.
    pub fn induced_expansion(&self, k: usize) -> Result<ChebyshevExpansion> {
        let g = |x: f64| self.eval_analytic(x.acos()) / (1.0 - x * x).sqrt();
        fit_on_interval(g, self.sigma_hi.cos(), self.sigma_lo.cos(), k)
    }

    /// Chebyshev interpolant of `f(arccos x)` on `[cos sigma_hi, cos sigma_lo]`.
    pub fn arccos_expansion(&self, k: usize) -> Result<ChebyshevExpansion> {
        fit_on_interval(|x| self.eval_analytic(x.acos()), self.sigma_hi.cos(), self.sigma_lo.cos(), k)
    }
}

fn fit_samples(samples: &[(f64, f64)], lo: f64, hi: f64, cap: f64) -> Result<ChebyshevExpansion> {
    if samples.len() < 2 {
        return Err(HsvtError::InvalidInput("custom-samples needs at least two samples".into()));
    }
    for &(s, v) in samples {
        if !s.is_finite() || !v.is_finite() {
            return Err(HsvtError::Fit("custom samples contain non-finite values".into()));
        }
        if s < lo - 1e-12 || s > hi + 1e-12 {
            return Err(HsvtError::Domain { sigma: s, lo, hi });
        }
        if v.abs() > cap {
            return Err(HsvtError::Cap { value: v.abs(), cap });
        }
    }
    let degree = (samples.len() - 1).min(CUSTOM_MAX_DEGREE);
    let mut basis = DMatrix::zeros(samples.len(), degree + 1);
    let mut rhs = DVector::zeros(samples.len());
    for (i, &(s, v)) in samples.iter().enumerate() {
        let u = to_unit(s, lo, hi);
        for (m, t) in chebyshev_values(u, degree).into_iter().enumerate() {
            basis[(i, m)] = t;
        }
        rhs[i] = v;
    }
    let coeffs = basis
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| HsvtError::Fit(e.to_string()))?;
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();
    let residual = samples
        .iter()
        .map(|&(s, v)| (clenshaw(&coeffs, to_unit(s, lo, hi)) - v).abs())
        .fold(0.0, f64::max);
    Ok(ChebyshevExpansion {
        parity: Parity::detect(&coeffs),
        coeffs,
        interval: (lo, hi),
        residual,
    })
}

/// Parity pattern of a Chebyshev coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

impl Parity {
    /// Even (odd) if every odd- (even-) index coefficient is below `1e-12` of the largest.
    pub fn detect(coeffs: &[f64]) -> Parity {
        let scale = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let small = |start: usize| coeffs.iter().skip(start).step_by(2).all(|c| c.abs() <= 1e-12 * scale);
        match (small(1), small(0)) {
            (true, _) => Parity::Even,
            (false, true) => Parity::Odd,
            _ => Parity::Mixed,
        }
    }
}

/// `sum_m c_m T_m(u)` with `u` the affine image of `[a, b]` on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebyshevExpansion {
    pub coeffs: Vec<f64>,
    pub parity: Parity,
    pub interval: (f64, f64),
    /// Max error on the `10 (k + 1)`-point validation grid (for sample fits: on the samples).
    pub residual: f64,
}

impl ChebyshevExpansion {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, to_unit(x, self.interval.0, self.interval.1))
    }
}

fn to_unit(x: f64, a: f64, b: f64) -> f64 {
    (2.0 * x - a - b) / (b - a)
}

fn from_unit(u: f64, a: f64, b: f64) -> f64 {
    0.5 * (a + b) + 0.5 * (b - a) * u
}

/// `T_0(u) .. T_degree(u)`.
fn chebyshev_values(u: f64, degree: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(degree + 1);
    t.push(1.0);
    if degree >= 1 {
        t.push(u);
    }
    for m in 2..=degree {
        let next = 2.0 * u * t[m - 1] - t[m - 2];
        t.push(next);
    }
    t
}

fn clenshaw(coeffs: &[f64], u: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * u * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + u * b1 - b2
}

/// Chebyshev nodes of the first kind, `cos(pi (j + 1/2) / count)`.
pub fn chebyshev_nodes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| (PI * (j as f64 + 0.5) / count as f64).cos())
        .collect()
}

/// Degree-`k` Chebyshev interpolant of `g` on `[-1, 1]` (collocation at `k + 1` nodes).
pub fn chebyshev_fit(g: impl Fn(f64) -> f64, k: usize) -> Result<ChebyshevExpansion> {
    fit_on_interval(g, -1.0, 1.0, k)
}

/// Degree-`k` Chebyshev interpolant of `g` on `[a, b]`.
pub fn fit_on_interval(g: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> Result<ChebyshevExpansion> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(HsvtError::InvalidInput(format!("invalid interval [{a}, {b}]")));
    }
    let count = k + 1;
    let nodes = chebyshev_nodes(count);
    let samples: Vec<f64> = nodes.iter().map(|&u| g(from_unit(u, a, b))).collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(HsvtError::Fit("non-finite sample at a collocation node".into()));
    }
    // discrete cosine transform at the nodes
    let coeffs: Vec<f64> = (0..count)
        .map(|m| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI * m as f64 * (j as f64 + 0.5) / count as f64).cos())
                .sum();
            let w = if m == 0 { 1.0 } else { 2.0 };
            w * s / count as f64
        })
        .collect();
    let grid = 10 * count;
    let mut residual: f64 = 0.0;
    for i in 0..grid {
        let u = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
        let x = from_unit(u, a, b);
        let gx = g(x);
        if !gx.is_finite() {
            return Err(HsvtError::Fit(format!("non-finite sample at x = {x}")));
        }
        residual = residual.max((clenshaw(&coeffs, u) - gx).abs());
    }
    Ok(ChebyshevExpansion {
        parity: Parity::detect(&coeffs),
        coeffs,
        interval: (a, b),
        residual,
    })
}

/// Truncation degree estimate from the `C exp(-sqrt(2 delta) k)` law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeEstimate {
    pub k: usize,
    pub predicted_eps: f64,
    pub delta: f64,
    /// Calibrated prefactor `C`.
    pub constant: f64,
}

impl DegreeEstimate {
    /// `C exp(-sqrt(2 delta) k)`.
    pub fn predicted_at(&self, k: usize) -> f64 {
        self.constant * (-(2.0 * self.delta).sqrt() * k as f64).exp()
    }
}

/// Calibrates `C` from interpolants of `arccos(x)` on `[-(1 - delta), 1 - delta]`:
/// the largest `r(k) exp(sqrt(2 delta) k)` over degrees whose residual is still
/// above round-off.
pub fn calibrate_arccos_constant(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(HsvtError::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let rate = (2.0 * delta).sqrt();
    let edge = 1.0 - delta;
    let mut c: f64 = 0.0;
    for k in 1..=80 {
        let fit = fit_on_interval(f64::acos, -edge, edge, k)?;
        if fit.residual < 1e-11 {
            break;
        }
        c = c.max(fit.residual * (rate * k as f64).exp());
    }
    Ok(c)
}

/// Smallest `k >= 1` with `C exp(-sqrt(2 delta) k) <= eps`, `C` from [`calibrate_arccos_constant`].
pub fn degree_for_accuracy(delta: f64, eps: f64) -> Result<DegreeEstimate> {
    let c = calibrate_arccos_constant(delta)?;
    degree_with_constant(delta, eps, c)
}

/// [`degree_for_accuracy`] with an explicit prefactor.
pub fn degree_with_constant(delta: f64, eps: f64, constant: f64) -> Result<DegreeEstimate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(HsvtError::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HsvtError::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    let rate = (2.0 * delta).sqrt();
    let raw = (constant / eps).ln() / rate;
    let k = ((raw - 1e-9).ceil().max(1.0)) as usize;
    let est = DegreeEstimate {
        k,
        predicted_eps: 0.0,
        delta,
        constant,
    };
    Ok(DegreeEstimate {
        predicted_eps: est.predicted_at(k),
        ..est
    })
}
