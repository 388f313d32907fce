//! Privacy-budget calculus for output-trajectory differential privacy.
//!
//! Two independent routes compute the budget of each agent: a truncated
//! double series driven by the contraction moduli ([`series`]) and closed
//! forms obtained by swapping the order of summation ([`closed`]). The
//! deterministic ledger ([`ledger`]) replays the worst-case deviation through
//! the actual observer matrices and must never exceed either.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod closed;
pub mod design;
pub mod ledger;
pub mod series;

pub use closed::{
    epsilon_closed_exp_full, epsilon_closed_exp_reduced, epsilon_closed_full, epsilon_closed_poly_full,
    epsilon_closed_poly_reduced, epsilon_closed_reduced, simplified_bound_full, simplified_bound_report,
};
pub use design::{design_g_full, design_g_reduced, Design};
pub use ledger::{privacy_ledger, LedgerOutcome};
pub use series::{epsilon_series_full, epsilon_series_reduced};

/// Default absolute truncation tolerance on ε.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Shape of the deviation bound `h(j)`, `j = k - k0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeviationShape {
    /// `h(j) = α^j`.
    Geometric { alpha: f64 },
    /// Explicit finite sequence, zero afterwards.
    Custom { h: Vec<f64> },
}

/// Adjacent output trajectories: only agent `i0` deviates, by at most
/// `m * h(k - k0)` in the ℓ₁ norm from step `k0` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySpec {
    pub i0: usize,
    pub k0: usize,
    pub m: f64,
    pub shape: DeviationShape,
}

impl AdjacencySpec {
    pub fn geometric(i0: usize, k0: usize, m: f64, alpha: f64) -> Result<Self> {
        let a = AdjacencySpec {
            i0,
            k0,
            m,
            shape: DeviationShape::Geometric { alpha },
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::invalid(format!("deviation magnitude m = {} must be >= 0", self.m)));
        }
        match &self.shape {
            DeviationShape::Geometric { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::invalid(format!("deviation decay alpha = {alpha} must lie in (0, 1)")));
                }
            }
            DeviationShape::Custom { h } => {
                if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("custom deviation sequence must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Relative profile `h(j)`.
    pub fn h(&self, j: usize) -> f64 {
        match &self.shape {
            DeviationShape::Geometric { alpha } => alpha.powi(j as i32),
            DeviationShape::Custom { h } => h.get(j).copied().unwrap_or(0.0),
        }
    }

    /// Absolute-time profile: `h(k - k0)` for `k >= k0`, else 0.
    pub fn profile(&self, k: usize) -> f64 {
        if k < self.k0 {
            0.0
        } else {
            self.h(k - self.k0)
        }
    }

    /// Worst-case ℓ₁ deviation of agent `i0` at step `k`.
    pub fn deviation(&self, k: usize) -> f64 {
        self.m * self.profile(k)
    }

    /// First step from which the profile is exactly geometric or identically zero.
    pub(crate) fn settled_from(&self) -> usize {
        match &self.shape {
            DeviationShape::Geometric { .. } => self.k0,
            DeviationShape::Custom { h } => self.k0 + h.len(),
        }
    }

    pub(crate) fn alpha(&self) -> Option<f64> {
        match self.shape {
            DeviationShape::Geometric { alpha } => Some(alpha),
            DeviationShape::Custom { .. } => None,
        }
    }
}

/// Which formula produced an [`EpsilonReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Series,
    ClosedExp,
    ClosedPoly,
    SimplifiedBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonReport {
    pub per_agent: Vec<f64>,
    pub epsilon: f64,
    pub method: Method,
    /// Largest per-agent bound on the neglected remainder.
    pub truncation_residual: f64,
}

impl EpsilonReport {
    pub(crate) fn from_parts(parts: Vec<(f64, f64)>, method: Method) -> Self {
        let epsilon = parts.iter().map(|p| p.0).fold(0.0, f64::max);
        let truncation_residual = parts.iter().map(|p| p.1).fold(0.0, f64::max);
        EpsilonReport {
            per_agent: parts.into_iter().map(|p| p.0).collect(),
            epsilon,
            method,
            truncation_residual,
        }
    }
}

/// Positive initial noise scale, required by every privacy formula.
pub(crate) fn require_scale(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("privacy requires a positive noise scale, got c = {c}")));
    }
    Ok(())
}

/// Sums `term(j)` for `j >= start` until the remainder is below `tol`.
/// `term` is called once per index, in increasing order.
///
/// Terms must be identically zero after three consecutive zeros at or past
/// `settled`. The remainder is bounded geometrically once the term ratio is below one
/// and locally nonincreasing, which holds eventually for polynomial-times-
/// geometric sequences. Returns `(partial_sum, residual_bound)`.
pub(crate) fn sum_ratio_tail(mut term: impl FnMut(usize) -> f64, start: usize, settled: usize, tol: f64) -> Result<(f64, f64)> {
    const MAX_TERMS: usize = 2_000_000;
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut t0 = term(start);
    let mut t1 = term(start + 1);
    let mut t2 = term(start + 2);
    for j in start..start + MAX_TERMS {
        // Kahan summation
        let y = t0 - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        if j >= settled && t0 == 0.0 && t1 == 0.0 && t2 == 0.0 {
            return Ok((sum, 0.0));
        }
        if t0 > 0.0 && t1 > 0.0 {
            let q1 = t1 / t0;
            let q2 = t2 / t1;
            if q1 < 1.0 && q2 <= q1 {
                let bound = t1 / (1.0 - q1);
                if bound <= tol {
                    return Ok((sum, bound));
                }
            }
        }
        t0 = t1;
        t1 = t2;
        t2 = term(j + 3);
        if !t2.is_finite() {
            return Err(Error::Divergent("series terms overflowed".into()));
        }
    }
    Err(Error::Divergent(format!("series did not reach tolerance {tol:e} within {MAX_TERMS} terms")))
}
