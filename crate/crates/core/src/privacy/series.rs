//! Truncated double-series evaluation of per-agent privacy budgets.

use crate::analysis::ReducedModulus;
use crate::error::{Error, Result};
use crate::noise::{NoiseSchedule, ScheduleKind};

use super::{require_scale, sum_ratio_tail, AdjacencySpec, DeviationShape, EpsilonReport, Method};

const MAX_STEPS: usize = 10_000_000;

/// Scalar majorant of the observer-state deviation,
/// `z(k+1) = contraction * z(k) + gain * m * h̃(k)`, `z(0) = 0`.
///
/// Step `k` contributes `(z(k) + [direct] m h̃(k)) / (c p(k))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Majorant<'a> {
    pub contraction: f64,
    pub gain: f64,
    pub direct: bool,
    pub adj: &'a AdjacencySpec,
    /// Symbol used in divergence messages.
    pub label: &'static str,
}

impl Majorant<'_> {
    pub(crate) fn numerator(&self, z: f64, k: usize) -> f64 {
        if self.direct {
            z + self.adj.deviation(k)
        } else {
            z
        }
    }

    pub(crate) fn advance(&self, z: f64, k: usize) -> f64 {
        self.contraction * z + self.gain * self.adj.deviation(k)
    }

    /// `m h̃(k) g^{-k}`, evaluated in log space so neither factor leaves range.
    fn scaled_deviation(&self, k: usize, g: f64) -> f64 {
        let adj = self.adj;
        if k < adj.k0 || adj.m == 0.0 {
            return 0.0;
        }
        let j = k - adj.k0;
        let log_h = match &adj.shape {
            DeviationShape::Geometric { alpha } => j as f64 * alpha.ln(),
            DeviationShape::Custom { h } => match h.get(j) {
                Some(&v) if v > 0.0 => v.ln(),
                _ => return 0.0,
            },
        };
        adj.m * (log_h - k as f64 * g.ln()).exp()
    }

    /// Exact value of `Σ_{j ≥ k}` of the contributions for `p(j) = g^j`, valid
    /// once the profile is geometric or zero from `k` on. Takes the scaled
    /// state `ζ = z g^{-k}` and `sd = m h̃(k) g^{-k}`.
    fn exp_tail(&self, zeta: f64, sd: f64, c: f64, g: f64) -> f64 {
        let alpha = self.adj.alpha().unwrap_or(0.0);
        let l = self.contraction;
        let mut inner = zeta * g / (g - l) + self.gain * sd * g / ((g - l) * (g - alpha));
        if self.direct {
            inner += sd * g / (g - alpha);
        }
        inner / c
    }

    pub(crate) fn check_convergence(&self, schedule: &NoiseSchedule) -> Result<()> {
        let l = self.contraction;
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::invalid(format!("modulus {} = {l} must be finite and >= 0", self.label)));
        }
        match schedule.kind {
            ScheduleKind::Exponential { g } => {
                let alpha = self.adj.alpha().unwrap_or(0.0);
                let r = l.max(alpha);
                if r >= g {
                    return Err(Error::Divergent(format!(
                        "ratio max({}, alpha)/g = {:.6} >= 1 ({} = {l}, alpha = {alpha}, g = {g})",
                        self.label,
                        r / g,
                        self.label
                    )));
                }
            }
            ScheduleKind::Polynomial { .. } => {
                if l >= 1.0 {
                    return Err(Error::Divergent(format!(
                        "{} = {l} >= 1 makes the polynomial-schedule series diverge",
                        self.label
                    )));
                }
            }
            ScheduleKind::Custom { .. } => {
                return Err(Error::invalid("series budget needs an exponential or polynomial schedule"));
            }
        }
        Ok(())
    }

    /// Sum of contributions for `k >= start` given `z(start) = z0`.
    /// Returns `(partial_sum, remainder_bound)`.
    pub(crate) fn sum_from(&self, start: usize, z0: f64, schedule: &NoiseSchedule, tol: f64) -> Result<(f64, f64)> {
        require_scale(schedule.c)?;
        self.check_convergence(schedule)?;
        let c = schedule.c;
        let settled = self.adj.settled_from();
        match schedule.kind {
            ScheduleKind::Exponential { g } => {
                // ζ(k) = z(k) g^{-k} obeys ζ(k+1) = (l/g) ζ(k) + gain m h̃(k) g^{-k} / g.
                let mut zeta = if z0 > 0.0 { (z0.ln() - start as f64 * g.ln()).exp() } else { 0.0 };
                let (mut sum, mut comp) = (0.0, 0.0);
                for k in start..start + MAX_STEPS {
                    let sd = self.scaled_deviation(k, g);
                    if k >= settled {
                        let tail = self.exp_tail(zeta, sd, c, g);
                        if tail <= tol {
                            return Ok((sum, tail));
                        }
                    }
                    let t = (zeta + if self.direct { sd } else { 0.0 }) / c;
                    if !t.is_finite() {
                        return Err(Error::Numeric(format!("series term overflowed at k = {k}")));
                    }
                    let y = t - comp;
                    let s = sum + y;
                    comp = (s - sum) - y;
                    sum = s;
                    zeta = (self.contraction * zeta + self.gain * sd) / g;
                }
                Err(Error::Divergent(format!("series did not converge within {MAX_STEPS} steps")))
            }
            ScheduleKind::Polynomial { power } => {
                let mut z = z0;
                let this = *self;
                sum_ratio_tail(
                    move |k| {
                        let t = this.numerator(z, k) * ((k + 1) as f64).powi(power as i32) / c;
                        z = this.advance(z, k);
                        t
                    },
                    start,
                    settled,
                    tol,
                )
            }
            ScheduleKind::Custom { .. } => unreachable!("rejected by check_convergence"),
        }
    }
}

pub(crate) fn check_inputs(n_moduli: usize, adj: &AdjacencySpec, schedules: &[NoiseSchedule], tol: f64) -> Result<()> {
    if n_moduli != schedules.len() {
        return Err(Error::dim("noise schedules per modulus", n_moduli, schedules.len()));
    }
    adj.validate()?;
    if adj.i0 >= n_moduli {
        return Err(Error::invalid(format!("deviating agent i0 = {} outside 0..{n_moduli}", adj.i0)));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    for s in schedules {
        s.validate()?;
    }
    Ok(())
}

/// Full-order budget: `ε_i = ‖L‖₁ m Σ_{k≥1} Σ_{b<k} l_i^{k−b−1} h̃(b) / (c_i p_i(k))`.
pub fn epsilon_series_full(
    moduli: &[f64],
    l_norm: f64,
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
    tol: f64,
) -> Result<EpsilonReport> {
    check_inputs(moduli.len(), adj, schedules, tol)?;
    if !(l_norm.is_finite() && l_norm >= 0.0) {
        return Err(Error::invalid(format!("observer gain norm {l_norm} must be finite and >= 0")));
    }
    let parts = moduli
        .iter()
        .zip(schedules)
        .map(|(&l, s)| {
            Majorant {
                contraction: l,
                gain: l_norm,
                direct: false,
                adj,
                label: "l",
            }
            .sum_from(0, 0.0, s, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonReport::from_parts(parts, Method::Series))
}

/// Reduced-order budget: the full-order series with `(v_i, w_i)` in place of
/// `(l_i, ‖L‖₁)` plus the direct output term `m Σ_{k≥0} h̃(k) / (c_i p_i(k))`.
pub fn epsilon_series_reduced(
    moduli: &[ReducedModulus],
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
    tol: f64,
) -> Result<EpsilonReport> {
    check_inputs(moduli.len(), adj, schedules, tol)?;
    let parts = moduli
        .iter()
        .zip(schedules)
        .map(|(md, s)| {
            if !(md.w.is_finite() && md.w >= 0.0) {
                return Err(Error::invalid(format!("modulus w = {} must be finite and >= 0", md.w)));
            }
            Majorant {
                contraction: md.v,
                gain: md.w,
                direct: true,
                adj,
                label: "v",
            }
            .sum_from(0, 0.0, s, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonReport::from_parts(parts, Method::Series))
}
