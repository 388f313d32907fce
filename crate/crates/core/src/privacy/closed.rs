//! Closed-form privacy budgets obtained by exchanging the order of summation.

use crate::analysis::ReducedModulus;
use crate::error::{Error, Result};
use crate::noise::{NoiseSchedule, ScheduleKind};

use super::series::check_inputs;
use super::{require_scale, sum_ratio_tail, AdjacencySpec, EpsilonReport, Method};

fn check_common(m: f64, c: f64, contraction: f64, label: &str) -> Result<()> {
    require_scale(c)?;
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::invalid(format!("deviation magnitude m = {m} must be >= 0")));
    }
    if !(contraction.is_finite() && contraction >= 0.0) {
        return Err(Error::invalid(format!("modulus {label} = {contraction} must be finite and >= 0")));
    }
    Ok(())
}

fn check_exp(contraction: f64, alpha: f64, g: f64, label: &str) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("deviation decay alpha = {alpha} must lie in (0, 1)")));
    }
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::invalid(format!("noise decay g = {g} must lie in (0, 1)")));
    }
    if g <= contraction.max(alpha) {
        return Err(Error::Divergent(format!(
            "g = {g} must exceed max({label}, alpha) = {}",
            contraction.max(alpha)
        )));
    }
    Ok(())
}

/// `ε_i = m g ‖L‖₁ / (c (g − l)(g − α))` for `h(b) = α^b`, `p(k) = g^k`, `k0 = 0`.
pub fn epsilon_closed_exp_full(l: f64, l_norm: f64, m: f64, alpha: f64, c: f64, g: f64) -> Result<f64> {
    check_common(m, c, l, "l")?;
    check_exp(l, alpha, g, "l")?;
    Ok(m * g * l_norm / (c * (g - l) * (g - alpha)))
}

/// `ε_i = m g (w + g − v) / (c (g − v)(g − α))`.
pub fn epsilon_closed_exp_reduced(v: f64, w: f64, m: f64, alpha: f64, c: f64, g: f64) -> Result<f64> {
    check_common(m, c, v, "v")?;
    check_exp(v, alpha, g, "v")?;
    Ok(m * g * (w + g - v) / (c * (g - v) * (g - alpha)))
}

/// `Σ_{t≥0} (b + t + 2)² l^t · (1 − l)³`.
fn poly_bracket(b: f64, l: f64) -> f64 {
    (b + 2.0).powi(2) - (2.0 * b * b + 6.0 * b + 3.0) * l + (b + 1.0).powi(2) * l * l
}

fn check_poly(l: f64, label: &str) -> Result<()> {
    if l >= 1.0 {
        return Err(Error::Divergent(format!("{label} = {l} >= 1 has a pole in the polynomial closed form")));
    }
    Ok(())
}

/// Budget for `p(k) = (k + 1)^{-2}`:
/// `ε_i = ‖L‖₁ m / (c (1 − l)³) Σ_b h̃(b) [(b+2)² − (2b²+6b+3) l + (b+1)² l²]`.
///
/// Returns `(value, truncation_residual)`.
pub fn epsilon_closed_poly_full(l: f64, l_norm: f64, adj: &AdjacencySpec, c: f64, tol: f64) -> Result<(f64, f64)> {
    adj.validate()?;
    check_common(adj.m, c, l, "l")?;
    check_poly(l, "l")?;
    let scale = l_norm * adj.m / (c * (1.0 - l).powi(3));
    sum_ratio_tail(
        |b| scale * adj.profile(b) * poly_bracket(b as f64, l),
        adj.k0,
        adj.settled_from(),
        tol,
    )
}

/// Reduced analogue: `w` times the full-order sum with `v`, plus the direct
/// term `m / c Σ_b h̃(b) (b + 1)²`.
pub fn epsilon_closed_poly_reduced(v: f64, w: f64, adj: &AdjacencySpec, c: f64, tol: f64) -> Result<(f64, f64)> {
    adj.validate()?;
    check_common(adj.m, c, v, "v")?;
    check_poly(v, "v")?;
    let scale = w * adj.m / (c * (1.0 - v).powi(3));
    let direct = adj.m / c;
    sum_ratio_tail(
        |b| {
            let bf = b as f64;
            adj.profile(b) * (scale * poly_bracket(bf, v) + direct * (bf + 1.0).powi(2))
        },
        adj.k0,
        adj.settled_from(),
        tol,
    )
}

/// `Σ_b h̃(b) g^{-b}` for a finitely supported profile.
fn weighted_profile_sum(adj: &AdjacencySpec, g: f64) -> f64 {
    (adj.k0..adj.settled_from()).map(|b| adj.profile(b) * g.powi(-(b as i32))).sum()
}

/// Upper bound `m g ‖L‖₁ / (c (g − l)²)`, tight when `l = α`.
pub fn simplified_bound_full(l: f64, l_norm: f64, m: f64, c: f64, g: f64) -> Result<f64> {
    check_common(m, c, l, "l")?;
    if l >= g {
        return Err(Error::Divergent(format!("simplified bound needs l < g, got l = {l}, g = {g}")));
    }
    Ok(m * g * l_norm / (c * (g - l) * (g - l)))
}

fn check_strict(contraction: f64, alpha: f64, g: f64, label: &str) -> Result<()> {
    if !(alpha < contraction && contraction < g) {
        return Err(Error::invalid(format!(
            "strict mode requires alpha < {label} < g, got alpha = {alpha}, {label} = {contraction}, g = {g}"
        )));
    }
    Ok(())
}

fn common_method(schedules: &[NoiseSchedule]) -> Result<Method> {
    let method_of = |s: &NoiseSchedule| match s.kind {
        ScheduleKind::Exponential { .. } => Ok(Method::ClosedExp),
        ScheduleKind::Polynomial { power: 2 } => Ok(Method::ClosedPoly),
        ScheduleKind::Polynomial { power } => Err(Error::invalid(format!(
            "polynomial closed form covers power 2 only, got power {power}"
        ))),
        ScheduleKind::Custom { .. } => Err(Error::invalid("closed forms need an exponential or polynomial schedule")),
    };
    let first = method_of(&schedules[0])?;
    for s in &schedules[1..] {
        if method_of(s)? != first {
            return Err(Error::invalid("closed forms need every agent on the same schedule family"));
        }
    }
    Ok(first)
}

/// Per-agent closed forms on the full-order path. Exponential schedules with
/// geometric deviation use the rational form, scaled by `g^{-k0}`; a custom
/// deviation sequence uses `m ‖L‖₁ / (c (g − l)) Σ_b h̃(b) g^{-b}`.
pub fn epsilon_closed_full(
    moduli: &[f64],
    l_norm: f64,
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
    strict: bool,
    tol: f64,
) -> Result<EpsilonReport> {
    check_inputs(moduli.len(), adj, schedules, tol)?;
    let method = common_method(schedules)?;
    let mut parts = Vec::with_capacity(moduli.len());
    for (&l, s) in moduli.iter().zip(schedules) {
        let part = match (s.kind.clone(), adj.alpha()) {
            (ScheduleKind::Exponential { g }, Some(alpha)) => {
                if strict {
                    check_strict(l, alpha, g, "l")?;
                }
                let e = epsilon_closed_exp_full(l, l_norm, adj.m, alpha, s.c, g)?;
                (e * g.powi(-(adj.k0 as i32)), 0.0)
            }
            (ScheduleKind::Exponential { g }, None) => {
                check_common(adj.m, s.c, l, "l")?;
                if l >= g {
                    return Err(Error::Divergent(format!("g = {g} must exceed l = {l}")));
                }
                (adj.m * l_norm / (s.c * (g - l)) * weighted_profile_sum(adj, g), 0.0)
            }
            _ => epsilon_closed_poly_full(l, l_norm, adj, s.c, tol)?,
        };
        parts.push(part);
    }
    Ok(EpsilonReport::from_parts(parts, method))
}

/// Per-agent closed forms on the reduced-order path.
pub fn epsilon_closed_reduced(
    moduli: &[ReducedModulus],
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
    strict: bool,
    tol: f64,
) -> Result<EpsilonReport> {
    check_inputs(moduli.len(), adj, schedules, tol)?;
    let method = common_method(schedules)?;
    let mut parts = Vec::with_capacity(moduli.len());
    for (md, s) in moduli.iter().zip(schedules) {
        let ReducedModulus { v, w } = *md;
        let part = match (s.kind.clone(), adj.alpha()) {
            (ScheduleKind::Exponential { g }, Some(alpha)) => {
                if strict {
                    check_strict(v, alpha, g, "v")?;
                }
                let e = epsilon_closed_exp_reduced(v, w, adj.m, alpha, s.c, g)?;
                (e * g.powi(-(adj.k0 as i32)), 0.0)
            }
            (ScheduleKind::Exponential { g }, None) => {
                check_common(adj.m, s.c, v, "v")?;
                if v >= g {
                    return Err(Error::Divergent(format!("g = {g} must exceed v = {v}")));
                }
                let factor = adj.m * (w + g - v) / (s.c * (g - v));
                (factor * weighted_profile_sum(adj, g), 0.0)
            }
            _ => epsilon_closed_poly_reduced(v, w, adj, s.c, tol)?,
        };
        parts.push(part);
    }
    Ok(EpsilonReport::from_parts(parts, method))
}

/// Simplified bound per agent, scaled by `g^{-k0}` like the exact form.
pub fn simplified_bound_report(
    moduli: &[f64],
    l_norm: f64,
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
) -> Result<EpsilonReport> {
    check_inputs(moduli.len(), adj, schedules, 1.0)?;
    let alpha = adj
        .alpha()
        .ok_or_else(|| Error::invalid("simplified bound needs a geometric deviation profile"))?;
    let mut parts = Vec::with_capacity(moduli.len());
    for (&l, s) in moduli.iter().zip(schedules) {
        let g = s
            .exponential_rate()
            .ok_or_else(|| Error::invalid("simplified bound needs exponential schedules"))?;
        if l <= alpha {
            return Err(Error::invalid(format!("simplified bound holds only for l > alpha, got l = {l}, alpha = {alpha}")));
        }
        let b = simplified_bound_full(l, l_norm, adj.m, s.c, g)?;
        parts.push((b * g.powi(-(adj.k0 as i32)), 0.0));
    }
    Ok(EpsilonReport::from_parts(parts, Method::SimplifiedBound))
}
