//! Choosing the noise decay rate `g` so that the closed-form budget equals a
//! prescribed level `ε*`.

use serde::Serialize;

use crate::error::{Error, Result};

use super::closed::{epsilon_closed_exp_full, epsilon_closed_exp_reduced};

/// Outcome of a design query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Design {
    /// Decay rate achieving `ε*` exactly.
    Rate { g: f64 },
    /// Zero sensitivity: any admissible `g` gives `ε = 0`.
    Unconstrained,
}

impl Design {
    pub fn rate(&self) -> Option<f64> {
        match self {
            Design::Rate { g } => Some(*g),
            Design::Unconstrained => None,
        }
    }
}

fn check_args(eps_star: f64, m: f64, alpha: f64, contraction: f64, c: f64, label: &str) -> Result<()> {
    if !(eps_star > 0.0 && eps_star.is_finite()) {
        return Err(Error::invalid(format!("target eps* = {eps_star} must be positive")));
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::invalid(format!("deviation magnitude m = {m} must be >= 0")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("deviation decay alpha = {alpha} must lie in (0, 1)")));
    }
    if !(0.0..1.0).contains(&contraction) {
        return Err(Error::invalid(format!("modulus {label} = {contraction} must lie in [0, 1)")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("noise scale c = {c} must be positive")));
    }
    Ok(())
}

/// Real roots of `a x² + b x + c0`, falling back to the linear equation when
/// `a` is negligible relative to the other coefficients.
fn real_roots(a: f64, b: f64, c0: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c0.abs());
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c0 / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c0 / q]
}

fn pick_root(roots: Vec<f64>, lo: f64) -> Result<f64> {
    let inside: Vec<f64> = roots.into_iter().filter(|&x| x > lo && x < 1.0).collect();
    match inside.as_slice() {
        [g] => Ok(*g),
        [] => Err(Error::Numeric(format!(
            "design quadratic has no root in ({lo}, 1) despite feasibility"
        ))),
        _ => Err(Error::Numeric(format!(
            "design quadratic has two roots in ({lo}, 1): {inside:?}"
        ))),
    }
}

/// Root of `ε* c g² − [ε* c (α + l) + m ‖L‖₁] g + ε* c α l = 0` in `(max(l, α), 1)`.
///
/// Feasible iff `m ‖L‖₁ < ε* c (1 − α)(1 − l)`; otherwise the error carries
/// the margin `m ‖L‖₁ − ε* c (1 − α)(1 − l)`.
pub fn design_g_full(eps_star: f64, m: f64, alpha: f64, l: f64, c: f64, l_norm: f64) -> Result<Design> {
    check_args(eps_star, m, alpha, l, c, "l")?;
    if !(l_norm.is_finite() && l_norm >= 0.0) {
        return Err(Error::invalid(format!("observer gain norm {l_norm} must be finite and >= 0")));
    }
    if m == 0.0 || l_norm == 0.0 {
        return Ok(Design::Unconstrained);
    }
    let ec = eps_star * c;
    let margin = m * l_norm - ec * (1.0 - alpha) * (1.0 - l);
    if margin >= 0.0 {
        return Err(Error::Infeasible {
            message: format!("eps* = {eps_star} unreachable: m ||L||_1 >= eps* c (1 - alpha)(1 - l)"),
            margin,
        });
    }
    let g = pick_root(
        real_roots(ec, -(ec * (alpha + l) + m * l_norm), ec * alpha * l),
        l.max(alpha),
    )?;
    epsilon_closed_exp_full(l, l_norm, m, alpha, c, g)?;
    Ok(Design::Rate { g })
}

/// Root of `(ε* c − m) x² − [ε* c (α + v) + m (w − v)] x + ε* c α v = 0` in
/// `(max(v, α), 1)`.
///
/// Feasible iff `m (w + 1 − v) < ε* c (1 − α)(1 − v)`; the error margin is
/// `m (w + 1 − v) − ε* c (1 − α)(1 − v)`.
pub fn design_g_reduced(eps_star: f64, m: f64, alpha: f64, v: f64, w: f64, c: f64) -> Result<Design> {
    check_args(eps_star, m, alpha, v, c, "v")?;
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::invalid(format!("modulus w = {w} must be finite and >= 0")));
    }
    if m == 0.0 {
        return Ok(Design::Unconstrained);
    }
    let ec = eps_star * c;
    let margin = m * (w + 1.0 - v) - ec * (1.0 - alpha) * (1.0 - v);
    if margin >= 0.0 {
        return Err(Error::Infeasible {
            message: format!("eps* = {eps_star} unreachable: m (w + 1 - v) >= eps* c (1 - alpha)(1 - v)"),
            margin,
        });
    }
    let g = pick_root(
        real_roots(ec - m, -(ec * (alpha + v) + m * (w - v)), ec * alpha * v),
        v.max(alpha),
    )?;
    epsilon_closed_exp_reduced(v, w, m, alpha, c, g)?;
    Ok(Design::Rate { g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_reference_root() {
        let g = design_g_full(10.0, 0.5, 0.5, 0.7, 1.2, 0.95).unwrap().rate().unwrap();
        assert!((g - 0.80457).abs() < 1e-5, "{g}");
        let e = epsilon_closed_exp_full(0.7, 0.95, 0.5, 0.5, 1.2, g).unwrap();
        assert!((e - 10.0).abs() / 10.0 < 1e-8);
    }

    #[test]
    fn reduced_reference_root() {
        let g = design_g_reduced(8.0, 0.5, 0.5, 0.4, 1.04, 0.5).unwrap().rate().unwrap();
        assert!((g - 0.85160).abs() < 1e-5, "{g}");
        let e = epsilon_closed_exp_reduced(0.4, 1.04, 0.5, 0.5, 0.5, g).unwrap();
        assert!((e - 8.0).abs() / 8.0 < 1e-8);
    }

    #[test]
    fn zero_sensitivity_is_unconstrained() {
        assert_eq!(design_g_full(10.0, 0.0, 0.5, 0.7, 1.2, 0.95).unwrap(), Design::Unconstrained);
        assert_eq!(design_g_reduced(8.0, 0.0, 0.5, 0.4, 1.04, 0.5).unwrap(), Design::Unconstrained);
    }

    #[test]
    fn infeasible_reports_margin() {
        // m ||L|| = 2, eps* c (1-α)(1-l) = 1.8
        match design_g_full(12.0, 2.0, 0.5, 0.7, 1.0, 1.0) {
            Err(Error::Infeasible { margin, .. }) => assert!((margin - 0.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        match design_g_reduced(1.0, 0.5, 0.5, 0.4, 1.04, 0.5) {
            Err(Error::Infeasible { margin, .. }) => {
                let want = 0.5 * (1.04 + 1.0 - 0.4) - 0.5 * 0.5 * 0.6;
                assert!((margin - want).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_leading_coefficient() {
        assert_eq!(real_roots(0.0, -2.0, 1.0), vec![0.5]);
        assert!(real_roots(0.0, 0.0, 1.0).is_empty());
        // eps* c = m is always infeasible on the reduced path
        assert!(matches!(design_g_reduced(1.0, 1.0, 0.5, 0.4, 0.0, 1.0), Err(Error::Infeasible { .. })));
    }

    proptest! {
        #[test]
        fn full_round_trip(l in 0.0f64..0.95, alpha in 0.01f64..0.95, c in 0.1f64..5.0,
                           m in 0.01f64..2.0, ln in 0.01f64..3.0, eps in 0.5f64..200.0) {
            match design_g_full(eps, m, alpha, l, c, ln) {
                Ok(Design::Rate { g }) => {
                    prop_assert!(g > l.max(alpha) && g < 1.0);
                    let e = epsilon_closed_exp_full(l, ln, m, alpha, c, g).unwrap();
                    prop_assert!((e - eps).abs() / eps < 1e-8, "{} vs {}", e, eps);
                }
                Err(Error::Infeasible { margin, .. }) => prop_assert!(margin >= 0.0),
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn reduced_round_trip(v in 0.0f64..0.95, w in 0.0f64..3.0, alpha in 0.01f64..0.95,
                              c in 0.1f64..5.0, m in 0.01f64..2.0, eps in 0.5f64..200.0) {
            match design_g_reduced(eps, m, alpha, v, w, c) {
                Ok(Design::Rate { g }) => {
                    prop_assert!(g > v.max(alpha) && g < 1.0);
                    let e = epsilon_closed_exp_reduced(v, w, m, alpha, c, g).unwrap();
                    prop_assert!((e - eps).abs() / eps < 1e-8, "{} vs {}", e, eps);
                }
                Err(Error::Infeasible { margin, .. }) => prop_assert!(margin >= 0.0),
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
