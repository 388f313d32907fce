//! Deterministic privacy ledger: the worst-case output deviation of one agent
//! is pushed through the actual observer-deviation matrices and weighed
//! against the noise scale at every step.

use serde::Serialize;

use crate::analysis::{self, ContractionModuli};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matops::{self, Matrix, Vector};
use crate::noise::NoiseSchedule;
use crate::plant::{GainSet, LtiPlant, Observer};

use super::series::{check_inputs, Majorant};
use super::{epsilon_series_full, epsilon_series_reduced, require_scale, AdjacencySpec};

/// Relative slack allowed when comparing the ledger sum to ε.
const VERDICT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerOutcome {
    /// `‖θ_{i0}(k) − θ'_{i0}(k)‖₁ / b_{i0}(k)` for `k = 0..terms.len()`.
    pub terms: Vec<f64>,
    /// Observer-state deviation `β(k)` (reduced path: unmeasured block only).
    #[serde(skip)]
    pub beta: Vec<Vector>,
    pub finite_sum: f64,
    /// Upper bound on the contributions past the recorded steps.
    pub tail: f64,
    /// `S = finite_sum + tail`.
    pub sum: f64,
    /// Series budget of the deviating agent.
    pub eps_ref: f64,
    pub eps_residual: f64,
    /// Series budget over all agents.
    pub epsilon: f64,
    pub holds: bool,
    /// `eps_ref + eps_residual − S`.
    pub slack: f64,
}

impl LedgerOutcome {
    /// Ledger sum restricted to `k <= k_star`.
    pub fn prefix(&self, k_star: usize) -> f64 {
        self.terms.iter().take(k_star + 1).sum()
    }
}

/// Output deviation `Δy(k) = m h̃(k) e₁` injected into agent `i0`'s first output.
pub fn output_deviation(adj: &AdjacencySpec, q: usize, k: usize) -> Vector {
    let mut dy = Vector::zeros(q);
    dy[0] = adj.deviation(k);
    dy
}

struct Propagation {
    /// `β(k+1)` from `β(k)` and `Δy(k)`.
    state: Matrix,
    input: Matrix,
    /// Whether `‖Δy(k)‖₁` is observed directly in the message.
    direct: bool,
}

/// Runs the ledger over `k = 0..=max(horizon, onset)` and bounds the rest by
/// the scalar majorant of the series budget.
#[allow(clippy::too_many_arguments)]
pub fn privacy_ledger(
    plant: &LtiPlant,
    observer: &Observer,
    gains: &GainSet,
    graph: &Graph,
    adj: &AdjacencySpec,
    schedules: &[NoiseSchedule],
    horizon: usize,
    tol: f64,
) -> Result<LedgerOutcome> {
    let n_agents = graph.node_count();
    check_inputs(n_agents, adj, schedules, tol)?;
    plant.check_feedback_gain(&gains.k)?;
    let schedule = &schedules[adj.i0];
    require_scale(schedule.c)?;
    let degrees = graph.degrees();
    let d = degrees[adj.i0];

    let (prop, eps_report, label) = match observer {
        Observer::Full { l } => {
            plant.check_observer_gain(l)?;
            let moduli = match analysis::full_moduli(plant, l, gains, &degrees) {
                ContractionModuli::Full(v) => v,
                ContractionModuli::Reduced(_) => unreachable!(),
            };
            let l_norm = matops::induced_one_norm(l);
            let rep = epsilon_series_full(&moduli, l_norm, adj, schedules, tol)?;
            let prop = Propagation {
                state: analysis::full_deviation_matrix(plant, l, &gains.k, d),
                input: l.clone(),
                direct: false,
            };
            (prop, rep, "l")
        }
        Observer::Reduced(rf) => {
            let moduli = match analysis::reduced_moduli(rf, gains, &degrees)? {
                ContractionModuli::Reduced(v) => v,
                ContractionModuli::Full(_) => unreachable!(),
            };
            let rep = epsilon_series_reduced(&moduli, adj, schedules, tol)?;
            let (v, w) = analysis::reduced_deviation_matrices(rf, gains, d)?;
            let prop = Propagation {
                state: v,
                input: w,
                direct: true,
            };
            (prop, rep, "v")
        }
    };

    let q = plant.q();
    let last = horizon.max(adj.settled_from());
    let mut beta = Vector::zeros(prop.state.nrows());
    let mut betas = Vec::with_capacity(last + 2);
    let mut terms = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let dy = output_deviation(adj, q, k);
        let mut num = matops::l1(&beta);
        if prop.direct {
            num += matops::l1(&dy);
        }
        let b = schedule.scale_at(k)?;
        let t = if num == 0.0 { 0.0 } else { num / b };
        if !t.is_finite() {
            return Err(Error::Numeric(format!("ledger term overflowed at k = {k}")));
        }
        terms.push(t);
        let next = &prop.state * &beta + &prop.input * dy;
        betas.push(std::mem::replace(&mut beta, next));
    }
    betas.push(beta.clone());

    let majorant = Majorant {
        contraction: matops::induced_one_norm(&prop.state),
        gain: matops::induced_one_norm(&prop.input),
        direct: prop.direct,
        adj,
        label,
    };
    let (tail_sum, tail_res) = majorant.sum_from(last + 1, matops::l1(&beta), schedule, tol)?;
    let tail = tail_sum + tail_res;
    let finite_sum = kahan(&terms);
    let sum = finite_sum + tail;
    let eps_ref = eps_report.per_agent[adj.i0];
    let eps_residual = eps_report.truncation_residual;
    let bound = eps_ref + eps_residual;
    Ok(LedgerOutcome {
        terms,
        beta: betas,
        finite_sum,
        tail,
        sum,
        eps_ref,
        eps_residual,
        epsilon: eps_report.epsilon,
        holds: sum <= bound * (1.0 + VERDICT_RTOL) + tol,
        slack: bound - sum,
    })
}

fn kahan(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_topology, Topology};
    use crate::privacy::epsilon_closed_exp_full;

    fn scalar() -> (LtiPlant, Observer, GainSet, Graph) {
        let one = |v: f64| Matrix::from_element(1, 1, v);
        let plant = LtiPlant::new(one(0.5), one(1.0), one(1.0)).unwrap();
        // P2: degree 1, A - LC - dBK = 0.5 - 0.2 - 0.1 = 0.2
        (
            plant,
            Observer::Full { l: one(0.2) },
            GainSet::new(one(0.1)),
            make_topology(&Topology::Complete, 2).unwrap(),
        )
    }

    #[test]
    fn scalar_toy_is_exact() {
        let (plant, obs, gains, graph) = scalar();
        let adj = AdjacencySpec::geometric(0, 0, 1.0, 0.4).unwrap();
        let s = vec![NoiseSchedule::exponential(2.0, 0.8).unwrap(); 2];
        let out = privacy_ledger(&plant, &obs, &gains, &graph, &adj, &s, 50, 1e-12).unwrap();
        assert!((out.sum - 1.0 / 3.0).abs() < 1e-12, "{}", out.sum);
        let closed = epsilon_closed_exp_full(0.2, 0.2, 1.0, 0.4, 2.0, 0.8).unwrap();
        assert!((out.sum - closed).abs() < 1e-12);
        assert!(out.holds);
        // β(k) = 0.4^k - 0.2^k
        for (k, b) in out.beta.iter().enumerate().take(20) {
            assert!((b[0] - (0.4f64.powi(k as i32) - 0.2f64.powi(k as i32))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_deviation_is_zero() {
        let (plant, obs, gains, graph) = scalar();
        let adj = AdjacencySpec::geometric(1, 0, 0.0, 0.4).unwrap();
        let s = vec![NoiseSchedule::exponential(2.0, 0.8).unwrap(); 2];
        let out = privacy_ledger(&plant, &obs, &gains, &graph, &adj, &s, 10, 1e-12).unwrap();
        assert_eq!(out.sum, 0.0);
        assert!(out.holds);
    }

    #[test]
    fn prefix_sums_terms() {
        let (plant, obs, gains, graph) = scalar();
        let adj = AdjacencySpec::geometric(0, 1, 1.0, 0.4).unwrap();
        let s = vec![NoiseSchedule::exponential(2.0, 0.8).unwrap(); 2];
        let out = privacy_ledger(&plant, &obs, &gains, &graph, &adj, &s, 10, 1e-12).unwrap();
        assert_eq!(out.prefix(1), 0.0);
        assert!((out.prefix(2) - 0.2 / (2.0 * 0.64)).abs() < 1e-15);
    }

    #[test]
    fn example_one_ledger_is_within_budget() {
        let plant = LtiPlant::new(
            matops::diag(&[1.2, 0.5]),
            Matrix::identity(2, 2),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let obs = Observer::Full {
            l: Matrix::from_row_slice(2, 1, &[0.5, 0.45]),
        };
        let gains = GainSet::new(Matrix::from_row_slice(2, 2, &[0.18, 0.0, 0.0, 0.0]));
        let graph = make_topology(&Topology::Circulant(vec![1, 2, 3]), 10).unwrap();
        let adj = AdjacencySpec::geometric(0, 0, 0.5, 0.5).unwrap();
        let s = vec![NoiseSchedule::exponential(1.2, 0.9).unwrap(); 10];
        let out = privacy_ledger(&plant, &obs, &gains, &graph, &adj, &s, 500, 1e-10).unwrap();
        assert!(out.holds, "{out:?}");
        assert!(out.sum <= 12.7232);
        assert!((out.eps_ref - 0.4275 / 0.0336).abs() < 1e-6);
    }
}
