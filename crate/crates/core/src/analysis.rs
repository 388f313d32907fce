//! Consensus and observer condition checks, contraction moduli, theoretical
//! mean-square rates, and the compact / transformed network dynamics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSpectrum};
use crate::matops::{self, kron, Matrix, Vector};
use crate::noise::NoiseSchedule;
use crate::plant::{GainSet, LtiPlant, ReducedForm};

/// Outcome of the spectral-radius and summability checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `ρ(A − LC)` or `ρ(Ā11 − L̄Ā21)`.
    pub rho_observer: f64,
    /// `ρ(I_{N−1} ⊗ A − Λ ⊗ BK)` on the plant matrices.
    pub rho_consensus: f64,
    /// Reduced path only: the same radius on the canonical pair `(Ā, B̄)`,
    /// which governs the simulated closed loop when `P ≠ I`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_consensus_canonical: Option<f64>,
    pub summable_noise: Vec<bool>,
    pub pass: bool,
}

fn connected_spectrum(graph: &Graph) -> Result<GraphSpectrum> {
    let spec = graph.spectrum()?;
    if !spec.is_connected() {
        return Err(Error::invalid(format!(
            "communication graph is disconnected (lambda_2 = {:e})",
            spec.fiedler()
        )));
    }
    Ok(spec)
}

/// `I_{N−1} ⊗ A − Λ ⊗ BK`.
pub fn consensus_matrix(a: &Matrix, b: &Matrix, k: &Matrix, spectrum: &GraphSpectrum) -> Matrix {
    let lambda = spectrum.lambda();
    let eye = Matrix::identity(lambda.nrows(), lambda.nrows());
    kron(&eye, a) - kron(&lambda, &(b * k))
}

fn finish(rho_observer: f64, rho_consensus: f64, canonical: Option<f64>, schedules: &[NoiseSchedule]) -> ConditionReport {
    let summable_noise: Vec<bool> = schedules.iter().map(NoiseSchedule::is_summable).collect();
    let pass = matops::is_stable(rho_observer)
        && matops::is_stable(rho_consensus)
        && summable_noise.iter().all(|&s| s);
    ConditionReport {
        rho_observer,
        rho_consensus,
        rho_consensus_canonical: canonical,
        summable_noise,
        pass,
    }
}

fn check_schedule_count(graph: &Graph, schedules: &[NoiseSchedule]) -> Result<()> {
    if schedules.len() != graph.node_count() {
        return Err(Error::dim("noise schedules per agent", graph.node_count(), schedules.len()));
    }
    Ok(())
}

/// Mean-square / almost-sure consensus conditions with a full-order observer.
pub fn check_full_conditions(
    plant: &LtiPlant,
    l: &Matrix,
    gains: &GainSet,
    graph: &Graph,
    schedules: &[NoiseSchedule],
) -> Result<ConditionReport> {
    plant.check_observer_gain(l)?;
    plant.check_feedback_gain(&gains.k)?;
    check_schedule_count(graph, schedules)?;
    let spec = connected_spectrum(graph)?;
    let rho_observer = matops::spectral_radius_named(&(&plant.a - l * &plant.c), "A - LC")?;
    let rho_consensus = matops::spectral_radius_named(
        &consensus_matrix(&plant.a, &plant.b, &gains.k, &spec),
        "I (x) A - Lambda (x) BK",
    )?;
    Ok(finish(rho_observer, rho_consensus, None, schedules))
}

/// Consensus conditions with a reduced-order observer.
pub fn check_reduced_conditions(
    rf: &ReducedForm,
    gains: &GainSet,
    graph: &Graph,
    schedules: &[NoiseSchedule],
    plant: &LtiPlant,
) -> Result<ConditionReport> {
    plant.check_feedback_gain(&gains.k)?;
    check_schedule_count(graph, schedules)?;
    let spec = connected_spectrum(graph)?;
    let rho_observer = matops::spectral_radius_named(&rf.error_matrix(), "Abar11 - Lbar Abar21")?;
    let rho_consensus = matops::spectral_radius_named(
        &consensus_matrix(&plant.a, &plant.b, &gains.k, &spec),
        "I (x) A - Lambda (x) BK",
    )?;
    let canonical = matops::spectral_radius_named(
        &consensus_matrix(&rf.a_bar(), &rf.b_bar(), &gains.k, &spec),
        "I (x) Abar - Lambda (x) Bbar K",
    )?;
    Ok(finish(rho_observer, rho_consensus, Some(canonical), schedules))
}

/// `v_i`, `w_i` for one agent on the reduced path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedModulus {
    pub v: f64,
    pub w: f64,
}

/// Per-agent contraction moduli governing output-deviation propagation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractionModuli {
    /// `l_i = ‖A − LC − d_i BK‖₁`.
    Full(Vec<f64>),
    /// `v_i = ‖Ā11 − d_i B̄1 K1‖₁`, `w_i = ‖Ā12 − d_i B̄1 K2‖₁`.
    Reduced(Vec<ReducedModulus>),
}

impl ContractionModuli {
    pub fn len(&self) -> usize {
        match self {
            ContractionModuli::Full(v) => v.len(),
            ContractionModuli::Reduced(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full-order deviation propagation matrix `A − LC − d BK`.
pub fn full_deviation_matrix(plant: &LtiPlant, l: &Matrix, k: &Matrix, degree: usize) -> Matrix {
    &plant.a - l * &plant.c - &plant.b * k * degree as f64
}

/// Reduced-order propagation pair `(Ā11 − d B̄1 K1, Ā12 − d B̄1 K2)`.
pub fn reduced_deviation_matrices(rf: &ReducedForm, gains: &GainSet, degree: usize) -> Result<(Matrix, Matrix)> {
    let (k1, k2) = gains.split(rf.unmeasured())?;
    let d = degree as f64;
    Ok((&rf.a11 - &rf.b1 * k1 * d, &rf.a12 - &rf.b1 * k2 * d))
}

pub fn full_moduli(plant: &LtiPlant, l: &Matrix, gains: &GainSet, degrees: &[usize]) -> ContractionModuli {
    ContractionModuli::Full(
        degrees
            .iter()
            .map(|&d| matops::induced_one_norm(&full_deviation_matrix(plant, l, &gains.k, d)))
            .collect(),
    )
}

pub fn reduced_moduli(rf: &ReducedForm, gains: &GainSet, degrees: &[usize]) -> Result<ContractionModuli> {
    let mut out = Vec::with_capacity(degrees.len());
    for &d in degrees {
        let (vm, wm) = reduced_deviation_matrices(rf, gains, d)?;
        out.push(ReducedModulus {
            v: matops::induced_one_norm(&vm),
            w: matops::induced_one_norm(&wm),
        });
    }
    Ok(ContractionModuli::Reduced(out))
}

/// `max(ρ_consensus, ρ_observer, max g_i)`.
pub fn ms_rate(rho_consensus: f64, rho_observer: f64, max_g: f64) -> f64 {
    rho_consensus.max(rho_observer).max(max_g)
}

/// Theoretical mean-square convergence rate for exponential noise schedules.
///
/// Silent schedules (`c = 0`) contribute nothing to the noise term.
pub fn theoretical_ms_rate(report: &ConditionReport, schedules: &[NoiseSchedule]) -> Result<f64> {
    let mut max_g: f64 = 0.0;
    for s in schedules {
        let g = s
            .exponential_rate()
            .ok_or_else(|| Error::invalid("rate theorem requires exponential scales"))?;
        if !s.is_silent() {
            max_g = max_g.max(g);
        }
    }
    Ok(ms_rate(report.rho_consensus, report.rho_observer, max_g))
}

/// Network dynamics in stacked coordinates:
/// `x⁺ = [(I⊗A) − (L_G⊗BK)] x + (L_G⊗BK) e + (A_G⊗BK) η`.
#[derive(Debug, Clone)]
pub struct CompactSystem {
    pub state: Matrix,
    pub error_input: Matrix,
    pub noise_input: Matrix,
}

impl CompactSystem {
    pub fn new(plant: &LtiPlant, gains: &GainSet, graph: &Graph) -> Self {
        let n_agents = graph.node_count();
        let bk = &plant.b * &gains.k;
        let lg = graph.laplacian();
        CompactSystem {
            state: kron(&Matrix::identity(n_agents, n_agents), &plant.a) - kron(&lg, &bk),
            error_input: kron(&lg, &bk),
            noise_input: kron(&graph.adjacency_matrix(), &bk),
        }
    }

    pub fn step(&self, x: &Vector, e: &Vector, eta: &Vector) -> Vector {
        &self.state * x + &self.error_input * e + &self.noise_input * eta
    }
}

/// Decoupled consensus/observer-error coordinates
/// `ξ⁺ = R₁ξ + R₂ψ + M̃η`, `ψ⁺ = R₃ψ`.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub psi_basis: Matrix,
    pub r1: Matrix,
    pub r2: Matrix,
    pub r3: Matrix,
    /// `(N−1)n x Nn`; acts on the noise of every agent.
    pub m_tilde: Matrix,
    n: usize,
}

/// Orthonormal `Ψ = [1/√N, φ₂, …, φ_N]` with each `φ` sign-normalized so its
/// first nonzero component is positive.
pub fn laplacian_basis(spectrum: &GraphSpectrum) -> Result<Matrix> {
    let n = spectrum.eigenvalues.len();
    let mut psi = spectrum.eigenvectors.clone();
    psi.column_mut(0).fill(1.0 / (n as f64).sqrt());
    for j in 1..n {
        let mut col = psi.column_mut(j);
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    let gram_err = (psi.transpose() * &psi - Matrix::identity(n, n)).abs().max();
    if gram_err > 1e-10 {
        return Err(Error::Numeric(format!(
            "Laplacian eigenvectors are not orthonormal (error {gram_err:e})"
        )));
    }
    Ok(psi)
}

pub fn build_transformed(plant: &LtiPlant, l: &Matrix, gains: &GainSet, graph: &Graph) -> Result<TransformedSystem> {
    plant.check_observer_gain(l)?;
    plant.check_feedback_gain(&gains.k)?;
    let spec = connected_spectrum(graph)?;
    let psi = laplacian_basis(&spec)?;
    let n_agents = graph.node_count();
    let n = plant.n();
    let phi = psi.columns(1, n_agents - 1).into_owned();
    let lambda = spec.lambda();
    let bk = &plant.b * &gains.k;
    let eye = Matrix::identity(n_agents - 1, n_agents - 1);
    let ag = graph.adjacency_matrix();
    let jn = Matrix::from_element(n_agents, n_agents, 1.0 / n_agents as f64);
    Ok(TransformedSystem {
        r1: kron(&eye, &plant.a) - kron(&lambda, &bk),
        r2: kron(&lambda, &bk),
        r3: kron(&eye, &(&plant.a - l * &plant.c)),
        m_tilde: kron(&(phi.transpose() * (&ag - &jn * &ag)), &bk),
        psi_basis: psi,
        n,
    })
}

impl TransformedSystem {
    fn project(&self, stacked: &Vector, skip_first: bool) -> Vector {
        let psi_t = kron(&self.psi_basis.transpose(), &Matrix::identity(self.n, self.n));
        let full = psi_t * stacked;
        if skip_first {
            full.rows(self.n, full.len() - self.n).into_owned()
        } else {
            full
        }
    }

    /// All transformed consensus coordinates `δ̃ = (Ψᵀ ⊗ I)(I − J) x`.
    pub fn delta_tilde(&self, x: &Vector) -> Vector {
        let agents = x.len() / self.n;
        let jn = Matrix::from_element(agents, agents, 1.0 / agents as f64);
        let centering = kron(&(Matrix::identity(agents, agents) - jn), &Matrix::identity(self.n, self.n));
        self.project(&(centering * x), false)
    }

    /// `ξ = (Φᵀ ⊗ I) x`.
    pub fn xi(&self, x: &Vector) -> Vector {
        self.project(x, true)
    }

    /// `ψ = (Φᵀ ⊗ I) e`.
    pub fn psi(&self, e: &Vector) -> Vector {
        self.project(e, true)
    }

    pub fn step(&self, xi: &Vector, psi: &Vector, eta: &Vector) -> (Vector, Vector) {
        (&self.r1 * xi + &self.r2 * psi + &self.m_tilde * eta, &self.r3 * psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_topology, Topology};
    use approx::assert_abs_diff_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn example1() -> (LtiPlant, Matrix, GainSet) {
        (
            LtiPlant::new(matops::diag(&[1.2, 0.5]), Matrix::identity(2, 2), m(1, 2, &[1.0, 0.0])).unwrap(),
            m(2, 1, &[0.5, 0.45]),
            GainSet::new(m(2, 2, &[0.18, 0.0, 0.0, 0.0])),
        )
    }

    fn schedules(n: usize) -> Vec<NoiseSchedule> {
        vec![NoiseSchedule::exponential(1.2, 0.95).unwrap(); n]
    }

    fn c10() -> Graph {
        make_topology(&Topology::Circulant(vec![1, 2, 3]), 10).unwrap()
    }

    #[test]
    fn example1_conditions_on_circulant() {
        let (plant, l, k) = example1();
        let g = c10();
        let rep = check_full_conditions(&plant, &l, &k, &g, &schedules(10)).unwrap();
        assert_abs_diff_eq!(rep.rho_observer, 0.7, epsilon = 1e-9);
        let spec = g.spectrum().unwrap();
        let oracle = spec.eigenvalues[1..]
            .iter()
            .map(|lam| (1.2 - 0.18 * lam).abs().max(0.5))
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(rep.rho_consensus, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.rho_consensus, 0.5, epsilon = 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn example1_fails_on_ring() {
        let (plant, l, k) = example1();
        let g = make_topology(&Topology::Ring, 10).unwrap();
        let rep = check_full_conditions(&plant, &l, &k, &g, &schedules(10)).unwrap();
        let lam2 = 2.0 - 2.0 * (36f64.to_radians()).cos();
        assert_abs_diff_eq!(rep.rho_consensus, (1.2 - 0.18 * lam2).abs(), epsilon = 1e-9);
        assert!(!rep.pass);
    }

    #[test]
    fn unstable_observer_fails() {
        let (plant, _, k) = example1();
        let rep = check_full_conditions(&plant, &Matrix::zeros(2, 1), &k, &c10(), &schedules(10)).unwrap();
        assert_abs_diff_eq!(rep.rho_observer, 1.2, epsilon = 1e-12);
        assert!(!rep.pass);
    }

    #[test]
    fn harmonic_noise_fails() {
        let (plant, l, k) = example1();
        let mut s = schedules(10);
        s[3] = NoiseSchedule::polynomial(1.0, 1).unwrap();
        let rep = check_full_conditions(&plant, &l, &k, &c10(), &s).unwrap();
        assert!(!rep.summable_noise[3]);
        assert!(!rep.pass);
    }

    #[test]
    fn disconnected_graph_is_an_error() {
        let (plant, l, k) = example1();
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(check_full_conditions(&plant, &l, &k, &g, &schedules(4)).is_err());
    }

    fn example2() -> (LtiPlant, ReducedForm, GainSet) {
        let plant = LtiPlant::new(matops::diag(&[1.2, 0.5]), Matrix::identity(2, 2), m(1, 2, &[1.0, 0.0])).unwrap();
        let rf = crate::plant::canonicalize_output(&plant, Some(&m(2, 2, &[1.0, 1.0, 1.0, 0.0])))
            .unwrap()
            .with_gain(m(1, 1, &[0.03]))
            .unwrap();
        (plant, rf, GainSet::new(m(2, 2, &[0.05, 0.0, 0.0, -0.02])))
    }

    #[test]
    fn example2_conditions() {
        let (plant, rf, k) = example2();
        let rep = check_reduced_conditions(&rf, &k, &c10(), &schedules(10), &plant).unwrap();
        assert_eq!(rep.rho_observer, 0.5);
        let spec = c10().spectrum().unwrap();
        let oracle = (1.2 - 0.05 * spec.fiedler()).abs().max((0.5 + 0.02 * spec.lambda_max()).abs());
        assert_abs_diff_eq!(rep.rho_consensus, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.rho_consensus, 0.98090169943749, epsilon = 1e-9);
        assert!(rep.rho_consensus_canonical.unwrap() < 1.0);
        assert!(rep.pass);
    }

    #[test]
    fn reduced_unstable_gain_fails() {
        let (plant, rf, k) = example2();
        let rf = rf.with_gain(m(1, 1, &[0.0])).unwrap();
        // Ā21 = 0 makes L̄ irrelevant; bump Ā11 instead
        let mut rf = rf;
        rf.a11[(0, 0)] = 1.1;
        let rep = check_reduced_conditions(&rf, &k, &c10(), &schedules(10), &plant).unwrap();
        assert!(rep.rho_observer >= 1.0);
        assert!(!rep.pass);
    }

    #[test]
    fn moduli_examples() {
        let (plant, l, k) = example1();
        match full_moduli(&plant, &l, &k, &[6, 0]) {
            ContractionModuli::Full(v) => {
                assert_abs_diff_eq!(v[0], 0.83, epsilon = 1e-12);
                assert_abs_diff_eq!(v[1], matops::induced_one_norm(&(&plant.a - &l * &plant.c)), epsilon = 1e-15);
            }
            _ => unreachable!(),
        }
        let printed = ReducedForm {
            p: Matrix::identity(2, 2),
            p_inv: Matrix::identity(2, 2),
            a11: m(1, 1, &[0.5]),
            a12: m(1, 1, &[1.0]),
            a21: m(1, 1, &[0.0]),
            a22: m(1, 1, &[1.5]),
            b1: m(1, 2, &[1.0, 1.0]),
            b2: m(1, 2, &[1.0, 0.0]),
            lbar: m(1, 1, &[0.03]),
        };
        let (_, _, k2) = example2();
        match reduced_moduli(&printed, &k2, &[8]).unwrap() {
            ContractionModuli::Reduced(v) => {
                assert_abs_diff_eq!(v[0].v, 0.1, epsilon = 1e-12);
                assert_abs_diff_eq!(v[0].w, 1.16, epsilon = 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rate_examples() {
        let (plant, l, k) = example1();
        let mut s = vec![NoiseSchedule::exponential(1.2, 0.9).unwrap(); 10];
        s[4] = NoiseSchedule::exponential(1.2, 0.95).unwrap();
        let rep = check_full_conditions(&plant, &l, &k, &c10(), &s).unwrap();
        assert_abs_diff_eq!(theoretical_ms_rate(&rep, &s).unwrap(), 0.95, epsilon = 1e-12);
        let silent = vec![NoiseSchedule::exponential(0.0, 0.9).unwrap(); 10];
        assert_abs_diff_eq!(theoretical_ms_rate(&rep, &silent).unwrap(), 0.7, epsilon = 1e-9);
        assert_eq!(ms_rate(0.9, 0.9, 0.9), 0.9);
        let poly = vec![NoiseSchedule::polynomial(1.0, 2).unwrap(); 10];
        assert!(theoretical_ms_rate(&rep, &poly).is_err());
    }

    #[test]
    fn rate_is_monotone_in_each_argument() {
        let grid = [0.1, 0.4, 0.7, 0.95];
        for &a in &grid {
            for &b in &grid {
                for w in grid.windows(2) {
                    assert!(ms_rate(w[0], a, b) <= ms_rate(w[1], a, b));
                    assert!(ms_rate(a, w[0], b) <= ms_rate(a, w[1], b));
                    assert!(ms_rate(a, b, w[0]) <= ms_rate(a, b, w[1]));
                }
            }
        }
    }

    #[test]
    fn basis_diagonalizes_laplacian() {
        let g = c10();
        let (plant, l, k) = example1();
        let t = build_transformed(&plant, &l, &k, &g).unwrap();
        let d = t.psi_basis.transpose() * g.laplacian() * &t.psi_basis;
        let spec = g.spectrum().unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { spec.eigenvalues[i] } else { 0.0 };
                assert_abs_diff_eq!(d[(i, j)], want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn two_node_basis() {
        let g = make_topology(&Topology::Complete, 2).unwrap();
        let psi = laplacian_basis(&g.spectrum().unwrap()).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(psi, m(2, 2, &[s, s, s, -s]), epsilon = 1e-12);
    }
}
