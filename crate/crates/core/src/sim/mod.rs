//! Closed-loop network simulation, Monte Carlo mean-square estimation,
//! convergence-rate fitting and the adjacent-trajectory histogram experiment.

mod histogram;
mod montecarlo;

pub use histogram::{histogram_experiment, HistogramReport};
pub use montecarlo::{empirical_rate, monte_carlo, MsEstimate};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matops::{Matrix, Vector};
use crate::noise::{sample_laplace, Domain, NoiseSchedule, RngSpec};
use crate::plant::{controller, full_observer_step, reduced_observer_step, GainSet, LtiPlant, Observer, ReducedForm};
use crate::privacy::{ledger::output_deviation, AdjacencySpec};

/// States beyond this magnitude end the run with the truncation flag set.
pub const OVERFLOW_LIMIT: f64 = 1e150;

/// Everything needed to run the network.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub plant: LtiPlant,
    pub observer: Observer,
    pub gains: GainSet,
    pub graph: Graph,
    pub schedules: Vec<NoiseSchedule>,
    /// Physical initial states, one per agent.
    pub x0: Vec<Vector>,
    /// Initial estimates: `x̂(0)` (full) or `x̂̄₁(0)` (reduced).
    pub xhat0: Vec<Vector>,
    pub horizon: usize,
    pub rng: RngSpec,
    pub adjacency: Option<AdjacencySpec>,
}

impl ScenarioConfig {
    /// Dimension of each agent's observer state.
    pub fn estimate_dim(&self) -> usize {
        match &self.observer {
            Observer::Full { .. } => self.plant.n(),
            Observer::Reduced(rf) => rf.unmeasured(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let agents = self.graph.node_count();
        let n = self.plant.n();
        self.plant.check_feedback_gain(&self.gains.k)?;
        match &self.observer {
            Observer::Full { l } => self.plant.check_observer_gain(l)?,
            Observer::Reduced(rf) => {
                if rf.n() != n || rf.q() != self.plant.q() {
                    return Err(Error::dim("reduced form vs plant (n, q)", format!("({n}, {})", self.plant.q()), format!("({}, {})", rf.n(), rf.q())));
                }
            }
        }
        if self.schedules.len() != agents {
            return Err(Error::dim("noise schedules per agent", agents, self.schedules.len()));
        }
        for s in &self.schedules {
            s.validate()?;
        }
        check_states("x0", &self.x0, agents, n)?;
        check_states("xhat0", &self.xhat0, agents, self.estimate_dim())?;
        if self.horizon == 0 {
            return Err(Error::invalid("horizon H must be >= 1"));
        }
        if let Some(adj) = &self.adjacency {
            adj.validate()?;
            if adj.i0 >= agents {
                return Err(Error::invalid(format!("deviating agent i0 = {} outside 0..{agents}", adj.i0)));
            }
        }
        Ok(())
    }
}

fn check_states(name: &str, v: &[Vector], agents: usize, dim: usize) -> Result<()> {
    if v.len() != agents {
        return Err(Error::dim(format!("{name} entries per agent"), agents, v.len()));
    }
    for (i, s) in v.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::dim(format!("{name}[{i}] length"), dim, s.len()));
        }
    }
    Ok(())
}

/// Uniform draws in `[-half_width, half_width]^dim` for every agent.
pub fn random_box(rng: &RngSpec, agents: usize, dim: usize, half_width: f64, stream_step: u64) -> Vec<Vector> {
    (0..agents)
        .map(|i| {
            let s = rng.stream(Domain::InitialState, 0, i as u64, stream_step);
            Vector::from_fn(dim, |j, _| half_width * (2.0 * s.unit(j as u64) - 1.0))
        })
        .collect()
}

/// Agent `i0`'s observer replayed on `y'` with every received message held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowStep {
    /// `x̂'(k) − x̂(k)` (reduced: unmeasured block).
    pub beta: Vector,
    /// Counterfactual message `θ'_{i0}(k)` under the same noise draw.
    pub theta: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<Vector>,
    /// Physical-coordinate estimate of each agent.
    pub xhat: Vec<Vector>,
    pub theta: Vec<Vector>,
    pub eta: Vec<Vector>,
    pub u: Vec<Vector>,
    /// `[(I − J) ⊗ I] x(k)`.
    pub delta: Vector,
    /// Stacked estimation error: `x − x̂` (full) or `x̄₁ − x̂̄₁` (reduced).
    pub e: Vector,
    pub norm_delta: f64,
    pub norm_e: f64,
    pub shadow: Option<ShadowStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub steps: Vec<StepRecord>,
    /// The run stopped early on non-finite or overflowing states.
    pub truncated: bool,
}

/// Runs `k = 0..=H` for run index 0.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SimTrace> {
    simulate_run(cfg, 0)
}

/// Runs one realization; `run` selects the noise substream.
pub fn simulate_run(cfg: &ScenarioConfig, run: u64) -> Result<SimTrace> {
    cfg.validate()?;
    let mut steps = Vec::with_capacity(cfg.horizon + 1);
    let truncated = run_core(cfg, run, cfg.horizon, true, |r| steps.push(r))?;
    Ok(SimTrace { steps, truncated })
}

fn noise_draw(rng: &RngSpec, schedule: &NoiseSchedule, run: u64, agent: usize, k: usize, dim: usize) -> Result<Vector> {
    let b = schedule.scale_at(k)?;
    if b > 0.0 {
        let s = rng.stream(Domain::Noise, run, agent as u64, k as u64);
        Ok(Vector::from_vec(sample_laplace(&s, b, dim)?))
    } else {
        Ok(Vector::zeros(dim))
    }
}

fn stack(top: &Vector, bottom: &Vector) -> Vector {
    let mut v = Vector::zeros(top.len() + bottom.len());
    v.rows_mut(0, top.len()).copy_from(top);
    v.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    v
}

fn mean(x: &[Vector]) -> Vector {
    let mut m = Vector::zeros(x[0].len());
    for xi in x {
        m += xi;
    }
    m / x.len() as f64
}

fn disagreement(x: &[Vector]) -> Vector {
    let n = x[0].len();
    let mean = mean(x);
    let mut out = Vector::zeros(n * x.len());
    for (i, xi) in x.iter().enumerate() {
        out.rows_mut(i * n, n).copy_from(&(xi - &mean));
    }
    out
}

fn concat(v: &[Vector]) -> Vector {
    let total = v.iter().map(|x| x.len()).sum();
    let mut out = Vector::zeros(total);
    let mut at = 0;
    for x in v {
        out.rows_mut(at, x.len()).copy_from(x);
        at += x.len();
    }
    out
}

fn overflowed(v: &[Vector]) -> bool {
    v.iter().any(|x| x.iter().any(|c| !c.is_finite() || c.abs() > OVERFLOW_LIMIT))
}

/// Reduced observer update for the shadow: input terms use the counterfactual
/// `(y', u')`, the innovation is the factual one.
fn shadow_reduced_step(rf: &ReducedForm, shadow: &Vector, factual_prev: &Vector, y: (&Vector, &Vector), u: &Vector, yp_prev: &Vector, up_prev: &Vector) -> Vector {
    let (y_prev, y_now) = y;
    let ybar = y_now - &rf.a22 * y_prev - &rf.b2 * u;
    let innovation = &rf.lbar * (ybar - &rf.a21 * factual_prev);
    &rf.a11 * shadow + &rf.a12 * yp_prev + &rf.b1 * up_prev + innovation
}

struct Shadow<'a> {
    adj: &'a AdjacencySpec,
    est: Vector,
    prev: Option<(Vector, Vector)>,
}

/// Steps the network and hands each record to `visit`. Returns whether the
/// run was truncated.
pub(crate) fn run_core(
    cfg: &ScenarioConfig,
    run: u64,
    horizon: usize,
    with_shadow: bool,
    mut visit: impl FnMut(StepRecord),
) -> Result<bool> {
    let agents = cfg.graph.node_count();
    let n = cfg.plant.n();
    let q = cfg.plant.q();
    let k_gain: &Matrix = &cfg.gains.k;
    let nbrs: Vec<Vec<usize>> = (0..agents).map(|i| cfg.graph.neighbors(i).collect()).collect();
    let mut x = cfg.x0.clone();
    let mut est = cfg.xhat0.clone();
    let mut prev: Option<(Vec<Vector>, Vec<Vector>)> = None;
    let mut shadow = if with_shadow {
        cfg.adjacency.as_ref().map(|adj| Shadow {
            adj,
            est: cfg.xhat0[adj.i0].clone(),
            prev: None,
        })
    } else {
        None
    };

    // States are carried relative to a reference trajectory `o(k+1) = A o(k)`
    // that is re-centred on the network mean every step. The closed loop only
    // sees differences and the observers are exact models, so this leaves the
    // dynamics unchanged while keeping the working states small.
    let mut offset = Vector::zeros(n);
    for k in 0..=horizon {
        let mut y: Vec<Vector> = x.iter().map(|xi| cfg.plant.output(xi)).collect();
        if let (Observer::Reduced(rf), Some((py, pu))) = (&cfg.observer, &prev) {
            if let Some(sh) = shadow.as_mut() {
                let i = sh.adj.i0;
                let (yp_prev, up_prev) = sh.prev.as_ref().expect("shadow history follows factual history");
                sh.est = shadow_reduced_step(rf, &sh.est, &est[i], (&py[i], &y[i]), &pu[i], yp_prev, up_prev);
            }
            for i in 0..agents {
                est[i] = reduced_observer_step(rf, &est[i], &pu[i], &py[i], &y[i]);
            }
        }
        let shift = mean(&x);
        let est_shift = match &cfg.observer {
            Observer::Full { .. } => shift.clone(),
            Observer::Reduced(rf) => rf.unmeasured_part(&shift),
        };
        let y_shift = cfg.plant.output(&shift);
        for i in 0..agents {
            x[i] -= &shift;
            est[i] -= &est_shift;
            y[i] -= &y_shift;
        }
        if let Some(sh) = shadow.as_mut() {
            sh.est -= &est_shift;
        }
        offset += &shift;
        let own_offset = match &cfg.observer {
            Observer::Full { .. } => offset.clone(),
            Observer::Reduced(rf) => rf.to_canonical(&offset),
        };

        let own: Vec<Vector> = match &cfg.observer {
            Observer::Full { .. } => est.clone(),
            Observer::Reduced(_) => est.iter().zip(&y).map(|(e, yi)| stack(e, yi)).collect(),
        };
        let mut eta = Vec::with_capacity(agents);
        for (i, s) in cfg.schedules.iter().enumerate() {
            eta.push(noise_draw(&cfg.rng, s, run, i, k, n)?);
        }
        let theta: Vec<Vector> = own.iter().zip(&eta).map(|(o, h)| o + h).collect();
        let u: Vec<Vector> = (0..agents)
            .map(|i| controller(k_gain, nbrs[i].iter().map(|&j| &theta[j]), &own[i]))
            .collect();

        let mut shadow_rec = None;
        let mut shadow_io = None;
        if let Some(sh) = shadow.as_ref() {
            let i = sh.adj.i0;
            let yp = &y[i] + output_deviation(sh.adj, q, k);
            let own_p = match &cfg.observer {
                Observer::Full { .. } => sh.est.clone(),
                Observer::Reduced(_) => stack(&sh.est, &yp),
            };
            let up = controller(k_gain, nbrs[i].iter().map(|&j| &theta[j]), &own_p);
            shadow_rec = Some(ShadowStep {
                beta: &sh.est - &est[i],
                theta: (&own_p + &own_offset) + &eta[i],
            });
            shadow_io = Some((yp, up));
        }

        let xhat: Vec<Vector> = match &cfg.observer {
            Observer::Full { .. } => est.iter().map(|e| e + &offset).collect(),
            Observer::Reduced(rf) => own.iter().map(|o| &rf.p_inv * o + &offset).collect(),
        };
        let e_parts: Vec<Vector> = match &cfg.observer {
            Observer::Full { .. } => x.iter().zip(&est).map(|(a, b)| a - b).collect(),
            Observer::Reduced(rf) => x.iter().zip(&est).map(|(a, b)| rf.unmeasured_part(a) - b).collect(),
        };
        let delta = disagreement(&x);
        let e = concat(&e_parts);
        let record = StepRecord {
            k,
            norm_delta: delta.norm(),
            norm_e: e.norm(),
            x: x.iter().map(|xi| xi + &offset).collect(),
            xhat,
            theta: own.iter().zip(&eta).map(|(o, h)| (o + &own_offset) + h).collect(),
            eta,
            u: u.clone(),
            delta,
            e,
            shadow: shadow_rec,
        };
        visit(record);
        if k == horizon {
            break;
        }

        let next_x: Vec<Vector> = x.iter().zip(&u).map(|(xi, ui)| cfg.plant.step(xi, ui)).collect();
        if let Observer::Full { l } = &cfg.observer {
            if let (Some(sh), Some((yp, up))) = (shadow.as_mut(), shadow_io.as_ref()) {
                sh.est = full_observer_step(&cfg.plant, l, &sh.est, up, yp);
            }
            for i in 0..agents {
                est[i] = full_observer_step(&cfg.plant, l, &est[i], &u[i], &y[i]);
            }
        }
        if let Some(sh) = shadow.as_mut() {
            sh.prev = shadow_io;
        }
        x = next_x;
        offset = &cfg.plant.a * &offset;
        prev = Some((y, u));
        if overflowed(&x) || overflowed(&est) || overflowed(std::slice::from_ref(&offset)) {
            return Ok(true);
        }
    }
    Ok(false)
}

pub(crate) fn squared_norms(r: &StepRecord) -> (f64, f64) {
    (r.norm_delta * r.norm_delta, r.norm_e * r.norm_e)
}
