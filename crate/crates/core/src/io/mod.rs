//! Scenario documents and result files.
//!
//! Scenarios are JSON with row-major nested arrays for matrices and 0-based
//! agent indices. Randomized parts (per-agent noise parameters drawn from
//! intervals, initial states drawn from a box) are resolved with the seed and
//! echoed back as an explicit document.

mod output;
mod svg;

pub use output::{write_ms_csv, write_norms_csv, write_summary, write_trace_csv, fmt_float};
pub use svg::{histogram_svg, log_line_svg, Series};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{make_topology, Graph, Topology};
use crate::matops::{self, Matrix, Vector};
use crate::noise::{Domain, NoiseSchedule, RngSpec, ScheduleKind};
use crate::plant::{canonicalize_output, GainSet, LtiPlant, Observer};
use crate::privacy::{AdjacencySpec, DeviationShape, DEFAULT_TOL};
use crate::sim::{random_box, ScenarioConfig};

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_RUNS: usize = 500;
pub const DEFAULT_BOX: f64 = 5.0;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `complete`, `ring`, `circulant`, `star`, `edges` or `adjacency`.
    pub kind: String,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObserverSection {
    Full {
        #[serde(rename = "L")]
        l: Rows,
    },
    Reduced {
        #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
        p: Option<Rows>,
        #[serde(rename = "Lbar")]
        lbar: Rows,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(rename = "K")]
    pub k: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalNoise {
    pub c: [f64; 2],
    pub g: [f64; 2],
}

/// Exactly one of the three forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSection {
    /// Exponential schedules with `c_i`, `g_i` drawn uniformly per agent.
    Interval(IntervalNoise),
    /// One schedule shared by every agent.
    Uniform(NoiseSchedule),
    /// Explicit schedule per agent.
    Agents(Vec<NoiseSchedule>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacencySection {
    pub i0: usize,
    #[serde(default)]
    pub k0: usize,
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StateSpec {
    /// Uniform in `[-half_width, half_width]` per component.
    Box(f64),
    /// One row per agent.
    Explicit(Rows),
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "H", default = "default_horizon")]
    pub horizon: usize,
    #[serde(rename = "R", default = "default_runs")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<StateSpec>,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: DEFAULT_HORIZON,
            runs: DEFAULT_RUNS,
            seed: None,
            x0: None,
            xhat0: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_paper: Option<bool>,
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSection,
    pub plant: PlantSection,
    pub observer: ObserverSection,
    pub gains: GainsSection,
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<AdjacencySection>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub privacy: PrivacySection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyOptions {
    pub eps_star: Option<f64>,
    pub tol: f64,
    pub strict_paper: bool,
}

/// A validated scenario together with the fully explicit document that
/// reproduces it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub runs: usize,
    pub privacy: PrivacyOptions,
    pub resolved: ScenarioFile,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses a scenario document, reporting schema errors with a JSON pointer.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = json_pointer(e.path());
        Error::config(path, e.into_inner().to_string())
    })
}

/// Reads, parses and resolves a scenario. `seed` overrides the document's seed.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    resolve(parse_scenario(&text)?, seed)
}

fn matrix(rows: &Rows, ptr: &str) -> Result<Matrix> {
    matops::from_rows(rows).map_err(|e| Error::config(ptr, e.to_string()))
}

fn build_graph(g: &GraphSection) -> Result<Graph> {
    let need_n = || g.n.ok_or_else(|| Error::config("/graph/N", format!("graph kind '{}' needs N", g.kind)));
    let graph = match g.kind.as_str() {
        "complete" => make_topology(&Topology::Complete, need_n()?)?,
        "ring" => make_topology(&Topology::Ring, need_n()?)?,
        "star" => make_topology(&Topology::Star, need_n()?)?,
        "circulant" => {
            let offsets = g
                .offsets
                .clone()
                .ok_or_else(|| Error::config("/graph/offsets", "circulant graph needs offsets"))?;
            make_topology(&Topology::Circulant(offsets), need_n()?)?
        }
        "edges" => {
            let edges = g
                .edges
                .clone()
                .ok_or_else(|| Error::config("/graph/edges", "edge-list graph needs edges"))?;
            make_topology(&Topology::Edges(edges), need_n()?)?
        }
        "adjacency" => {
            let rows = g
                .adjacency
                .as_ref()
                .ok_or_else(|| Error::config("/graph/adjacency", "adjacency graph needs a matrix"))?;
            let graph = Graph::from_adjacency(rows)?;
            if let Some(n) = g.n {
                if n != graph.node_count() {
                    return Err(Error::dim("graph N vs adjacency size", n, graph.node_count()));
                }
            }
            graph
        }
        other => {
            return Err(Error::config(
                "/graph/kind",
                format!("unknown graph kind '{other}' (complete, ring, circulant, star, edges, adjacency)"),
            ))
        }
    };
    Ok(graph)
}

fn resolve_states(spec: &StateSpec, rng: &RngSpec, agents: usize, dim: usize, stream_step: u64, ptr: &str) -> Result<Vec<Vector>> {
    match spec {
        StateSpec::Box(h) => {
            if !(h.is_finite() && *h >= 0.0) {
                return Err(Error::config(ptr, format!("box half-width {h} must be finite and >= 0")));
            }
            Ok(random_box(rng, agents, dim, *h, stream_step))
        }
        StateSpec::Zero => Ok(vec![Vector::zeros(dim); agents]),
        StateSpec::Explicit(rows) => {
            if rows.len() != agents {
                return Err(Error::dim(format!("{ptr} rows (one per agent)"), agents, rows.len()));
            }
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    if r.len() != dim {
                        Err(Error::dim(format!("{ptr}/{i} length"), dim, r.len()))
                    } else {
                        Ok(Vector::from_column_slice(r))
                    }
                })
                .collect()
        }
    }
}

fn resolve_noise(noise: &NoiseSection, rng: &RngSpec, agents: usize) -> Result<Vec<NoiseSchedule>> {
    let out = match noise {
        NoiseSection::Interval(iv) => {
            for (name, [lo, hi]) in [("c", iv.c), ("g", iv.g)] {
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(Error::config(
                        format!("/noise/interval/{name}"),
                        format!("interval [{lo}, {hi}] is empty"),
                    ));
                }
            }
            (0..agents)
                .map(|i| {
                    let s = rng.stream(Domain::Schedule, 0, i as u64, 0);
                    let c = iv.c[0] + (iv.c[1] - iv.c[0]) * s.unit(0);
                    let g = iv.g[0] + (iv.g[1] - iv.g[0]) * s.unit(1);
                    NoiseSchedule::exponential(c, g)
                        .map_err(|e| Error::config("/noise/interval", e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?
        }
        NoiseSection::Uniform(s) => {
            s.validate().map_err(|e| Error::config("/noise/uniform", e.to_string()))?;
            vec![s.clone(); agents]
        }
        NoiseSection::Agents(list) => {
            if list.len() != agents {
                return Err(Error::dim("/noise/agents entries per agent", agents, list.len()));
            }
            for (i, s) in list.iter().enumerate() {
                s.validate().map_err(|e| Error::config(format!("/noise/agents/{i}"), e.to_string()))?;
            }
            list.clone()
        }
    };
    Ok(out)
}

fn resolve_adjacency(a: &AdjacencySection) -> Result<AdjacencySpec> {
    let shape = match (a.alpha, &a.h) {
        (Some(alpha), None) => DeviationShape::Geometric { alpha },
        (None, Some(h)) => DeviationShape::Custom { h: h.clone() },
        _ => return Err(Error::config("/adjacency", "give exactly one of alpha or h")),
    };
    let spec = AdjacencySpec {
        i0: a.i0,
        k0: a.k0,
        m: a.m,
        shape,
    };
    spec.validate().map_err(|e| Error::config("/adjacency", e.to_string()))?;
    Ok(spec)
}

/// Validates a parsed document and resolves every random draw.
pub fn resolve(file: ScenarioFile, seed_override: Option<u64>) -> Result<Scenario> {
    let seed = seed_override.or(file.sim.seed).unwrap_or(0);
    let rng = RngSpec::new(seed);
    let graph = build_graph(&file.graph)?;
    let agents = graph.node_count();
    let plant = LtiPlant::new(
        matrix(&file.plant.a, "/plant/A")?,
        matrix(&file.plant.b, "/plant/B")?,
        matrix(&file.plant.c, "/plant/C")?,
    )?;
    let gains = GainSet::new(matrix(&file.gains.k, "/gains/K")?);
    plant.check_feedback_gain(&gains.k)?;
    let observer = match &file.observer {
        ObserverSection::Full { l } => {
            let l = matrix(l, "/observer/L")?;
            plant.check_observer_gain(&l)?;
            Observer::Full { l }
        }
        ObserverSection::Reduced { p, lbar } => {
            let p = p.as_ref().map(|p| matrix(p, "/observer/P")).transpose()?;
            let rf = canonicalize_output(&plant, p.as_ref())?.with_gain(matrix(lbar, "/observer/Lbar")?)?;
            gains.split(rf.unmeasured())?;
            Observer::Reduced(rf)
        }
    };
    let schedules = resolve_noise(&file.noise, &rng, agents)?;
    let adjacency = file.adjacency.as_ref().map(resolve_adjacency).transpose()?;
    let n = plant.n();
    let est_dim = match &observer {
        Observer::Full { .. } => n,
        Observer::Reduced(rf) => rf.unmeasured(),
    };
    let x0_spec = file.sim.x0.clone().unwrap_or(StateSpec::Box(DEFAULT_BOX));
    let xhat0_spec = file.sim.xhat0.clone().unwrap_or(StateSpec::Zero);
    let x0 = resolve_states(&x0_spec, &rng, agents, n, 0, "/sim/x0")?;
    let xhat0 = resolve_states(&xhat0_spec, &rng, agents, est_dim, 1, "/sim/xhat0")?;
    let tol = file.privacy.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::config("/privacy/tol", format!("tolerance {tol} must be positive")));
    }
    let privacy = PrivacyOptions {
        eps_star: file.privacy.eps_star,
        tol,
        strict_paper: file.privacy.strict_paper.unwrap_or(false),
    };
    let config = ScenarioConfig {
        plant,
        observer,
        gains,
        graph,
        schedules: schedules.clone(),
        x0: x0.clone(),
        xhat0: xhat0.clone(),
        horizon: file.sim.horizon,
        rng,
        adjacency,
    };
    config.validate()?;

    let rows = |v: &[Vector]| -> Rows { v.iter().map(|x| x.iter().copied().collect()).collect() };
    let mut resolved = file;
    resolved.noise = NoiseSection::Agents(schedules);
    resolved.sim.seed = Some(seed);
    resolved.sim.x0 = Some(StateSpec::Explicit(rows(&x0)));
    resolved.sim.xhat0 = Some(StateSpec::Explicit(rows(&xhat0)));
    Ok(Scenario {
        runs: resolved.sim.runs,
        config,
        privacy,
        resolved,
    })
}

impl Scenario {
    /// Exponential decay rates of every agent, if all schedules are exponential.
    pub fn decay_rates(&self) -> Option<Vec<f64>> {
        self.config.schedules.iter().map(|s| s.exponential_rate()).collect()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.config.schedules.iter().map(|s| s.c).collect()
    }

    pub fn is_exponential(&self) -> bool {
        self.config
            .schedules
            .iter()
            .all(|s| matches!(s.kind, ScheduleKind::Exponential { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = r#"{
        "graph": {"kind": "circulant", "N": 10, "offsets": [1, 2, 3]},
        "plant": {"A": [[1.2, 0], [0, 0.5]], "B": [[1, 0], [0, 1]], "C": [[1, 0]]},
        "observer": {"kind": "full", "L": [[0.5], [0.45]]},
        "gains": {"K": [[0.18, 0], [0, 0]]},
        "noise": {"interval": {"c": [1.2, 1.24], "g": [0.9, 0.95]}},
        "adjacency": {"i0": 0, "k0": 0, "m": 0.5, "alpha": 0.5},
        "sim": {"H": 50, "R": 10, "seed": 3}
    }"#;

    #[test]
    fn loads_and_echoes() {
        let s = resolve(parse_scenario(EX1).unwrap(), None).unwrap();
        assert_eq!(s.config.graph.node_count(), 10);
        for sch in &s.config.schedules {
            let g = sch.exponential_rate().unwrap();
            assert!((0.9..=0.95).contains(&g));
            assert!((1.2..=1.24).contains(&sch.c));
        }
        let echo = serde_json::to_string(&s.resolved).unwrap();
        let again = resolve(parse_scenario(&echo).unwrap(), None).unwrap();
        assert_eq!(again.config.schedules, s.config.schedules);
        assert_eq!(again.config.x0, s.config.x0);
        assert_eq!(serde_json::to_string(&again.resolved).unwrap(), echo);
    }

    #[test]
    fn seed_override_changes_draws() {
        let a = resolve(parse_scenario(EX1).unwrap(), None).unwrap();
        let b = resolve(parse_scenario(EX1).unwrap(), Some(4)).unwrap();
        assert_ne!(a.config.schedules, b.config.schedules);
        assert_eq!(b.resolved.sim.seed, Some(4));
    }

    #[test]
    fn schema_errors_carry_pointer() {
        let bad = EX1.replace(r#""H": 50"#, r#""H": "fifty""#);
        match parse_scenario(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/sim/H"),
            other => panic!("{other:?}"),
        }
        let bad = EX1.replace(r#""offsets""#, r#""offset""#);
        assert!(matches!(parse_scenario(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn non_square_a_is_a_dimension_error() {
        let bad = EX1.replace(r#""A": [[1.2, 0], [0, 0.5]]"#, r#""A": [[1.2, 0, 1], [0, 0.5, 1]]"#);
        let err = resolve(parse_scenario(&bad).unwrap(), None).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unit_decay_is_rejected() {
        let bad = EX1.replace(r#""noise": {"interval": {"c": [1.2, 1.24], "g": [0.9, 0.95]}}"#,
            r#""noise": {"uniform": {"c": 1.2, "kind": "exponential", "g": 1.0}}"#);
        let err = resolve(parse_scenario(&bad).unwrap(), None).unwrap_err();
        assert!(err.to_string().contains("g = 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
