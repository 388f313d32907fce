use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use dpc_core::analysis::{self, ContractionModuli, ReducedModulus};
use dpc_core::io::{self, fmt_float, Scenario, Series};
use dpc_core::matops;
use dpc_core::privacy::{self, Design, EpsilonReport};
use dpc_core::sim::{self, empirical_rate, histogram_experiment, monte_carlo};
use dpc_core::{AdjacencySpec, ConditionReport, Error, Observer};

use crate::{Common, Format};

const SEED_ENV: &str = "DPC_SEED";

fn load(common: &Common) -> Result<Scenario> {
    let text = std::fs::read_to_string(&common.config).map_err(|source| Error::Io {
        path: common.config.display().to_string(),
        source,
    })?;
    let mut file = io::parse_scenario(&text)?;
    if let Some(tol) = common.tol {
        file.privacy.tol = Some(tol);
    }
    if common.strict_paper {
        file.privacy.strict_paper = Some(true);
    }
    let seed = match (common.seed, file.sim.seed) {
        (Some(s), _) => Some(s),
        (None, Some(_)) => None,
        (None, None) => match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Invalid(format!("{SEED_ENV} = '{v}' is not an unsigned integer")))?,
            ),
            Err(_) => None,
        },
    };
    let scenario = io::resolve(file, seed).with_context(|| format!("loading {}", common.config.display()))?;
    Ok(scenario)
}

fn out_path(common: &Common, name: &str) -> Option<PathBuf> {
    common.out.as_ref().map(|d| d.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Writes `summary.json` and the table (when `--out` is given) and prints the
/// report in the requested format.
fn emit(common: &Common, command: &str, scenario: &Scenario, result: impl Serialize, table: (&str, String)) -> Result<()> {
    let summary = json!({
        "command": command,
        "scenario": scenario.resolved,
        "result": result,
    });
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        io::write_summary(&dir.join("summary.json"), &summary)?;
        write_text(&dir.join(table.0), &table.1)?;
    }
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&summary["result"])? + "\n",
        Format::Csv => table.1,
    };
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn conditions(s: &Scenario) -> Result<ConditionReport> {
    let c = &s.config;
    let report = match &c.observer {
        Observer::Full { l } => analysis::check_full_conditions(&c.plant, l, &c.gains, &c.graph, &c.schedules)?,
        Observer::Reduced(rf) => analysis::check_reduced_conditions(rf, &c.gains, &c.graph, &c.schedules, &c.plant)?,
    };
    Ok(report)
}

/// Moduli plus `‖L‖₁` on the full-order path.
fn moduli_of(s: &Scenario) -> Result<(ContractionModuli, Option<f64>)> {
    let c = &s.config;
    let degrees = c.graph.degrees();
    Ok(match &c.observer {
        Observer::Full { l } => (
            analysis::full_moduli(&c.plant, l, &c.gains, &degrees),
            Some(matops::induced_one_norm(l)),
        ),
        Observer::Reduced(rf) => (analysis::reduced_moduli(rf, &c.gains, &degrees)?, None),
    })
}

fn adjacency(s: &Scenario) -> Result<&AdjacencySpec> {
    Ok(s.config
        .adjacency
        .as_ref()
        .ok_or_else(|| Error::Invalid("scenario has no adjacency section".into()))?)
}

pub fn check(common: &Common) -> Result<()> {
    let s = load(common)?;
    let report = conditions(&s)?;
    let rate = if s.is_exponential() {
        Some(analysis::theoretical_ms_rate(&report, &s.config.schedules)?)
    } else {
        None
    };
    let mut table = String::from("quantity,value\n");
    let _ = writeln!(table, "rho_observer,{}", fmt_float(report.rho_observer));
    let _ = writeln!(table, "rho_consensus,{}", fmt_float(report.rho_consensus));
    if let Some(r) = report.rho_consensus_canonical {
        let _ = writeln!(table, "rho_consensus_canonical,{}", fmt_float(r));
    }
    if let Some(r) = rate {
        let _ = writeln!(table, "theoretical_rate,{}", fmt_float(r));
    }
    let _ = writeln!(table, "pass,{}", report.pass);
    let result = json!({ "conditions": report, "theoretical_rate": rate });
    emit(common, "check", &s, result, ("conditions.csv", table))
}

pub fn moduli(common: &Common) -> Result<()> {
    let s = load(common)?;
    let (moduli, l_norm) = moduli_of(&s)?;
    let degrees = s.config.graph.degrees();
    let mut table = String::new();
    match &moduli {
        ContractionModuli::Full(ls) => {
            table.push_str("agent,degree,l\n");
            for (i, l) in ls.iter().enumerate() {
                let _ = writeln!(table, "{i},{},{}", degrees[i], fmt_float(*l));
            }
        }
        ContractionModuli::Reduced(vw) => {
            table.push_str("agent,degree,v,w\n");
            for (i, m) in vw.iter().enumerate() {
                let _ = writeln!(table, "{i},{},{},{}", degrees[i], fmt_float(m.v), fmt_float(m.w));
            }
        }
    }
    let result = json!({ "degrees": degrees, "moduli": moduli, "l_norm": l_norm });
    emit(common, "moduli", &s, result, ("moduli.csv", table))
}

#[derive(Serialize)]
#[serde(untagged)]
enum Outcome<T> {
    Ok(T),
    Err { error: String },
}

impl<T> From<dpc_core::Result<T>> for Outcome<T> {
    fn from(r: dpc_core::Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Err { error: e.to_string() },
        }
    }
}

impl<T> Outcome<T> {
    fn get(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Err { .. } => None,
        }
    }
}

pub fn epsilon(common: &Common) -> Result<()> {
    let s = load(common)?;
    let adj = adjacency(&s)?;
    let (moduli, l_norm) = moduli_of(&s)?;
    let (tol, strict) = (s.privacy.tol, s.privacy.strict_paper);
    let sched = &s.config.schedules;
    let (series, closed, bound): (EpsilonReport, Outcome<EpsilonReport>, Outcome<EpsilonReport>) = match &moduli {
        ContractionModuli::Full(ls) => {
            let l_norm = l_norm.unwrap_or_default();
            (
                privacy::epsilon_series_full(ls, l_norm, adj, sched, tol)?,
                privacy::epsilon_closed_full(ls, l_norm, adj, sched, strict, tol).into(),
                privacy::simplified_bound_report(ls, l_norm, adj, sched).into(),
            )
        }
        ContractionModuli::Reduced(vw) => (
            privacy::epsilon_series_reduced(vw, adj, sched, tol)?,
            privacy::epsilon_closed_reduced(vw, adj, sched, strict, tol).into(),
            Outcome::Err {
                error: "simplified bound is defined for the full-order observer only".into(),
            },
        ),
    };
    let cell = |r: &Outcome<EpsilonReport>, i: usize| r.get().map(|r| fmt_float(r.per_agent[i])).unwrap_or_default();
    let mut table = String::from("agent,series,closed,bound\n");
    for i in 0..series.per_agent.len() {
        let _ = writeln!(
            table,
            "{i},{},{},{}",
            fmt_float(series.per_agent[i]),
            cell(&closed, i),
            cell(&bound, i)
        );
    }
    let headline = closed.get().map(|r| r.epsilon).unwrap_or(series.epsilon + series.truncation_residual);
    let result = json!({
        "epsilon": headline,
        "series": series,
        "closed": closed,
        "simplified_bound": bound,
        "moduli": moduli,
        "l_norm": l_norm,
        "strict_paper": strict,
        "tol": tol,
    });
    emit(common, "epsilon", &s, result, ("epsilon.csv", table))
}

#[derive(Serialize)]
struct AgentDesign {
    agent: usize,
    c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<Design>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn design(common: &Common, eps_star: Option<f64>) -> Result<()> {
    let s = load(common)?;
    let eps_star = eps_star
        .or(s.privacy.eps_star)
        .ok_or_else(|| Error::Invalid("no target: pass --eps-star or set privacy.eps_star".into()))?;
    let adj = adjacency(&s)?;
    let alpha = match adj.shape {
        privacy::DeviationShape::Geometric { alpha } => alpha,
        _ => return Err(Error::Invalid("design needs a geometric deviation profile (alpha)".into()).into()),
    };
    let (moduli, l_norm) = moduli_of(&s)?;
    let scales = s.scales();
    let mut rows = Vec::with_capacity(scales.len());
    let mut worst: Option<(usize, f64, String)> = None;
    for (i, &c) in scales.iter().enumerate() {
        let r = match &moduli {
            ContractionModuli::Full(ls) => {
                privacy::design_g_full(eps_star, adj.m, alpha, ls[i], c, l_norm.unwrap_or_default())
            }
            ContractionModuli::Reduced(vw) => {
                let ReducedModulus { v, w } = vw[i];
                privacy::design_g_reduced(eps_star, adj.m, alpha, v, w, c)
            }
        };
        let mut row = AgentDesign {
            agent: i,
            c,
            design: None,
            margin: None,
            error: None,
        };
        match r {
            Ok(d) => row.design = Some(d),
            Err(Error::Infeasible { message, margin }) => {
                if worst.as_ref().is_none_or(|w| margin > w.1) {
                    worst = Some((i, margin, message.clone()));
                }
                row.margin = Some(margin);
                row.error = Some(message);
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    let mut table = String::from("agent,c,g,margin\n");
    for r in &rows {
        let g = match r.design {
            Some(Design::Rate { g }) => fmt_float(g),
            Some(Design::Unconstrained) => "any".into(),
            None => String::new(),
        };
        let _ = writeln!(
            table,
            "{},{},{g},{}",
            r.agent,
            fmt_float(r.c),
            r.margin.map(fmt_float).unwrap_or_default()
        );
    }
    let feasible = worst.is_none();
    let result = json!({ "eps_star": eps_star, "agents": rows, "feasible": feasible });
    emit(common, "design", &s, result, ("design.csv", table))?;
    match worst {
        None => Ok(()),
        Some((i, margin, message)) => Err(Error::Infeasible {
            message: format!("agent {i}: {message}"),
            margin,
        }
        .into()),
    }
}

pub fn audit(common: &Common) -> Result<()> {
    let s = load(common)?;
    let c = &s.config;
    let adj = adjacency(&s)?;
    let outcome = privacy::privacy_ledger(
        &c.plant,
        &c.observer,
        &c.gains,
        &c.graph,
        adj,
        &c.schedules,
        c.horizon,
        s.privacy.tol,
    )?;
    let mut table = String::from("k,term\n");
    for (k, t) in outcome.terms.iter().enumerate() {
        let _ = writeln!(table, "{k},{}", fmt_float(*t));
    }
    if !outcome.holds {
        eprintln!(
            "warning: ledger sum {} exceeds epsilon {}",
            outcome.sum, outcome.epsilon
        );
    }
    emit(common, "audit", &s, &outcome, ("ledger.csv", table))
}

fn norms_table(trace: &dpc_core::SimTrace) -> String {
    let mut s = String::from("k,norm_delta,norm_e\n");
    for r in &trace.steps {
        let _ = writeln!(s, "{},{},{}", r.k, fmt_float(r.norm_delta), fmt_float(r.norm_e));
    }
    s
}

pub fn simulate(common: &Common) -> Result<()> {
    let s = load(common)?;
    let trace = sim::simulate(&s.config)?;
    if let Some(p) = out_path(common, "trace.csv") {
        std::fs::create_dir_all(common.out.as_ref().unwrap()).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        })?;
        io::write_trace_csv(&p, &trace)?;
        let pts = |f: fn(&sim::StepRecord) -> f64| trace.steps.iter().map(|r| (r.k as f64, f(r))).collect();
        let svg = io::log_line_svg(
            "disagreement and estimation error",
            &[
                Series {
                    label: "|delta(k)|".into(),
                    points: pts(|r| r.norm_delta),
                },
                Series {
                    label: "|e(k)|".into(),
                    points: pts(|r| r.norm_e),
                },
            ],
        );
        write_text(&out_path(common, "norms.svg").unwrap(), &svg)?;
    }
    let last = trace.steps.last();
    let result = json!({
        "steps": trace.steps.len(),
        "truncated": trace.truncated,
        "initial_norm_delta": trace.steps.first().map(|r| r.norm_delta),
        "final_norm_delta": last.map(|r| r.norm_delta),
        "final_norm_e": last.map(|r| r.norm_e),
    });
    emit(common, "simulate", &s, result, ("norms.csv", norms_table(&trace)))
}

pub fn montecarlo(common: &Common, runs: Option<usize>, window: Option<(usize, usize)>) -> Result<()> {
    let s = load(common)?;
    let runs = runs.unwrap_or(s.runs);
    let ms = monte_carlo(&s.config, runs, true)?;
    let h = ms.horizon();
    let window = window.unwrap_or((h / 2, h));
    let rate = empirical_rate(&ms, window)?;
    let theoretical = if s.is_exponential() {
        Some(analysis::theoretical_ms_rate(&conditions(&s)?, &s.config.schedules)?)
    } else {
        None
    };
    if let Some(p) = out_path(common, "ms.csv") {
        std::fs::create_dir_all(common.out.as_ref().unwrap()).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        })?;
        io::write_ms_csv(&p, &ms)?;
        let pts = |v: &[f64]| v.iter().enumerate().map(|(k, x)| (k as f64, *x)).collect();
        let svg = io::log_line_svg(
            "mean-square disagreement and estimation error",
            &[
                Series {
                    label: "E|delta(k)|^2".into(),
                    points: pts(&ms.mean_delta_sq),
                },
                Series {
                    label: "E|e(k)|^2".into(),
                    points: pts(&ms.mean_e_sq),
                },
            ],
        );
        write_text(&out_path(common, "ms.svg").unwrap(), &svg)?;
    }
    let mut table = String::from("k,mean_delta_sq,ci_delta,mean_e_sq,ci_e\n");
    for k in 0..=h {
        let _ = writeln!(
            table,
            "{k},{},{},{},{}",
            fmt_float(ms.mean_delta_sq[k]),
            fmt_float(ms.ci_delta[k]),
            fmt_float(ms.mean_e_sq[k]),
            fmt_float(ms.ci_e[k])
        );
    }
    let result = json!({
        "runs": ms.runs,
        "truncated_runs": ms.truncated_runs,
        "window": [window.0, window.1],
        "empirical_rate": rate,
        "theoretical_rate": theoretical,
        "initial_mean_delta_sq": ms.mean_delta_sq[0],
        "final_mean_delta_sq": ms.mean_delta_sq[h],
        "final_mean_e_sq": ms.mean_e_sq[h],
    });
    emit(common, "montecarlo", &s, result, ("ms.csv", table))
}

pub fn histogram(common: &Common, k_star: usize, runs: usize, component: usize) -> Result<()> {
    let s = load(common)?;
    let c = &s.config;
    let adj = adjacency(&s)?;
    let report = histogram_experiment(c, runs, k_star, component, true)?;
    let ledger = privacy::privacy_ledger(
        &c.plant,
        &c.observer,
        &c.gains,
        &c.graph,
        adj,
        &c.schedules,
        c.horizon.max(k_star),
        s.privacy.tol,
    )?;
    let eps_prefix = ledger.prefix(k_star);
    let threshold = eps_prefix.exp() * 1.2;
    let mut table = String::from("bin_lo,bin_hi,count,count_prime\n");
    for (j, (a, b)) in report.counts.iter().zip(&report.counts_prime).enumerate() {
        let _ = writeln!(
            table,
            "{},{},{a},{b}",
            fmt_float(report.edges[j]),
            fmt_float(report.edges[j + 1])
        );
    }
    if let Some(p) = out_path(common, "histogram.svg") {
        std::fs::create_dir_all(common.out.as_ref().unwrap()).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        })?;
        let title = format!("agent {} component {component} at k = {k_star}", adj.i0);
        let svg = io::histogram_svg(&title, &report.edges, ("y", &report.counts), ("y'", &report.counts_prime));
        write_text(&p, &svg)?;
    }
    let result = json!({
        "histogram": report,
        "eps_prefix": eps_prefix,
        "threshold": threshold,
        "pass": report.max_ratio <= threshold,
    });
    emit(common, "histogram", &s, result, ("histogram.csv", table))
}
