use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::{run_core, ScenarioConfig};

/// Minimum number of paired runs.
pub const MIN_RUNS: usize = 1000;
/// Bins with fewer pooled samples are ignored by the ratio statistic.
pub const MIN_POOLED: usize = 50;
const MAX_BINS: usize = 10_000;

/// Paired histograms of `θ_{i0,c}(k*)` under `y` and `y'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub k_star: usize,
    pub component: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub counts_prime: Vec<usize>,
    /// Largest `max(a/b, b/a)` over bins with at least [`MIN_POOLED`] pooled samples.
    pub max_ratio: f64,
    pub bins_used: usize,
    #[serde(skip)]
    pub samples: Vec<f64>,
    #[serde(skip)]
    pub samples_prime: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Shared Freedman–Diaconis edges for the pooled sample.
fn fd_edges(pooled: &[f64]) -> Vec<f64> {
    let mut s = pooled.to_vec();
    s.sort_by(f64::total_cmp);
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let width = 2.0 * iqr / (s.len() as f64).cbrt();
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let step = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    (0..=bins).map(|i| lo + step * i as f64).collect()
}

fn count(samples: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, step) = (edges[0], edges[1] - edges[0]);
    let mut out = vec![0; bins];
    for &v in samples {
        let i = (((v - lo) / step).floor().max(0.0) as usize).min(bins - 1);
        out[i] += 1;
    }
    out
}

/// Runs `R` paired realizations up to `k*` and compares the histograms of the
/// deviating agent's message component under `y` and `y'`.
pub fn histogram_experiment(
    cfg: &ScenarioConfig,
    runs: usize,
    k_star: usize,
    component: usize,
    parallel: bool,
) -> Result<HistogramReport> {
    cfg.validate()?;
    let adj = cfg
        .adjacency
        .as_ref()
        .ok_or_else(|| Error::invalid("histogram experiment needs an adjacency section"))?;
    if runs < MIN_RUNS {
        return Err(Error::invalid(format!("histogram experiment needs at least {MIN_RUNS} runs, got {runs}")));
    }
    if component >= cfg.plant.n() {
        return Err(Error::invalid(format!("component {component} outside 0..{}", cfg.plant.n())));
    }
    let i0 = adj.i0;
    let pair = |run: u64| -> Result<(f64, f64)> {
        let mut got = None;
        run_core(cfg, run, k_star, true, |r| {
            if r.k == k_star {
                let sh = r.shadow.as_ref().expect("shadow requested");
                got = Some((r.theta[i0][component], sh.theta[component]));
            }
        })?;
        got.ok_or_else(|| Error::Numeric(format!("run {run} overflowed before k* = {k_star}")))
    };
    let pairs: Vec<(f64, f64)> = if parallel {
        (0..runs as u64).into_par_iter().map(pair).collect::<Result<_>>()?
    } else {
        (0..runs as u64).map(pair).collect::<Result<_>>()?
    };
    let samples: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let samples_prime: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let pooled: Vec<f64> = samples.iter().chain(&samples_prime).copied().collect();
    let edges = fd_edges(&pooled);
    let counts = count(&samples, &edges);
    let counts_prime = count(&samples_prime, &edges);
    let mut max_ratio: f64 = 1.0;
    let mut bins_used = 0;
    for (&a, &b) in counts.iter().zip(&counts_prime) {
        if a + b < MIN_POOLED {
            continue;
        }
        bins_used += 1;
        let r = if a == 0 || b == 0 {
            f64::INFINITY
        } else {
            (a.max(b) as f64) / (a.min(b) as f64)
        };
        max_ratio = max_ratio.max(r);
    }
    Ok(HistogramReport {
        k_star,
        component,
        edges,
        counts,
        counts_prime,
        max_ratio,
        bins_used,
        samples,
        samples_prime,
    })
}
