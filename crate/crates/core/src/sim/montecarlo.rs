use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::{run_core, squared_norms, ScenarioConfig};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// Per-step sample means of `‖δ(k)‖²` and `‖e(k)‖²` with 95% half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsEstimate {
    pub runs: usize,
    pub mean_delta_sq: Vec<f64>,
    pub ci_delta: Vec<f64>,
    pub mean_e_sq: Vec<f64>,
    pub ci_e: Vec<f64>,
    /// Runs that overflowed; their missing steps count as `+inf`.
    pub truncated_runs: usize,
}

impl MsEstimate {
    pub fn horizon(&self) -> usize {
        self.mean_delta_sq.len().saturating_sub(1)
    }
}

struct RunNorms {
    delta_sq: Vec<f64>,
    e_sq: Vec<f64>,
    truncated: bool,
}

fn one_run(cfg: &ScenarioConfig, run: u64) -> Result<RunNorms> {
    let len = cfg.horizon + 1;
    let mut delta_sq = Vec::with_capacity(len);
    let mut e_sq = Vec::with_capacity(len);
    let truncated = run_core(cfg, run, cfg.horizon, false, |r| {
        let (d, e) = squared_norms(&r);
        delta_sq.push(d);
        e_sq.push(e);
    })?;
    delta_sq.resize(len, f64::INFINITY);
    e_sq.resize(len, f64::INFINITY);
    Ok(RunNorms {
        delta_sq,
        e_sq,
        truncated,
    })
}

struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan { sum: 0.0, comp: 0.0 }
    }

    fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.sum += x;
            return;
        }
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Mean and 95% half-width of column `k` across runs, summed in run order.
fn column_stats(rows: &[&[f64]], k: usize) -> (f64, f64) {
    let r = rows.len() as f64;
    let mut s = Kahan::new();
    for row in rows {
        s.add(row[k]);
    }
    let mean = s.sum / r;
    if !mean.is_finite() {
        return (mean, f64::INFINITY);
    }
    let mut v = Kahan::new();
    for row in rows {
        let d = row[k] - mean;
        v.add(d * d);
    }
    let var = v.sum / (r - 1.0);
    (mean, Z95 * (var / r).sqrt())
}

/// `R` independent runs (run index selects the noise substream). With
/// `parallel` the runs execute on the rayon pool; aggregation always follows
/// run order, so both modes give bit-identical results.
pub fn monte_carlo(cfg: &ScenarioConfig, runs: usize, parallel: bool) -> Result<MsEstimate> {
    cfg.validate()?;
    if runs < 2 {
        return Err(Error::invalid(format!("Monte Carlo needs at least 2 runs, got {runs}")));
    }
    let results: Vec<RunNorms> = if parallel {
        (0..runs as u64).into_par_iter().map(|r| one_run(cfg, r)).collect::<Result<_>>()?
    } else {
        (0..runs as u64).map(|r| one_run(cfg, r)).collect::<Result<_>>()?
    };
    let len = cfg.horizon + 1;
    let d_rows: Vec<&[f64]> = results.iter().map(|r| r.delta_sq.as_slice()).collect();
    let e_rows: Vec<&[f64]> = results.iter().map(|r| r.e_sq.as_slice()).collect();
    let mut out = MsEstimate {
        runs,
        mean_delta_sq: Vec::with_capacity(len),
        ci_delta: Vec::with_capacity(len),
        mean_e_sq: Vec::with_capacity(len),
        ci_e: Vec::with_capacity(len),
        truncated_runs: results.iter().filter(|r| r.truncated).count(),
    };
    for k in 0..len {
        let (m, c) = column_stats(&d_rows, k);
        out.mean_delta_sq.push(m);
        out.ci_delta.push(c);
        let (m, c) = column_stats(&e_rows, k);
        out.mean_e_sq.push(m);
        out.ci_e.push(c);
    }
    Ok(out)
}

/// `ρ̂ = exp(slope / 2)` from a least-squares fit of `ln E‖δ(k)‖²` on
/// `k ∈ [k_lo, k_hi]`.
pub fn empirical_rate(ms: &MsEstimate, window: (usize, usize)) -> Result<f64> {
    let (lo, hi) = window;
    if lo >= hi || hi > ms.horizon() {
        return Err(Error::invalid(format!(
            "rate window [{lo}, {hi}] must satisfy k_lo < k_hi <= H = {}",
            ms.horizon()
        )));
    }
    let pts: Vec<(f64, f64)> = (lo..=hi).map(|k| (k as f64, ms.mean_delta_sq[k])).collect();
    if let Some(&(k, v)) = pts.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Numeric(format!(
            "E|delta|^2 = {v} at k = {k} is not positive and finite; choose k_hi < {k}"
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in &pts {
        sxy += (x - mx) * (y.ln() - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok((sxy / sxx / 2.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: Vec<f64>) -> MsEstimate {
        let n = values.len();
        MsEstimate {
            runs: 2,
            mean_delta_sq: values,
            ci_delta: vec![0.0; n],
            mean_e_sq: vec![0.0; n],
            ci_e: vec![0.0; n],
            truncated_runs: 0,
        }
    }

    #[test]
    fn rate_of_exact_geometric() {
        let ms = synthetic((0..=100).map(|k| 3.0 * 0.81f64.powi(k)).collect());
        assert!((empirical_rate(&ms, (10, 90)).unwrap() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn rate_rejects_floor_and_bad_windows() {
        let mut v: Vec<f64> = (0..=20).map(|k| 0.5f64.powi(k)).collect();
        v[15] = 0.0;
        let ms = synthetic(v);
        let err = empirical_rate(&ms, (5, 20)).unwrap_err();
        assert!(err.to_string().contains("k_hi < 15"), "{err}");
        assert!(empirical_rate(&ms, (5, 5)).is_err());
        assert!(empirical_rate(&ms, (5, 21)).is_err());
    }

    #[test]
    fn constant_column_has_zero_width() {
        let a = [1.0, 2.0];
        let b = [1.0, 4.0];
        let rows: Vec<&[f64]> = vec![&a, &b];
        assert_eq!(column_stats(&rows, 0), (1.0, 0.0));
        let (m, c) = column_stats(&rows, 1);
        assert_eq!(m, 3.0);
        assert!((c - Z95 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}
