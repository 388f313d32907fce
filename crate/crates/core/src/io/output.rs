use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{MsEstimate, SimTrace};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Pretty JSON with keys in sorted order.
pub fn write_summary(path: &Path, summary: &impl Serialize) -> Result<()> {
    let value = serde_json::to_value(summary).map_err(|e| Error::Numeric(format!("summary serialization: {e}")))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Numeric(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// `k,agent,component,x,xhat,theta,eta,u`; `u` is blank past its dimension.
pub fn write_trace_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut s = String::from("k,agent,component,x,xhat,theta,eta,u\n");
    for r in &trace.steps {
        for i in 0..r.x.len() {
            let n = r.x[i].len();
            let dims = n.max(r.u[i].len());
            for c in 0..dims {
                let get = |v: &crate::matops::Vector| v.get(c).map(|x| fmt_float(*x)).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.k,
                    i,
                    c,
                    get(&r.x[i]),
                    get(&r.xhat[i]),
                    get(&r.theta[i]),
                    get(&r.eta[i]),
                    get(&r.u[i])
                );
            }
        }
    }
    write_file(path, &s)
}

/// `k,norm_delta,norm_e`.
pub fn write_norms_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut s = String::from("k,norm_delta,norm_e\n");
    for r in &trace.steps {
        let _ = writeln!(s, "{},{},{}", r.k, fmt_float(r.norm_delta), fmt_float(r.norm_e));
    }
    write_file(path, &s)
}

/// `k,mean_delta_sq,ci_delta,mean_e_sq,ci_e`.
pub fn write_ms_csv(path: &Path, ms: &MsEstimate) -> Result<()> {
    let mut s = String::from("k,mean_delta_sq,ci_delta,mean_e_sq,ci_e\n");
    for k in 0..ms.mean_delta_sq.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            k,
            fmt_float(ms.mean_delta_sq[k]),
            fmt_float(ms.ci_delta[k]),
            fmt_float(ms.mean_e_sq[k]),
            fmt_float(ms.ci_e[k])
        );
    }
    write_file(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 12.723214285714286, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_trace_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let t = SimTrace {
            steps: vec![],
            truncated: false,
        };
        write_trace_csv(&dir.path().join("t.csv"), &t).unwrap();
        write_norms_csv(&dir.path().join("n.csv"), &t).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("t.csv")).unwrap(),
            "k,agent,component,x,xhat,theta,eta,u\n"
        );
        assert_eq!(std::fs::read_to_string(dir.path().join("n.csv")).unwrap(), "k,norm_delta,norm_e\n");
    }
}
