//! Minimal standalone SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One polyline of `(x, y)` points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with a base-10 logarithmic ordinate. Nonpositive values are skipped.
pub fn log_line_svg(title: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0 && p.1.is_finite());
    let mut s = header(title);
    let (x_lo, x_hi) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y_lo, y_hi) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1.log10()), a.1.max(p.1.log10())));
    if !x_lo.is_finite() {
        s.push_str("</svg>\n");
        return s;
    }
    let (y_lo, y_hi) = (y_lo.floor(), y_hi.ceil().max(y_lo.floor() + 1.0));
    let x_span = (x_hi - x_lo).max(1e-300);
    let px = |x: f64| PAD + (x - x_lo) / x_span * (W - 2.0 * PAD);
    let py = |ly: f64| H - PAD - (ly - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);
    let decades = (y_hi - y_lo) as i64;
    let stride = (decades / 8).max(1);
    let mut d = y_lo as i64;
    while d <= y_hi as i64 {
        let y = py(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">1e{d}</text>"##,
            W - PAD,
            PAD - 4.0,
            y + 3.0
        );
        d += stride;
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{:.2}" font-family="sans-serif" font-size="10">{x_lo}</text><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{x_hi}</text>"#,
        H - PAD + 14.0,
        W - PAD,
        H - PAD + 14.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1 > 0.0 && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1.log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (i as f64 + 1.0),
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Side-by-side bars of two histograms on shared edges.
pub fn histogram_svg(title: &str, edges: &[f64], a: (&str, &[usize]), b: (&str, &[usize])) -> String {
    let mut s = header(title);
    let bins = a.1.len();
    let top = a.1.iter().chain(b.1).copied().max().unwrap_or(0).max(1) as f64;
    let slot = (W - 2.0 * PAD) / bins.max(1) as f64;
    for (j, (&ca, &cb)) in a.1.iter().zip(b.1).enumerate() {
        for (off, count, color) in [(0.0, ca, COLORS[0]), (0.5, cb, COLORS[1])] {
            let h = count as f64 / top * (H - 2.0 * PAD);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.7"/>"#,
                PAD + slot * (j as f64 + off),
                H - PAD - h,
                slot / 2.0
            );
        }
    }
    if let (Some(lo), Some(hi)) = (edges.first(), edges.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{:.2}" font-family="sans-serif" font-size="10">{lo:.4}</text><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{hi:.4}</text>"#,
            H - PAD + 14.0,
            W - PAD,
            H - PAD + 14.0
        );
    }
    for (i, (label, color)) in [(a.0, COLORS[0]), (b.0, COLORS[1])].into_iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
