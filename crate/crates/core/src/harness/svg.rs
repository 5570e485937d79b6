//! Minimal static line charts.

use std::fmt::Write;

use super::SweepResult;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// Columns drawn solid.
    pub measured: Vec<String>,
    /// Columns drawn dashed.
    pub reference: Vec<String>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str, log: (bool, bool), measured: &[&str], reference: &[&str]) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: log.0,
            log_y: log.1,
            measured: measured.iter().map(|s| s.to_string()).collect(),
            reference: reference.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn map(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(result: &SweepResult, spec: &PlotSpec) -> String {
    let series: Vec<(&String, bool, Vec<(f64, f64)>)> = spec
        .measured
        .iter()
        .map(|c| (c, false))
        .chain(spec.reference.iter().map(|c| (c, true)))
        .map(|(c, dashed)| {
            let pts = result
                .column(c)
                .unwrap_or_default()
                .into_iter()
                .filter(|p| usable(p.0, spec.log_x) && usable(p.1, spec.log_y))
                .map(|p| (map(p.0, spec.log_x), map(p.1, spec.log_y)))
                .collect();
            (c, dashed, pts)
        })
        .collect();

    let all = series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&spec.title));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (i, frac) in [0.0, 0.5, 1.0].iter().enumerate() {
        let xv = x0 + frac * (x1 - x0);
        let yv = y0 + frac * (y1 - y0);
        let lx = if spec.log_x { format!("1e{xv:.1}") } else { format!("{xv:.3}") };
        let ly = if spec.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
        let anchor = ["start", "middle", "end"][i];
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{lx}</text>"#, sx(xv), H - PAD + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{ly}</text>"#, PAD - 4.0, sy(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&spec.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(&spec.y_label)
    );
    for (i, (name, dashed, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = PAD + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}"{dash}/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 150.0,
            W - PAD - 126.0,
            W - PAD - 120.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SweepRow;

    #[test]
    fn renders_log_axes_and_skips_nonpositive() {
        let rows = [1.0, 10.0, 100.0]
            .iter()
            .map(|&a| SweepRow {
                param: a,
                values: vec![1.0 / a, if a == 10.0 { -1.0 } else { 2.0 / a }],
                solver_iters: 1,
                residual: 0.0,
                error: None,
            })
            .collect();
        let r = SweepResult::new("t", "alpha", &["y", "ref"], rows);
        let spec = PlotSpec::new("T <1>", "alpha", "y", (true, true), &["y"], &["ref"]);
        let out = render(&r, &spec);
        assert!(out.starts_with("<svg"));
        assert!(out.contains("T &lt;1&gt;"));
        assert_eq!(out.matches("<polyline").count(), 2);
        assert!(out.contains("stroke-dasharray"));
    }
}
