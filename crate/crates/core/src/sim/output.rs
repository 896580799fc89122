//! Trace export: CSV tables and static SVG line charts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::SimResult;

/// Format with 9 significant digits in plain decimal where reasonable.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    let ax = x.abs();
    if (1e-4..1e9).contains(&ax) {
        let digits = 9 - (ax.log10().floor() as i32 + 1);
        let digits = digits.clamp(0, 17) as usize;
        format!("{x:.digits$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Column order of a trace table: t, the stage injections p_k and q_k for
/// k = 1..=l, the interface pairs u_k, y_k for k = 0..=l, and the raw
/// controller-side pair v_l, w_l.
pub fn csv_columns(stages: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for k in 1..=stages {
        cols.push(format!("p{k}"));
        cols.push(format!("q{k}"));
    }
    for k in 0..=stages {
        cols.push(format!("u{k}"));
        cols.push(format!("y{k}"));
    }
    cols.push(format!("v{stages}"));
    cols.push(format!("w{stages}"));
    cols
}

/// Render the simulation result as CSV with 9-significant-digit values.
pub fn to_csv(res: &SimResult) -> Result<String> {
    let cols = csv_columns(res.stages);
    let series: Result<Vec<&[f64]>> = cols[1..]
        .iter()
        .map(|c| {
            res.trace(c)
                .map(|s| s.values.as_slice())
                .ok_or_else(|| Error::InvalidArgument(format!("missing trace {c}")))
        })
        .collect();
    let series = series?;
    let steps = series.first().map_or(0, |s| s.len());
    let mut out = String::new();
    out.push_str(&cols.join(", "));
    out.push('\n');
    for t in 0..steps {
        write!(out, "{}", fmt_sig9(t as f64 * res.h)).unwrap();
        for s in &series {
            write!(out, ", {}", fmt_sig9(s[t])).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Minimal static SVG line chart of the selected ports.
pub fn to_svg(res: &SimResult, ports: &[&str], title: &str) -> Result<String> {
    const W: f64 = 900.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let colors = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let mut signals = Vec::new();
    for &p in ports {
        let s = res
            .trace(p)
            .ok_or_else(|| Error::InvalidArgument(format!("missing trace {p}")))?;
        signals.push((p, s));
    }
    if signals.is_empty() || signals[0].1.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let n = signals[0].1.len();
    let t_max = (n - 1) as f64 * res.h;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, s) in &signals {
        for &v in &s.values {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
    let px = |t: f64| ML + (t / t_max) * (W - ML - MR);
    let py = |v: f64| MT + (1.0 - (v - y_min) / (y_max - y_min)) * (H - MT - MB);
    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>",
        W / 2.0,
        title
    )
    .unwrap();
    // grid and axis labels
    for i in 0..=5 {
        let tv = t_max * i as f64 / 5.0;
        let x = px(tv);
        write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{MT}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{tv:.1}</text>\n",
            H - MB,
            H - MB + 18.0
        )
        .unwrap();
        let yv = y_min + (y_max - y_min) * i as f64 / 5.0;
        let y = py(yv);
        write!(
            svg,
            "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{yv:.3}</text>\n",
            W - MR,
            ML - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">t [s]</text>",
        (ML + W - MR) / 2.0,
        H - 10.0
    )
    .unwrap();
    // polylines, decimated to at most ~4000 points each
    let stride = (n / 4000).max(1);
    for (i, (name, s)) in signals.iter().enumerate() {
        let color = colors[i % colors.len()];
        let mut points = String::new();
        for (t_idx, &v) in s.values.iter().enumerate().step_by(stride) {
            write!(points, "{:.1},{:.1} ", px(t_idx as f64 * res.h), py(v)).unwrap();
        }
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" \
             points=\"{points}\"/>"
        )
        .unwrap();
        // legend
        let lx = ML + 12.0;
        let ly = MT + 16.0 + 18.0 * i as f64;
        write!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" \
             font-size=\"12\">{name}</text>\n",
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
