//! Static SVG log-log plot of a convergence report.

use std::fmt::Write as _;
use std::path::Path;

use super::report::ConvergenceReport;
use crate::error::{Error, Result};
use crate::stats::linear_fit;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Renders the report: one marker per row with an error bar of
/// `max(std_error, grid_tol)`, and the least-squares line with its slope
/// when two or more rows have positive gaps. Nonpositive values are drawn
/// at the bottom of the axis.
pub fn render_svg(report: &ConvergenceReport, title: &str) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::Usage("cannot plot an empty report".into()));
    }
    let positive: Vec<f64> = report
        .rows
        .iter()
        .flat_map(|r| [r.gap, r.gap + r.uncertainty(), r.gap - r.uncertainty()])
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    let (mut ylo, mut yhi) = positive
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !ylo.is_finite() {
        ylo = 1e-6;
        yhi = 1.0;
    }
    let (mut ylo, mut yhi) = (ylo.log10().floor(), yhi.log10().ceil());
    if yhi <= ylo {
        yhi = ylo + 1.0;
    }
    let eps: Vec<f64> = report.rows.iter().map(|r| r.epsilon.log10()).collect();
    let (mut xlo, mut xhi) = eps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    xlo = (xlo - 0.25).floor();
    xhi = (xhi + 0.25).ceil();
    ylo = ylo.min(yhi - 1.0);

    let px = |lx: f64| LEFT + (lx - xlo) / (xhi - xlo) * (W - LEFT - RIGHT);
    let py = |ly: f64| {
        let ly = ly.clamp(ylo, yhi);
        H - BOTTOM - (ly - ylo) / (yhi - ylo) * (H - TOP - BOTTOM)
    };
    let ly = |v: f64| if v > 0.0 { v.log10() } else { ylo };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    // axes and decade ticks
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        l = LEFT,
        t = TOP,
        b = H - BOTTOM,
        r = W - RIGHT
    );
    let mut d = xlo as i32;
    while d as f64 <= xhi {
        let x = px(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ccc"/><text x="{x}" y="{}" text-anchor="middle">1e{d}</text>"##,
            TOP,
            H - BOTTOM,
            H - BOTTOM + 18.0
        );
        d += 1;
    }
    let mut d = ylo as i32;
    while d as f64 <= yhi {
        let y = py(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ccc"/><text x="{}" y="{}" text-anchor="end">1e{d}</text>"##,
            LEFT,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
        d += 1;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#, (LEFT + W - RIGHT) / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">sup-norm gap</text>"#,
        y = (TOP + H - BOTTOM) / 2.0
    );

    for r in &report.rows {
        let x = px(r.epsilon.log10());
        let u = r.uncertainty();
        if u > 0.0 {
            let (a, b) = (py(ly(r.gap - u)), py(ly(r.gap + u)));
            let _ = writeln!(
                s,
                r#"<path d="M{x} {a} V{b} M{} {a} H{} M{} {b} H{}" stroke="steelblue"/>"#,
                x - 4.0,
                x + 4.0,
                x - 4.0,
                x + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{x}" cy="{}" r="4" fill="steelblue"><title>epsilon={} gap={}</title></circle>"#,
            py(ly(r.gap)),
            r.epsilon,
            r.gap
        );
    }

    let fit: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.gap > 0.0)
        .map(|r| (r.epsilon.log10(), r.gap.log10()))
        .collect();
    if fit.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.iter().cloned().unzip();
        let (slope, icpt) = linear_fit(&xs, &ys);
        let (a, b) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="tomato" stroke-dasharray="6 4"/>"#,
            px(a),
            py(slope * a + icpt),
            px(b),
            py(slope * b + icpt)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" fill="tomato">fitted slope {:.3}</text>"#,
            W - RIGHT - 6.0,
            TOP + 16.0,
            slope
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_plot(report: &ConvergenceReport, title: &str, path: &Path) -> Result<()> {
    let svg = render_svg(report, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}
