//! Minimal static SVG renderings of curves and bar data.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    );
}

/// Maps `v` in `[lo, hi]` to `[a, b]`; a flat range maps to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        0.5 * (a + b)
    }
}

/// Line plot of `(x, y)` with y fixed to `[0, 1]` and an optional
/// horizontal reference line.
pub fn line_chart(title: &str, points: &[(f64, f64)], reference: Option<f64>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    let bottom = HEIGHT - MARGIN;
    let right = WIDTH - MARGIN;
    if let Some(r) = reference {
        let y = scale(r, 0.0, 1.0, bottom, MARGIN);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 4"/>"##
        );
    }
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            format!(
                "{:.2},{:.2}",
                scale(x, x0, x1, MARGIN, right),
                scale(y, 0.0, 1.0, bottom, MARGIN)
            )
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        coords.join(" ")
    );
    if points.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{x0:.3}</text><text x="{right}" y="{}" text-anchor="middle">{x1:.3}</text>"#,
        bottom + 16.0,
        bottom + 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">0</text><text x="{}" y="{}" text-anchor="end">1</text>"#,
        MARGIN - 6.0,
        bottom,
        MARGIN - 6.0,
        MARGIN + 4.0
    );
    out.push_str("</svg>\n");
    out
}

/// Vertical bars for values in `[0, 1]` with an optional threshold line.
pub fn bar_chart(title: &str, bars: &[(String, f64)], threshold: Option<f64>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let bottom = HEIGHT - MARGIN;
    let right = WIDTH - MARGIN;
    let slot = (right - MARGIN) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let top = scale(v.clamp(0.0, 1.0), 0.0, 1.0, bottom, MARGIN);
        let x = MARGIN + i as f64 * slot + 0.15 * slot;
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#2ca02c"><title>{}: {v:.4}</title></rect>"##,
            0.7 * slot,
            bottom - top,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="end" transform="rotate(-45 {:.2} {})">{}</text>"#,
            x + 0.35 * slot,
            bottom + 14.0,
            x + 0.35 * slot,
            bottom + 14.0,
            escape(label)
        );
    }
    if let Some(t) = threshold {
        let y = scale(t, 0.0, 1.0, bottom, MARGIN);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="4 4"/>"##
        );
    }
    out.push_str("</svg>\n");
    out
}
