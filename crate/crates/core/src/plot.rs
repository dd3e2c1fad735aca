//! Static SVG small-multiples of check curves.

use std::fmt::Write as _;

use crate::gof::CheckCurve;

const PANEL_W: f64 = 200.0;
const PANEL_H: f64 = 150.0;
const MARGIN: f64 = 28.0;
const COLUMNS: usize = 4;

/// One panel per response: predicted probability as a line, empirical
/// proportions as points. All curves should share one duration.
pub fn check_panel_svg(curves: &[CheckCurve], title: &str) -> String {
    let cols = COLUMNS.min(curves.len().max(1));
    let rows = curves.len().div_ceil(cols).max(1);
    let width = cols as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = rows as f64 * (PANEL_H + MARGIN) + 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" font-size="13">{}</text>"#, MARGIN * 0.7, escape(title));

    for (i, curve) in curves.iter().enumerate() {
        let x0 = MARGIN + (i % cols) as f64 * (PANEL_W + MARGIN);
        let y0 = 1.5 * MARGIN + (i / cols) as f64 * (PANEL_H + MARGIN);
        let px = |t: f64| x0 + t * PANEL_W;
        let py = |p: f64| y0 + (1.0 - p) * PANEL_H;

        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">k = {}</text>"#, x0 + 4.0, y0 + 12.0, curve.response + 1);
        for tick in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{tick}</text>"#,
                px(tick),
                y0 + PANEL_H + 11.0
            );
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, x0 - 3.0, py(tick) + 3.0);
        }

        let line: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", px(p.t), py(p.predicted))).collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##,
            line.join(" ")
        );
        for p in &curve.points {
            if let Some(e) = p.empirical {
                let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#c23b22"/>"##, px(p.t), py(e));
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
