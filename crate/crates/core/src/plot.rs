//! Minimal SVG charts: overlaid histograms of two or more series.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Step outlines of per-bin `heights` over shared bin `edges`, one polyline
/// per series, with a legend.
pub fn histogram_svg(title: &str, edges: &[f64], series: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (MARGIN, WIDTH - MARGIN / 2.0);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>"#
    );
    if edges.len() >= 2 {
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let top = series
            .iter()
            .flat_map(|(_, h)| h.iter().copied())
            .fold(0.0, f64::max);
        let top = if top > 0.0 { top } else { 1.0 };
        let px = |v: f64| x0 + (v - lo) / span * (x1 - x0);
        let py = |v: f64| y0 - v / top * (y0 - y1);
        for (k, (_, heights)) in series.iter().enumerate() {
            let mut pts = format!("{:.2},{:.2}", px(lo), py(0.0));
            for (i, h) in heights.iter().enumerate() {
                let _ = write!(
                    pts,
                    " {:.2},{:.2} {:.2},{:.2}",
                    px(edges[i]),
                    py(*h),
                    px(edges[i + 1]),
                    py(*h)
                );
            }
            let _ = write!(pts, " {:.2},{:.2}", px(hi), py(0.0));
            let _ = writeln!(
                s,
                r#"<polyline points="{pts}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                COLORS[k % COLORS.len()]
            );
        }
        for (v, anchor) in [(lo, "start"), (hi, "end")] {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{v:.3}</text>"#,
                px(v),
                y0 + 15.0
            );
        }
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let y = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            x1,
            COLORS[k % COLORS.len()],
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
