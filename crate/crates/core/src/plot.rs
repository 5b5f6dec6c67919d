//! Static SVG charts for metric tables and training curves.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 72.0;
const COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

/// Value range padded to include zero for bars.
fn range(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn y_axis(svg: &mut String, lo: f64, hi: f64, log: bool) {
    let plot_h = H - TOP - BOTTOM;
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let v = lo + f * (hi - lo);
        let y = H - BOTTOM - f * plot_h;
        let label = if log { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.3}") };
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" x2=\"{}\" y1=\"{y:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>",
            W - RIGHT,
            LEFT - 4.0,
            y + 4.0
        );
    }
}

/// One bar per label.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut svg = header(title);
    let (lo, hi) = range(values.iter().copied(), true);
    y_axis(&mut svg, lo, hi, false);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let slot = plot_w / values.len().max(1) as f64;
    let to_y = |v: f64| H - BOTTOM - (v - lo) / (hi - lo) * plot_h;
    for (i, (l, &v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + i as f64 * slot + slot * 0.15;
        let (y0, y1) = (to_y(0.0), to_y(if v.is_finite() { v } else { 0.0 }));
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"><title>{}: {v}</title></rect>",
            y0.min(y1),
            slot * 0.7,
            (y0 - y1).abs(),
            COLORS[i % COLORS.len()],
            escape(l)
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            svg,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"end\" transform=\"rotate(-35 {cx:.1} {:.1})\">{}</text>",
            H - BOTTOM + 14.0,
            H - BOTTOM + 14.0,
            escape(l)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Line chart of `(x, y)` series; `log_y` plots log10 of positive values.
pub fn line_chart_svg(title: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let mut svg = header(title);
    let tf = |v: f64| if log_y { v.max(1e-12).log10() } else { v };
    let (x0, x1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)), false);
    let (y0, y1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| tf(p.1))), false);
    y_axis(&mut svg, y0, y1, log_y);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"{:.1}\">{x0}</text><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{x1}</text>",
        H - BOTTOM + 14.0,
        W - RIGHT,
        H - BOTTOM + 14.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| {
                format!(
                    "{:.1},{:.1}",
                    LEFT + (x - x0) / (x1 - x0) * plot_w,
                    H - BOTTOM - (tf(y) - y0) / (y1 - y0) * plot_h
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
            path.join(" ")
        );
        let ly = H - 30.0 + 12.0 * (i / 3) as f64;
        let lx = LEFT + 180.0 * (i % 3) as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{}\" y=\"{ly:.1}\">{}</text>",
            ly - 9.0,
            lx + 14.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
