//! Minimal static SVG plots with deterministic output.

use std::fmt::Write as _;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";
const TITLE_FONT: &str = "font-family=\"sans-serif\" font-size=\"15\"";

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Markers only, no connecting line.
    pub scatter: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line/scatter chart of one or more series.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut svg = String::new();
    writeln!(svg, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">").unwrap();
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" {TITLE_FONT}>{}</text>",
        w / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        w - left - right,
        h - top - bottom
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{xv:.3}</text>",
            px(xv),
            h - bottom + 16.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{yv:.3}</text>",
            left - 6.0,
            py(yv) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
        w / 2.0,
        h - 12.0,
        escape(xlabel)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\" {FONT}>{}</text>",
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    )
    .unwrap();
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .copied()
            .collect();
        if s.scatter {
            for &(x, y) in &pts {
                writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\"/>",
                    px(x),
                    py(y),
                    s.color
                )
                .unwrap();
            }
        } else if !pts.is_empty() {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
                s.color,
                path.join(" ")
            )
            .unwrap();
        }
        let ly = top + 16.0 + 16.0 * k as f64;
        writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{}\"/>",
            left + 10.0,
            ly - 6.0,
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" {FONT}>{}</text>",
            left + 28.0,
            escape(&s.label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Values on a 2D grid; `None` marks missing cells.
pub struct Panel {
    pub title: String,
    pub points: Vec<([f64; 2], Option<f64>)>,
}

/// Blue–white–red diverging map of `t ∈ [-1, 1]`.
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (end, f) = if t < 0.0 {
        ((33.0, 102.0, 172.0), -t)
    } else {
        ((178.0, 24.0, 43.0), t)
    };
    let mix = |c: f64| (255.0 + (c - 255.0) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

/// Grid of heatmaps, `rows[r][c]`. Each column shares one symmetric color
/// scale so panels in a column compare directly.
pub fn heatmap_grid(title: &str, rows: &[Vec<Panel>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (cell, pad, top) = (220.0, 60.0, 50.0);
    let w = pad + cols as f64 * (cell + pad);
    let h = top + rows.len() as f64 * (cell + pad + 20.0) - pad / 2.0;
    let mut svg = String::new();
    writeln!(svg, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">").unwrap();
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" {TITLE_FONT}>{}</text>",
        w / 2.0,
        escape(title)
    )
    .unwrap();
    for c in 0..cols {
        let scale = rows
            .iter()
            .filter_map(|r| r.get(c))
            .flat_map(|p| p.points.iter().filter_map(|q| q.1))
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        for (r, row) in rows.iter().enumerate() {
            let Some(panel) = row.get(c) else { continue };
            let ox = pad + c as f64 * (cell + pad);
            let oy = top + r as f64 * (cell + pad + 20.0);
            let mut xs: Vec<f64> = panel.points.iter().map(|p| p.0[0]).collect();
            let mut ys: Vec<f64> = panel.points.iter().map(|p| p.0[1]).collect();
            for v in [&mut xs, &mut ys] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            let (nx, ny) = (xs.len().max(1) as f64, ys.len().max(1) as f64);
            let (cw, ch) = (cell / nx, cell / ny);
            for (z, v) in &panel.points {
                let i = xs.partition_point(|x| *x < z[0]) as f64;
                let j = ys.partition_point(|y| *y < z[1]) as f64;
                let fill = match v {
                    Some(v) if v.is_finite() => diverging(v / scale),
                    _ => "#bbbbbb".to_string(),
                };
                // z₂ increases upwards.
                writeln!(
                    svg,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
                    ox + i * cw,
                    oy + (ny - 1.0 - j) * ch,
                    cw + 0.01,
                    ch + 0.01
                )
                .unwrap();
            }
            writeln!(svg, "<rect x=\"{ox:.1}\" y=\"{oy:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"none\" stroke=\"black\"/>").unwrap();
            writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
                ox + cell / 2.0,
                oy - 6.0,
                escape(&panel.title)
            )
            .unwrap();
            if let (Some(x0), Some(x1), Some(y0), Some(y1)) =
                (xs.first(), xs.last(), ys.first(), ys.last())
            {
                let cx = ox + cell / 2.0;
                writeln!(
                    svg,
                    "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>z1 ∈ [{x0:.2}, {x1:.2}], z2 ∈ [{y0:.2}, {y1:.2}]</text>",
                    oy + cell + 16.0
                )
                .unwrap();
                writeln!(
                    svg,
                    "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>colour scale ±{scale:.3}</text>",
                    oy + cell + 31.0
                )
                .unwrap();
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
