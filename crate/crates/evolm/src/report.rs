//! Self-contained SVG charts with the plotted data embedded as a comment
//! table, so every report file is reproducible and greppable.

use std::fmt::Write;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "nan".to_string()
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // pad a degenerate range so the polyline stays visible
        let pad = lo.abs().max(1.0) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" \
         text-anchor=\"middle\">{}</text>\n",
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        escape(title)
    )
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let mut s = String::new();
    let _ = write!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    // endpoint tick labels
    let _ = write!(
        s,
        "<text x=\"{x0}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
         <text x=\"{x1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        y0 + 16.0,
        fmt(frame.x_lo),
        y0 + 16.0,
        fmt(frame.x_hi),
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{y0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        x0 - 6.0,
        fmt(frame.y_lo),
        x0 - 6.0,
        y1 + 4.0,
        fmt(frame.y_hi),
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Multi-series line chart. Series are drawn in order with a fixed palette
/// and listed in a legend; the full data table rides along in a comment.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };

    let mut svg = svg_header(title);
    svg.push_str(&axes(&frame, x_label, y_label));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
            .collect();
        if pts.len() == 1 {
            let xy: Vec<&str> = pts[0].split(',').collect();
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                xy[0], xy[1]
            );
        } else if !pts.is_empty() {
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = write!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }

    svg.push_str("<!-- data\nseries,x,y\n");
    for s in series {
        for &(x, y) in &s.points {
            let _ = writeln!(svg, "{},{},{}", s.name, fmt(x), fmt(y));
        }
    }
    svg.push_str("-->\n</svg>\n");
    svg
}

/// Horizontal-label bar chart; bars may be negative (e.g. correlations).
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let (mut y_lo, mut y_hi) = bounds(bars.iter().map(|b| b.1));
    y_lo = y_lo.min(0.0);
    y_hi = y_hi.max(0.0);
    if y_lo == y_hi {
        y_hi = 1.0;
    }
    let frame = Frame {
        x_lo: 0.0,
        x_hi: bars.len() as f64,
        y_lo,
        y_hi,
    };
    let mut svg = svg_header(title);
    svg.push_str(&axes(&frame, "", y_label));
    let zero_y = frame.y(0.0);
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / bars.len().max(1) as f64;
    for (i, (name, value)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if value.is_finite() {
            let x = MARGIN_L + slot * i as f64 + slot * 0.15;
            let w = slot * 0.7;
            let vy = frame.y(*value);
            let (top, h) = if *value >= 0.0 {
                (vy, zero_y - vy)
            } else {
                (zero_y, vy - zero_y)
            };
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\"/>"
            );
        }
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let _ = writeln!(
            svg,
            "<text x=\"{cx:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\" transform=\"rotate(-45 {cx:.2} {})\">{}</text>",
            HEIGHT - MARGIN_B + 14.0,
            HEIGHT - MARGIN_B + 14.0,
            escape(name)
        );
    }
    svg.push_str("<!-- data\nlabel,value\n");
    for (name, value) in bars {
        let _ = writeln!(svg, "{},{}", name, fmt(*value));
    }
    svg.push_str("-->\n</svg>\n");
    svg
}
