//! Minimal SVG charts. Coordinates are printed with two decimals so that
//! the same data always produces the same bytes.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

pub const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick labels use up to four significant digits.
fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-3..5).contains(&mag) {
        return format!("{v:.2e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Data range padded by 5 %, never empty.
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
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(xlabel),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel),
    );
}

fn axes(out: &mut String, f: &Frame, x_ticks: bool) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(out, "<path d=\"M{x0:.2} {y1:.2}V{y0:.2}H{x1:.2}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=4 {
        let v = f.y.0 + (f.y.1 - f.y.0) * f64::from(i) / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN - 4.0,
            y + 4.0,
            tick(v)
        );
        if x_ticks {
            let v = f.x.0 + (f.x.1 - f.x.0) * f64::from(i) / 4.0;
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                f.px(v),
                HEIGHT - MARGIN + 16.0,
                tick(v)
            );
        }
    }
}

/// Scatter plot of `(x, y, group)` points, one colour per group, with an
/// optional legend (`names[g]`).
pub fn scatter(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64, usize)],
    names: Option<&[String]>,
) -> String {
    let f = Frame { x: range(points.iter().map(|p| p.0)), y: range(points.iter().map(|p| p.1)) };
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f, true);
    for &(x, y, g) in points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            f.px(x),
            f.py(y),
            color(g)
        );
    }
    if let Some(names) = names {
        legend(&mut out, names.iter().map(String::as_str).enumerate());
    }
    out.push_str("</svg>\n");
    out
}

fn legend<'a>(out: &mut String, entries: impl Iterator<Item = (usize, &'a str)>) {
    for (row, (g, name)) in entries.enumerate() {
        let y = MARGIN + 14.0 * row as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            WIDTH - MARGIN + 4.0,
            y - 9.0,
            color(g),
            WIDTH - MARGIN + 18.0,
            y,
            escape(name)
        );
    }
}

/// Labelled points with the least-squares line, for correlation figures.
pub fn correlation(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64, String)]) -> String {
    let f = Frame { x: range(points.iter().map(|p| p.0)), y: range(points.iter().map(|p| p.1)) };
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f, true);
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 && n >= 2.0 {
        let slope = sxy / sxx;
        let (a, b) = (f.x.0, f.x.1);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
            f.px(a),
            f.py(my + slope * (a - mx)).clamp(0.0, HEIGHT),
            f.px(b),
            f.py(my + slope * (b - mx)).clamp(0.0, HEIGHT)
        );
    }
    for (i, (x, y, label)) in points.iter().enumerate() {
        let (cx, cy) = (f.px(*x), f.py(*y));
        let _ = writeln!(out, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{}\"/>", color(i));
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", cx + 6.0, cy - 6.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per series.
pub fn bars(title: &str, ylabel: &str, categories: &[String], series: &[(&str, &[f64])]) -> String {
    let top = series.iter().flat_map(|s| s.1.iter().copied()).fold(0.0f64, f64::max);
    let f = Frame { x: (0.0, categories.len().max(1) as f64), y: (0.0, if top > 0.0 { top * 1.05 } else { 1.0 }) };
    let mut out = String::new();
    open(&mut out, title, "class", ylabel);
    axes(&mut out, &f, false);
    let slot = (WIDTH - 2.0 * MARGIN) / categories.len().max(1) as f64;
    let bar = 0.8 * slot / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let x0 = f.px(ci as f64) + 0.1 * slot;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(ci).copied().unwrap_or(0.0);
            let y = f.py(v);
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.8\"/>",
                x0 + bar * si as f64,
                y,
                bar,
                HEIGHT - MARGIN - y,
                color(si)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            f.px(ci as f64 + 0.5),
            HEIGHT - MARGIN + 16.0,
            escape(cat)
        );
    }
    legend(&mut out, series.iter().map(|s| s.0).enumerate());
    out.push_str("</svg>\n");
    out
}
