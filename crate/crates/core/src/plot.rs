//! Self-contained SVG learning curves: one mean line per method with a
//! translucent ±std band across seeds.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{mean_and_std, MetricsRow};
use crate::harness::fmt_sig6;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Per-epoch mean and spread of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PlotSeries {
    /// Epoch-wise mean and sample std of `column` across seed traces,
    /// truncated to the shortest trace.
    pub fn from_traces(name: &str, traces: &[Vec<MetricsRow>], column: fn(&MetricsRow) -> f64) -> Result<Self> {
        let len = traces.iter().map(Vec::len).min().unwrap_or(0);
        if len == 0 {
            return Err(Error::Parameter(format!("no epochs to plot for `{name}`")));
        }
        let (mut mean, mut std) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for e in 0..len {
            let values: Vec<f64> = traces.iter().map(|t| column(&t[e])).collect();
            let (m, s) = mean_and_std(&values);
            mean.push(m);
            std.push(s);
        }
        Ok(PlotSeries { name: name.to_string(), mean, std })
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Roughly `target` round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Renders `series` into an SVG document.
pub fn render_svg(series: &[PlotSeries], title: &str) -> Result<String> {
    let Some(first) = series.first() else {
        return Err(Error::Parameter("nothing to plot".into()));
    };
    let n = first.mean.len();
    if n == 0 || series.iter().any(|s| s.mean.len() != n || s.std.len() != n) {
        return Err(Error::Parameter("plot series must share a length of at least 1".into()));
    }
    let values = series.iter().flat_map(|s| s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]));
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter("plot values must be finite".into()));
    }
    if hi - lo < 0.1 {
        let mid = (hi + lo) / 2.0;
        lo = lo.min(mid - 0.05);
        hi = hi.max(mid + 0.05);
    }
    let x_max = (n - 1).max(1) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |e: f64| fmt_sig6(LEFT + e / x_max * pw);
    let py = |v: f64| fmt_sig6(TOP + (hi - v) / (hi - lo) * ph);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));

    // Axes, grid and tick labels.
    let _ = writeln!(svg, r##"<g class="axes" stroke="#333" stroke-width="1">"##);
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/>"#, TOP + ph);
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="y-ticks">"#);
    for t in ticks(lo, hi, 5) {
        let y = py(t);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#, LEFT - 6.0, fmt_sig6(t));
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="x-ticks">"#);
    for t in ticks(0.0, x_max, 8.min(n.max(2) - 1).max(1)).into_iter().filter(|t| t.fract() == 0.0) {
        let x = px(t);
        let _ = writeln!(svg, r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#333"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, t as usize);
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let xs: Vec<f64> = if n == 1 { vec![0.0, x_max] } else { (0..n).map(|e| e as f64).collect() };
        let at = |k: usize| if n == 1 { 0 } else { k };
        let mut band = String::new();
        for (k, &x) in xs.iter().enumerate() {
            let _ = write!(band, "{},{} ", px(x), py(s.mean[at(k)] + s.std[at(k)]));
        }
        for (k, &x) in xs.iter().enumerate().rev() {
            let _ = write!(band, "{},{} ", px(x), py(s.mean[at(k)] - s.std[at(k)]));
        }
        let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = xs.iter().enumerate().map(|(k, &x)| format!("{},{}", px(x), py(s.mean[at(k)]))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"><title>{}</title></polyline>"#,
            line.join(" "),
            escape(&s.name)
        );
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = LEFT + pw + 15.0;
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="14" height="4" fill="{color}"/>"#, y - 2.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" dominant-baseline="middle">{}</text>"#, x + 20.0, escape(&s.name));
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg_plot(series: &[PlotSeries], title: &str, path: &Path) -> Result<()> {
    let svg = render_svg(series, title)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
