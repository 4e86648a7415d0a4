//! Standalone SVG line plots with error bars. Every marker carries its data in
//! `data-*` attributes and a tooltip, so the files double as data tables.

use std::fmt::Write as _;

use crate::method::Method;
use crate::summary::{Stat, SummaryRow};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    FracHamming,
    CovError,
    SignalError,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::FracHamming => "fractional Hamming distortion",
            Metric::CovError => "normalized covariance error",
            Metric::SignalError => "relative signal error",
        }
    }

    pub fn of(self, row: &SummaryRow) -> Stat {
        match self {
            Metric::FracHamming => row.frac_hamming,
            Metric::CovError => row.cov_error,
            Metric::SignalError => row.signal_error,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    N,
    M,
}

/// One curve per (method, m) when the x-axis is `n`, per method when it is `m`.
pub fn from_summary(title: &str, rows: &[SummaryRow], x: XAxis, metric: Metric) -> Plot {
    let mut keys: Vec<(Method, usize)> = rows
        .iter()
        .map(|r| (r.method, if x == XAxis::N { r.m } else { 0 }))
        .collect();
    keys.sort();
    keys.dedup();
    let series = keys
        .into_iter()
        .map(|(method, m)| {
            let mut points: Vec<Point> = rows
                .iter()
                .filter(|r| r.method == method && (x == XAxis::M || r.m == m) && r.count > 0)
                .map(|r| {
                    let s = metric.of(r);
                    Point { x: if x == XAxis::N { r.n as f64 } else { r.m as f64 }, mean: s.mean, stderr: s.stderr }
                })
                .collect();
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            let label = if x == XAxis::N { format!("{method}, m={m}") } else { method.to_string() };
            Series { label, points }
        })
        .collect();
    Plot {
        title: title.to_string(),
        x_label: if x == XAxis::N { "n".into() } else { "m".into() },
        y_label: metric.label().into(),
        series,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round step from {1, 2, 5} x 10^k giving about `target` intervals.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|f| f * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.mean.is_finite());
        let (mut x0, mut x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if x1 <= x0 {
            (x0, x1) = (x0 - 1.0, x1 + 1.0);
        }
        let pad = 0.05 * (x1 - x0);
        let (x0, x1) = (x0 - pad, x1 + pad);
        let y_top = pts().map(|p| p.mean + p.stderr.max(0.0)).fold(0.0, f64::max);
        let step = nice_step(if y_top > 0.0 { y_top } else { 1.0 }, 5.0);
        let y1 = (y_top / step).ceil().max(1.0) * step;
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - y / y1 * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(out, r##"<g stroke="#ccc" stroke-width="0.5">"##);
        let mut y = 0.0;
        while y <= y1 + 1e-9 * step {
            let _ = writeln!(out, r#"<line x1="{LEFT}" x2="{}" y1="{:.2}" y2="{:.2}"/>"#, LEFT + pw, sy(y), sy(y));
            y += step;
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(out, r#"<g text-anchor="end">"#);
        let mut y = 0.0;
        while y <= y1 + 1e-9 * step {
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}">{}</text>"#, LEFT - 6.0, sy(y) + 4.0, fmt_tick(y, step));
            y += step;
        }
        let _ = writeln!(out, "</g>");
        let mut xs: Vec<f64> = pts().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let _ = writeln!(out, r#"<g text-anchor="middle">"#);
        for x in &xs {
            let _ = writeln!(out, r#"<text x="{:.2}" y="{}">{x}</text>"#, sx(*x), TOP + ph + 18.0);
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let finite: Vec<&Point> = s.points.iter().filter(|p| p.mean.is_finite()).collect();
            let _ = writeln!(out, r#"<g class="series" data-label="{}" stroke="{color}" fill="{color}">"#, escape(&s.label));
            let path: Vec<String> = finite.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            for p in &finite {
                let (cx, lo, hi) = (sx(p.x), sy((p.mean - p.stderr).max(0.0)), sy(p.mean + p.stderr));
                let _ = writeln!(out, r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{lo:.2}" y2="{hi:.2}"/>"#);
                let _ = writeln!(
                    out,
                    r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" data-x="{}" data-mean="{}" data-stderr="{}"><title>{}: {} = {}, mean {:.4} ± {:.4}</title></circle>"#,
                    sy(p.mean),
                    p.x,
                    p.mean,
                    p.stderr,
                    escape(&s.label),
                    escape(&self.x_label),
                    p.x,
                    p.mean,
                    p.stderr
                );
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(out, r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(out, r#"<text x="{}" y="{}" stroke="none">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
            let _ = writeln!(out, "</g>");
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_tick(y: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{y:.decimals$}")
}
