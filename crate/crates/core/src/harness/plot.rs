//! Self-contained log-log SVG of a sweep: median error per method, the
//! `sqrt(r)` ceiling and the dashed lower-bound reference.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Method, SweepResult};
use crate::error::Result;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn color(method: Method) -> &'static str {
    match method {
        Method::Mllam => "#1f77b4",
        Method::Mllams => "#2ca02c",
        Method::Mom => "#ff7f0e",
        Method::RandomInit => "#9467bd",
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Decade-aligned log10 range covering the positive `values`.
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let logs: Vec<f64> = values
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(f64::log10)
            .collect();
        let (mut lo, mut hi) = logs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if logs.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self {
            lo: lo.floor(),
            hi: hi.ceil(),
        }
    }

    fn frac(&self, value: f64) -> f64 {
        (value.log10() - self.lo) / (self.hi - self.lo)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo as i32)..=(self.hi as i32)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn polyline(out: &mut String, points: &[(f64, f64)], stroke: &str, dash: Option<&str>) {
    if points.is_empty() {
        return;
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    let dash = dash
        .map(|d| format!(" stroke-dasharray=\"{d}\""))
        .unwrap_or_default();
    writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#,
        coords.join(" ")
    )
    .unwrap();
}

/// SVG document for `result`; `r` places the `sqrt(r)` reference line.
pub fn render_svg(result: &SweepResult, r: usize) -> String {
    let ceiling = (r as f64).sqrt();
    let methods = result.methods();
    let series: Vec<(Method, Vec<(f64, f64)>)> = methods
        .iter()
        .map(|&m| {
            (
                m,
                result
                    .median_series(m)
                    .into_iter()
                    .filter(|(x, y)| *x > 0.0 && *y > 0.0)
                    .collect(),
            )
        })
        .collect();
    let lower: Vec<(f64, f64)> = result
        .lower_bound_series()
        .into_iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();

    let xs = Axis::fit(result.rows.iter().map(|r| r.value));
    let ys = Axis::fit(
        series
            .iter()
            .flat_map(|(_, s)| s.iter().map(|p| p.1))
            .chain(lower.iter().map(|p| p.1))
            .chain(std::iter::once(ceiling)),
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + xs.frac(x) * plot_w;
    let py = |y: f64| TOP + (1.0 - ys.frac(y)) * plot_h;
    let param = result
        .rows
        .first()
        .map(|r| r.param.name())
        .unwrap_or("value");

    let mut out = String::new();
    writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    for e in xs.decades() {
        let x = LEFT + (e as f64 - xs.lo) / (xs.hi - xs.lo) * plot_w;
        writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 18.0
        )
        .unwrap();
    }
    for e in ys.decades() {
        let y = TOP + (1.0 - (e as f64 - ys.lo) / (ys.hi - ys.lo)) * plot_h;
        writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>
<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">median |(I - U*U*ᵀ)U|_F</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(param),
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    let y_ceiling = py(ceiling);
    writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{y_ceiling:.2}" x2="{:.2}" y2="{y_ceiling:.2}" stroke="#1f77b4" stroke-width="1.5" stroke-dasharray="2,3"/>"##,
        LEFT + plot_w
    )
    .unwrap();

    let mut legend: Vec<(String, &str, Option<&str>)> = Vec::new();
    for (method, points) in &series {
        let mapped: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        polyline(&mut out, &mapped, color(*method), None);
        for (x, y) in &mapped {
            writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#,
                color(*method)
            )
            .unwrap();
        }
        legend.push((method.name().to_string(), color(*method), None));
    }
    let mapped: Vec<(f64, f64)> = lower.iter().map(|&(x, y)| (px(x), py(y))).collect();
    polyline(&mut out, &mapped, "#555555", Some("6,4"));
    legend.push(("lower-bound rate".into(), "#555555", Some("6,4")));
    legend.push((format!("sqrt(r) = {ceiling:.3}"), "#1f77b4", Some("2,3")));

    for (i, (label, stroke, dash)) in legend.iter().enumerate() {
        let y = TOP + 14.0 + 20.0 * i as f64;
        let x = LEFT + plot_w + 12.0;
        let dash = dash
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(label)
        )
        .unwrap();
    }
    writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#555555">medians over repeats</text>"##,
        LEFT + plot_w + 12.0,
        TOP + 14.0 + 20.0 * legend.len() as f64
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

pub fn emit_plot(result: &SweepResult, r: usize, path: &Path) -> Result<()> {
    fs::write(path, render_svg(result, r))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{SweepRow, Varying};

    fn flat_result() -> SweepResult {
        let rows = [0.1, 1.0, 10.0]
            .iter()
            .map(|&value| SweepRow {
                method: Method::Mom,
                param: Varying::Sigma,
                value,
                repeat: 0,
                frob: 0.5,
                spectral: 0.4,
                rescaled: 0.3,
                lower_bound: 0.5,
                wall_ms: 0.0,
                seed: 1,
            })
            .collect();
        SweepResult {
            rows,
            failures: vec![],
        }
    }

    #[test]
    fn flat_series_is_well_formed() {
        let svg = render_svg(&flat_result(), 2);
        let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
        let lines: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .collect();
        assert_eq!(lines.len(), 2);
        let pts = lines[0].attribute("points").unwrap();
        let ys: Vec<&str> = pts
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]), "flat line: {pts}");
        assert!(lines[1].attribute("stroke-dasharray").is_some());
    }

    #[test]
    fn empty_result_still_renders() {
        let svg = render_svg(&SweepResult::default(), 3);
        roxmltree::Document::parse(&svg).unwrap();
    }
}
