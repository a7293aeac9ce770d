//! Minimal SVG plotter for experiment summaries: axes, log scales, markers,
//! lines and text. Output depends only on the summary, so identical input
//! gives identical bytes.

use std::fmt::Write as _;

use clap::ValueEnum;
use garch_bk::bahadur::log_log_fit;
use garch_bk::harness::Summary;
use garch_bk::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Median statistic against n on log-log axes with the fitted line
    LoglogRate,
    /// Median statistic divided by the rate r_n
    Ratio,
    /// Oscillation and LIL ratios
    Diagnostics,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::LoglogRate => "loglog-rate",
            Kind::Ratio => "ratio",
            Kind::Diagnostics => "diagnostics",
        }
    }
}

pub const REFERENCE_SLOPE: f64 = -0.25;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Data-to-pixel map; both axes are stored already transformed.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_y: bool,
}

impl Frame {
    fn new(xs: &[f64], ys: &[f64], log_y: bool) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.08 * span, hi + 0.08 * span)
        };
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            pad(lo, hi)
        };
        Self { x: range(xs), y: range(ys), log_y }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn format_value(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { out }
    }

    fn axes(&mut self, frame: &Frame, ns: &[usize], x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            self.out,
            r#"<path class="axes" d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
        );
        for &n in ns {
            let x = frame.px((n as f64).ln());
            let _ = writeln!(
                self.out,
                r#"<line class="tick" x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{n}</text>"#,
                y0 + 5.0,
                y0 + 18.0
            );
        }
        for i in 0..5 {
            let t = frame.y.0 + (frame.y.1 - frame.y.0) * (i as f64 + 0.5) / 5.0;
            let y = frame.py(t);
            let label = if frame.log_y { t.exp() } else { t };
            let _ = writeln!(
                self.out,
                r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0,
                format_value(label)
            );
        }
        let _ = writeln!(
            self.out,
            r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.out,
            r#"<text class="ylabel" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn markers(&mut self, frame: &Frame, pts: &[(f64, f64)], color: &str) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.out,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                frame.px(x),
                frame.py(y)
            );
        }
    }

    fn polyline(&mut self, frame: &Frame, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(
            self.out,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}"/>"#,
            coords.join(" ")
        );
    }

    fn segment(&mut self, frame: &Frame, class: &str, a: (f64, f64), b: (f64, f64), style: &str) {
        let _ = writeln!(
            self.out,
            r#"<line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            frame.px(a.0),
            frame.py(a.1),
            frame.px(b.0),
            frame.py(b.1)
        );
    }

    fn text(&mut self, class: &str, x: f64, y: f64, body: &str, color: &str) {
        let _ = writeln!(self.out, r#"<text class="{class}" x="{x:.2}" y="{y:.2}" fill="{color}">{}</text>"#, escape(body));
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn medians(summary: &Summary, statistic: &str) -> Result<Vec<(usize, f64)>> {
    let pts = summary
        .medians(statistic)
        .ok_or_else(|| Error::InvalidArgument(format!("summary has no statistic named {statistic:?}")))?;
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!("plot needs at least 2 n values, summary has {}", pts.len())));
    }
    Ok(pts)
}

pub fn render(summary: &Summary, kind: Kind, statistic: &str, reference: bool) -> Result<String> {
    match kind {
        Kind::LoglogRate => loglog_rate(summary, statistic, reference),
        Kind::Ratio => ratio(summary, statistic),
        Kind::Diagnostics => diagnostics(summary),
    }
}

fn loglog_rate(summary: &Summary, statistic: &str, reference: bool) -> Result<String> {
    let pts = medians(summary, statistic)?;
    let (slope, intercept) = match summary.fit(statistic) {
        Some(f) => (f.exponent, f.intercept),
        None => log_log_fit(&pts)?,
    };
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(n, v)| ((n as f64).ln(), v.ln())).collect();
    let (lx0, lx1) = (logs[0].0, logs[logs.len() - 1].0);
    let line = |lx: f64| intercept + slope * lx;
    let cx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let cy = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let reference_at = |lx: f64| cy + REFERENCE_SLOPE * (lx - cx);

    let xs: Vec<f64> = logs.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = logs.iter().map(|p| p.1).chain([line(lx0), line(lx1)]).collect();
    if reference {
        ys.extend([reference_at(lx0), reference_at(lx1)]);
    }
    let frame = Frame::new(&xs, &ys, true);
    let ns: Vec<usize> = pts.iter().map(|p| p.0).collect();

    let mut c = Canvas::new(&format!("median {statistic} against n"));
    c.axes(&frame, &ns, "n (log scale)", &format!("median {statistic} (log scale)"));
    c.segment(&frame, "fit", (lx0, line(lx0)), (lx1, line(lx1)), &format!(r#"stroke="{}" stroke-width="1.5""#, COLORS[0]));
    if reference {
        c.segment(
            &frame,
            "reference",
            (lx0, reference_at(lx0)),
            (lx1, reference_at(lx1)),
            r##"stroke="#555555" stroke-dasharray="6 4""##,
        );
    }
    c.markers(&frame, &logs, COLORS[0]);
    c.text("slope", LEFT + 12.0, TOP + 14.0, &format!("fitted slope = {slope:.6}"), COLORS[0]);
    if reference {
        c.text("slope-reference", LEFT + 12.0, TOP + 30.0, &format!("reference slope = {REFERENCE_SLOPE:.6}"), "#555555");
    }
    Ok(c.finish())
}

fn ratio(summary: &Summary, statistic: &str) -> Result<String> {
    let pts = medians(summary, statistic)?;
    let ratios: Vec<(f64, f64)> = summary
        .per_n
        .iter()
        .zip(&pts)
        .map(|(p, &(n, v))| ((n as f64).ln(), v / p.rates.r_n))
        .collect();
    let xs: Vec<f64> = ratios.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = ratios.iter().map(|p| p.1).collect();
    let frame = Frame::new(&xs, &ys, false);
    let ns: Vec<usize> = pts.iter().map(|p| p.0).collect();
    let mut c = Canvas::new(&format!("median {statistic} / r_n"));
    c.axes(&frame, &ns, "n (log scale)", &format!("median {statistic} / r_n"));
    c.polyline(&frame, &ratios, COLORS[0]);
    c.markers(&frame, &ratios, COLORS[0]);
    Ok(c.finish())
}

fn diagnostics(summary: &Summary) -> Result<String> {
    if summary.per_n.len() < 2 {
        return Err(Error::InsufficientData("plot needs at least 2 n values".into()));
    }
    let series: [(&str, Vec<(f64, f64)>); 3] = [
        ("median oscillation / b_n*", summary.per_n.iter().map(|p| (p.n, p.ratios.oscillation_over_b_n_star)).map(log_point).collect()),
        ("median oscillation / b_n", summary.per_n.iter().map(|p| (p.n, p.ratios.oscillation_over_b_n)).map(log_point).collect()),
        ("median lil", summary.per_n.iter().map(|p| (p.n, p.stats.get("lil").map_or(f64::NAN, |q| q.median))).map(log_point).collect()),
    ];
    if series.iter().any(|(_, pts)| pts.iter().any(|p| !p.1.is_finite())) {
        return Err(Error::InvalidArgument("summary diagnostics must be positive and finite".into()));
    }
    let xs: Vec<f64> = series[0].1.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1)).collect();
    let frame = Frame::new(&xs, &ys, true);
    let ns: Vec<usize> = summary.per_n.iter().map(|p| p.n).collect();
    let mut c = Canvas::new("oscillation and LIL diagnostics");
    c.axes(&frame, &ns, "n (log scale)", "ratio (log scale)");
    for (i, (label, pts)) in series.iter().enumerate() {
        c.polyline(&frame, pts, COLORS[i]);
        c.markers(&frame, pts, COLORS[i]);
        c.text("legend", LEFT + 12.0, TOP + 14.0 + 16.0 * i as f64, label, COLORS[i]);
    }
    Ok(c.finish())
}

fn log_point((n, v): (usize, f64)) -> (f64, f64) {
    ((n as f64).ln(), if v > 0.0 { v.ln() } else { f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use garch_bk::harness::{summarize_rows, CsvRow};

    fn summary(ns: &[usize]) -> Summary {
        let rows: Vec<CsvRow> = ns
            .iter()
            .enumerate()
            .map(|(i, &n)| CsvRow {
                n,
                rep: 0,
                seed: i as u64,
                r_uniform: 0.3 / (1.0 + i as f64),
                r_general: 0.4 / (1.0 + i as f64),
                sup_beta: 0.8,
                oscillation: 1e-3 / (1.0 + i as f64),
                lil: 0.5,
            })
            .collect();
        summarize_rows(&rows).unwrap()
    }

    #[test]
    fn two_point_loglog_has_two_markers_and_one_fit() {
        let s = summary(&[1000, 4000]);
        let svg = render(&s, Kind::LoglogRate, "r_general", false).unwrap();
        assert_eq!(svg.matches(r#"class="marker""#).count(), 2);
        assert_eq!(svg.matches(r#"class="fit""#).count(), 1);
        assert_eq!(svg.matches(r#"class="reference""#).count(), 0);
        let with_ref = render(&s, Kind::LoglogRate, "r_general", true).unwrap();
        assert_eq!(with_ref.matches(r#"class="reference""#).count(), 1);
        assert!(with_ref.contains("reference slope = -0.250000"));
    }

    #[test]
    fn slope_annotation_matches_fit() {
        let s = summary(&[1000, 4000, 16000]);
        let svg = render(&s, Kind::LoglogRate, "r_uniform", false).unwrap();
        let expected = format!("fitted slope = {:.6}", s.fit("r_uniform").unwrap().exponent);
        assert!(svg.contains(&expected));
    }

    #[test]
    fn output_is_deterministic() {
        let s = summary(&[1000, 4000, 16000]);
        for kind in [Kind::LoglogRate, Kind::Ratio, Kind::Diagnostics] {
            assert_eq!(render(&s, kind, "r_general", true).unwrap(), render(&s, kind, "r_general", true).unwrap());
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(render(&summary(&[1000]), Kind::LoglogRate, "r_general", false).is_err());
        assert!(render(&summary(&[1000, 2000]), Kind::LoglogRate, "nope", false).is_err());
        assert!(render(&summary(&[1000]), Kind::Diagnostics, "r_general", false).is_err());
    }
}
