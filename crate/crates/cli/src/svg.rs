//! Self-contained SVG figures. Data files stay in SI units; axes here show
//! hours and knots.

use std::fmt::Write;

use boustro_core::objective::PathPlan;
use boustro_core::units::mps_to_knots;
use boustro_core::Scenario;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    /// Draw as a staircase (best value so far) instead of markers only.
    pub step: bool,
    pub points: Vec<(f64, f64)>,
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in points {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        if !x.0.is_finite() {
            x = (0.0, 1.0);
            y = (0.0, 1.0);
        }
        let pad = |(lo, hi): (f64, f64)| {
            let d = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - d, hi + d)
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                out,
                r#"<line x1="{p:.2}" y1="{y1}" x2="{p:.2}" y2="{}" stroke="black"/>"#,
                y1 + 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y1 + 20.0,
                fmt_tick(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/>"#,
                x0 - 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                p + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-weight="bold">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 15.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }
}

fn open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

/// Line/marker chart of several series sharing one frame.
pub fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut out = String::new();
    open(&mut out, W, H);
    frame.axes(&mut out, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if s.step && s.points.len() > 1 {
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if i == 0 {
                    let _ = write!(d, "M{:.2},{:.2}", frame.px(x), frame.py(y));
                } else {
                    let _ = write!(d, " H{:.2} V{:.2}", frame.px(x), frame.py(y));
                }
            }
            let _ =
                writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, s.color);
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                frame.px(x),
                frame.py(y),
                s.color
            );
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 25.0,
            s.color
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

/// Green at `v_min` through red at `v_max`.
pub fn speed_color(speed: f64, v_min: f64, v_max: f64) -> String {
    let t = if v_max > v_min { ((speed - v_min) / (v_max - v_min)).clamp(0.0, 1.0) } else { 0.0 };
    format!("hsl({:.0},85%,40%)", 120.0 * (1.0 - t))
}

/// Map view: spills shaded by the remaining (posterior) leak mass, every
/// candidate trackline drawn, unused ones dashed, used ones colored by speed.
pub fn trajectory(scenario: &Scenario, plan: &PathPlan, posteriors: &[f64], title: &str) -> String {
    let area = scenario.area();
    let limits = scenario.limits();
    let side = W - LEFT - RIGHT;
    let scale = (side / area.width()).min((H - TOP - BOTTOM) / area.height());
    let px = |x: f64| LEFT + (x - area.x_min) * scale;
    let py = |y: f64| H - BOTTOM - (y - area.y_min) * scale;
    let mut out = String::new();
    open(&mut out, W, H);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        px(area.x_min),
        py(area.y_max),
        area.width() * scale,
        area.height() * scale
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-weight="bold">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let max_prior = scenario.sources().iter().map(|s| s.prior).fold(0.0, f64::max).max(1e-300);
    for (src, post) in scenario.sources().iter().zip(posteriors) {
        let pts: Vec<String> =
            src.spill.vertices().iter().map(|v| format!("{:.2},{:.2}", px(v.x), py(v.y))).collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="steelblue" fill-opacity="{:.3}" stroke="steelblue" stroke-width="0.5"><title>source {} prior {} posterior {:.6}</title></polygon>"#,
            pts.join(" "),
            0.05 + 0.6 * post / max_prior,
            src.id,
            src.prior,
            post
        );
    }
    for (j, line) in scenario.tracklines().iter().enumerate() {
        let (x1, x2, y) = (px(line.x_start), px(line.x_end), py(line.y));
        if plan.counts[j] == 0 {
            let _ = writeln!(
                out,
                r#"<line x1="{x1:.2}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="gray" stroke-width="0.7" stroke-dasharray="4 3"/>"#
            );
        } else {
            let color = speed_color(plan.speeds[j], limits.v_min, limits.v_max);
            let _ = writeln!(
                out,
                r#"<line x1="{x1:.2}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"><title>line {j}: {:.2} kn x{}</title></line>"#,
                mps_to_knots(plan.speeds[j]),
                plan.counts[j]
            );
        }
    }
    let lx = W - RIGHT + 15.0;
    let steps = 5;
    let _ = writeln!(out, r#"<text x="{lx}" y="{}">speed (kn)</text>"#, TOP + 10.0);
    for i in 0..steps {
        let v = limits.v_min + (limits.v_max - limits.v_min) * i as f64 / (steps - 1) as f64;
        let ly = TOP + 30.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="3"/>"#,
            lx + 25.0,
            speed_color(v, limits.v_min, limits.v_max)
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{:.2}</text>"#, lx + 30.0, ly + 4.0, mps_to_knots(v));
    }
    let ly = TOP + 30.0 + 20.0 * steps as f64;
    let _ = writeln!(
        out,
        r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="gray" stroke-dasharray="4 3"/>"#,
        lx + 25.0
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}">unused</text>"#, lx + 30.0, ly + 4.0);
    let _ = writeln!(out, r#"<text x="{lx}" y="{}">shade: remaining</text>"#, ly + 30.0);
    let _ = writeln!(out, r#"<text x="{lx}" y="{}">leak mass</text>"#, ly + 45.0);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{:.0} m x {:.0} m</text>"#,
        W / 2.0 - RIGHT / 2.0,
        H - 15.0,
        area.width(),
        area.height()
    );
    out.push_str("</svg>\n");
    out
}
