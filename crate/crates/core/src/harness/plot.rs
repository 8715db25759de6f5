//! Hand-written SVG charts. Rendering is a pure function of its input and
//! prints every coordinate with fixed precision, so output is byte-stable.
//!
//! Trace time axes are shifted so the first impact detection sits at
//! t = 0; logs without a detection keep absolute time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{io_err, HarnessError, RolloutLog, SummaryRow};
use crate::controller::Variant;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 44.0;

const SERIES_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn variant_color(v: Variant) -> &'static str {
    match v {
        Variant::NoRs => "#1f77b4",
        Variant::NoInterim => "#d62728",
        Variant::NoImpactMap => "#e6b800",
        Variant::Proposed => "#7b3294",
    }
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let mult = [1.0, 2.0, 5.0, 10.0].into_iter().find(|m| m * mag >= raw).unwrap_or(10.0);
    let step = mult * mag;
    // i * mult / 10^k rounds correctly where i * step accumulates error
    let value = |i: f64| if mag < 1.0 { i * mult / (1.0 / mag).round() } else { i * mult * mag };
    let mut out = Vec::new();
    let mut i = (lo / step).ceil();
    while value(i) <= hi + 1e-9 * span {
        // avoid printing "-0"
        out.push(if i == 0.0 { 0.0 } else { value(i) });
        i += 1.0;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| {
            if b > a {
                (a, b)
            } else {
                (a - 0.5, b + 0.5)
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>", (LEFT + W - RIGHT) / 2.0, escape(title));
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: bool) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(s, "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y0 - y1);
    for t in ticks(f.y.0, f.y.1) {
        let y = f.py(t);
        let _ = writeln!(s, "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>");
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 4.0, y + 4.0, fmt_tick(t));
    }
    if xticks {
        for t in ticks(f.x.0, f.x.1) {
            let x = f.px(t);
            let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{y0:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>", y0 + 4.0);
            let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", y0 + 16.0, fmt_tick(t));
        }
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 8.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn legend(s: &mut String, entries: &[(String, &str, bool)]) {
    let x = W - RIGHT + 12.0;
    for (i, (label, color, dashed)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let dash = if *dashed { " stroke-dasharray=\"5 3\"" } else { "" };
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"3\"{dash}/>", x + 20.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", x + 26.0, y + 4.0, escape(label));
    }
}

struct Series {
    label: String,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(y);
        yh = yh.max(y);
    }
    let f = Frame::new((xl, xh), (yl, yh));
    let mut s = String::new();
    open(&mut s, title);
    axes(&mut s, &f, xlabel, ylabel, true);
    if f.x.0 <= 0.0 && f.x.1 >= 0.0 {
        let x = f.px(0.0);
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"2 2\"/>", f.py(f.y.0), f.py(f.y.1));
    }
    for ser in series {
        let dash = if ser.dashed { " stroke-dasharray=\"5 3\"" } else { "" };
        let _ = write!(s, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"", ser.color);
        for (i, &(x, y)) in ser.points.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", f.px(x), f.py(y));
        }
        s.push_str("\"/>\n");
    }
    let entries: Vec<(String, &str, bool)> = series.iter().map(|x| (x.label.clone(), x.color, x.dashed)).collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Time of the first reported impact detection, if any.
fn alignment(log: &RolloutLog) -> f64 {
    log.records
        .iter()
        .find(|r| r.robots.iter().any(|x| x.detected))
        .map(|r| r.t)
        .unwrap_or(0.0)
}

fn nonempty(log: &RolloutLog) -> Result<(), HarnessError> {
    if log.records.is_empty() {
        Err(HarnessError::EmptyPlot("log has no records".into()))
    } else {
        Ok(())
    }
}

/// End-effector linear velocity per robot, with the reference dashed.
pub fn velocity_svg(log: &RolloutLog) -> Result<String, HarnessError> {
    nonempty(log)?;
    let t0 = alignment(log);
    let mut series = Vec::new();
    let n = log.records[0].robots.len();
    let mut color = SERIES_COLORS.iter().copied();
    for i in 0..n {
        for (axis, get) in [("x", 0usize), ("y", 1)] {
            let c = color.next().unwrap_or("black");
            let pick = |v: &crate::geometry::Twist2| if get == 0 { v.vx } else { v.vy };
            series.push(Series {
                label: format!("r{} v{axis}", i + 1),
                color: c,
                dashed: false,
                points: log.records.iter().map(|r| (r.t - t0, pick(&r.robots[i].ee_twist))).collect(),
            });
            series.push(Series {
                label: format!("r{} v{axis} ref", i + 1),
                color: c,
                dashed: true,
                points: log.records.iter().map(|r| (r.t - t0, pick(&r.robots[i].reference))).collect(),
            });
        }
    }
    Ok(line_chart("End-effector velocity", "time from impact detection [s]", "velocity [m/s]", &series))
}

/// Stacked target-acceleration norm over time.
pub fn target_accel_svg(log: &RolloutLog) -> Result<String, HarnessError> {
    nonempty(log)?;
    let t0 = alignment(log);
    let series = [Series {
        label: "target accel".into(),
        color: SERIES_COLORS[0],
        dashed: false,
        points: log.records.iter().map(|r| (r.t - t0, r.target_norm)).collect(),
    }];
    Ok(line_chart("Target acceleration norm", "time from impact detection [s]", "norm [SI]", &series))
}

/// Grouped bars: one group per key, one bar per variant.
pub fn bar_chart_svg(rows: &[SummaryRow], title: &str) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyPlot("summary has no rows".into()));
    }
    let mut keys: Vec<&str> = Vec::new();
    let mut variants: Vec<Variant> = Vec::new();
    for r in rows {
        if !keys.contains(&r.group_key.as_str()) {
            keys.push(&r.group_key);
        }
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    let ymax = rows.iter().map(|r| r.mean_max_target_accel).fold(0.0, f64::max);
    let f = Frame::new((0.0, keys.len() as f64), (0.0, if ymax > 0.0 { ymax * 1.1 } else { 1.0 }));
    let mut s = String::new();
    open(&mut s, title);
    axes(&mut s, &f, "group", "mean max target accel", false);
    let slot = 0.8 / variants.len() as f64;
    for (g, key) in keys.iter().enumerate() {
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", f.px(g as f64 + 0.5), f.py(0.0) + 16.0, escape(key));
        for (vi, v) in variants.iter().enumerate() {
            let Some(r) = rows.iter().find(|r| r.variant == *v && r.group_key == *key) else {
                continue;
            };
            let x0 = f.px(g as f64 + 0.1 + slot * vi as f64);
            let x1 = f.px(g as f64 + 0.1 + slot * (vi + 1) as f64);
            let y = f.py(r.mean_max_target_accel);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x1 - x0,
                f.py(0.0) - y,
                variant_color(*v)
            );
        }
    }
    let entries: Vec<(String, &str, bool)> = variants.iter().map(|v| (v.name().to_string(), variant_color(*v), false)).collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    Ok(s)
}

fn write(path: PathBuf, body: String) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, body).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes `velocity.svg` and `target_accel.svg`.
pub fn write_log_plots(log: &RolloutLog, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let v = velocity_svg(log)?;
    let a = target_accel_svg(log)?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(vec![write(dir.join("velocity.svg"), v)?, write(dir.join("target_accel.svg"), a)?])
}

/// Writes `<stem>.svg` with one bar chart of the summary.
pub fn write_summary_plots(rows: &[SummaryRow], dir: &Path, stem: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let body = bar_chart_svg(rows, &format!("Mean max target acceleration by {stem}"))?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(vec![write(dir.join(format!("{stem}.svg")), body)?])
}
