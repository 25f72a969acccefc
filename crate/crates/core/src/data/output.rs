use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulate::EnsembleSummary;
use crate::transient::ExpectedTrajectory;

/// Formats like C's `%.9g`.
pub fn format_sig(x: f64) -> String {
    format_g(x, 9)
}

fn format_g(x: f64, precision: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round first so the exponent reflects the rounded mantissa.
    let sci = format!("{:.*e}", precision - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `t,total,group_0,...,mass_defect`. Group columns past those of the regime
/// in force are left empty; `mass_defect` is 0 for the closed form.
pub fn trajectory_csv(traj: &ExpectedTrajectory) -> String {
    let groups = traj
        .per_group
        .as_ref()
        .map_or(0, |p| p.iter().map(Vec::len).max().unwrap_or(0));
    let mut out = String::from("t,total");
    for g in 0..groups {
        let _ = write!(out, ",group_{g}");
    }
    out.push_str(",mass_defect\n");
    for (i, (&t, &v)) in traj.times.iter().zip(&traj.values).enumerate() {
        let _ = write!(out, "{},{}", format_sig(t), format_sig(v));
        let row = traj
            .per_group
            .as_ref()
            .map(|p| p[i].as_slice())
            .unwrap_or(&[]);
        for g in 0..groups {
            out.push(',');
            if let Some(x) = row.get(g) {
                out.push_str(&format_sig(*x));
            }
        }
        let defect = traj.mass_defect.as_ref().map_or(0.0, |m| m[i]);
        let _ = writeln!(out, ",{}", format_sig(defect));
    }
    out
}

/// `day,rho_lambda,rho_d,rho_k` with days starting at 1.
pub fn rho_csv(rho_lambda: &[f64], rho_d: &[f64], rho_k: &[f64]) -> String {
    let mut out = String::from("day,rho_lambda,rho_d,rho_k\n");
    for (i, ((a, b), c)) in rho_lambda.iter().zip(rho_d).zip(rho_k).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            format_sig(*a),
            format_sig(*b),
            format_sig(*c)
        );
    }
    out
}

pub fn ensemble_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("day,mean,var,p05,p95\n");
    for i in 0..summary.mean.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            format_sig(summary.mean[i]),
            format_sig(summary.var[i]),
            format_sig(summary.p05[i]),
            format_sig(summary.p95[i])
        );
    }
    out
}

/// `day,group_0,...` for a single replication's per-group counts.
pub fn trace_csv(counts: &[Vec<u64>]) -> String {
    let groups = counts.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("day");
    for g in 0..groups {
        let _ = write!(out, ",group_{g}");
    }
    out.push('\n');
    for (i, row) in counts.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for g in 0..groups {
            out.push(',');
            if let Some(c) = row.get(g) {
                let _ = write!(out, "{c}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<ChartSeries>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn px(x: f64) -> String {
    format!("{x:.2}")
}

/// Line chart with labeled axes, one polyline per series.
pub fn render_svg(chart: &Chart) -> Result<String> {
    let points = chart.series.iter().flat_map(|s| s.x.iter().zip(&s.y));
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    let mut any = false;
    for (&x, &y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidParameters(
                "chart values must be finite".into(),
            ));
        }
        any = true;
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !any {
        return Err(Error::EmptyInput);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.05 };
        y0 -= pad;
        y1 += pad;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        px(LEFT + plot_w / 2.0),
        escape(&chart.title)
    );
    // Axes.
    let _ = writeln!(
        out,
        "<path d=\"M{l} {t} L{l} {b} L{r} {b}\" fill=\"none\" stroke=\"black\"/>",
        l = px(LEFT),
        t = px(TOP),
        b = px(TOP + plot_h),
        r = px(LEFT + plot_w)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (gx, gy) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{b}\" x2=\"{x}\" y2=\"{b2}\" stroke=\"black\"/><text x=\"{x}\" y=\"{ty}\" text-anchor=\"middle\">{label}</text>",
            x = px(gx),
            b = px(TOP + plot_h),
            b2 = px(TOP + plot_h + 5.0),
            ty = px(TOP + plot_h + 19.0),
            label = format_g(xv, 4)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{l2}\" y1=\"{y}\" x2=\"{l}\" y2=\"{y}\" stroke=\"black\"/><text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\">{label}</text>",
            l = px(LEFT),
            l2 = px(LEFT - 5.0),
            y = px(gy),
            tx = px(LEFT - 8.0),
            ty = px(gy + 4.0),
            label = format_g(yv, 6)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        px(LEFT + plot_w / 2.0),
        px(HEIGHT - 14.0),
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{y}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">{}</text>",
        escape(&chart.y_label),
        y = px(TOP + plot_h / 2.0)
    );
    for (i, s) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .map(|(&x, &y)| format!("{},{}", px(sx(x)), px(sy(y))))
                .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{}</text>",
            px(lx),
            px(lx + 20.0),
            px(lx + 26.0),
            px(ly + 4.0),
            escape(&s.label),
            y = px(ly)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
