use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A named curve of `(iteration, value)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 240.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

/// Decade exponents covering `[lo, hi]` (both positive).
pub(crate) fn decade_ticks(lo: f64, hi: f64) -> Vec<i32> {
    let a = lo.log10().floor() as i32;
    let b = hi.log10().ceil() as i32;
    if a == b {
        vec![a, a + 1]
    } else {
        (a..=b).collect()
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Renders a standalone SVG 1.1 line chart. Output depends only on input.
pub fn render_svg_curves(series: &[Series], log_y: bool) -> Result<String> {
    if series.is_empty() {
        return Err(Error::usage("nothing to plot"));
    }
    for s in series {
        if s.points.len() < 2 {
            return Err(Error::usage(format!(
                "series '{}' has {} point(s), need at least 2",
                s.name,
                s.points.len()
            )));
        }
        if let Some(i) = s
            .points
            .iter()
            .position(|p| !p.0.is_finite() || !p.1.is_finite())
        {
            return Err(Error::usage(format!(
                "series '{}': point {i} is not finite",
                s.name
            )));
        }
        if log_y {
            if let Some(i) = s.points.iter().position(|p| p.1 <= 0.0) {
                return Err(Error::usage(format!(
                    "series '{}': value at index {i} is not positive, cannot use a log axis",
                    s.name
                )));
            }
        }
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let (xlo, xhi) = padded(xlo, xhi);
    let (x_ticks, x_dec) = linear_ticks(xlo, xhi);

    // y axis in plotting units (log10 when requested)
    let (ylo_u, yhi_u, y_ticks): (f64, f64, Vec<(f64, String)>) = if log_y {
        let decades = decade_ticks(ylo, yhi);
        let lo = *decades.first().unwrap() as f64;
        let hi = *decades.last().unwrap() as f64;
        let ticks = decades
            .iter()
            .map(|&e| (e as f64, format!("1e{e}")))
            .collect();
        (lo, hi, ticks)
    } else {
        let (lo, hi) = padded(ylo, yhi);
        let (t, dec) = linear_ticks(lo, hi);
        let ticks = t.iter().map(|&v| (v, format!("{v:.dec$}"))).collect();
        (lo, hi, ticks)
    };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xlo) / (xhi - xlo) * pw;
    let sy = |y: f64| {
        let u = if log_y { y.log10() } else { y };
        TOP + (1.0 - (u - ylo_u) / (yhi_u - ylo_u)) * ph
    };
    let sy_units = |u: f64| TOP + (1.0 - (u - ylo_u) / (yhi_u - ylo_u)) * ph;

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
    );
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        o,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        o,
        r#"<g font-family="sans-serif" font-size="12" fill="black">"#
    );
    // frame
    let _ = writeln!(
        o,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for &t in &x_ticks {
        let x = sx(t);
        let _ = writeln!(
            o,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            o,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.x_dec$}</text>"#,
            TOP + ph + 20.0
        );
    }
    for (u, label) in &y_ticks {
        let y = sy_units(*u);
        let _ = writeln!(
            o,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            o,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        o,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        if log_y { "loss (log scale)" } else { "loss" }
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            o,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            o,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 25.0
        );
        let _ = writeln!(
            o,
            r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 32.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    o.push_str("</g>\n</svg>\n");
    Ok(o)
}

/// Renders and writes to a new file (never overwrites).
pub fn write_svg_curves(series: &[Series], path: &Path, log_y: bool) -> Result<()> {
    let text = render_svg_curves(series, log_y)?;
    super::write_new(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(name: &str, v: f64) -> Series {
        Series {
            name: name.into(),
            points: (0..5).map(|i| (i as f64 * 10.0, v)).collect(),
        }
    }

    #[test]
    fn constant_series_are_horizontal() {
        let svg = render_svg_curves(&[flat("a", 1.0), flat("b", 2.0)], false).unwrap();
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            let pts = l
                .split("points=\"")
                .nth(1)
                .unwrap()
                .trim_end_matches("\"/>");
            let ys: Vec<&str> = pts
                .split(' ')
                .map(|p| p.split(',').nth(1).unwrap())
                .collect();
            assert!(ys.windows(2).all(|w| w[0] == w[1]));
        }
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
    }

    #[test]
    fn deterministic() {
        let s = [flat("x < y & z", 0.5)];
        assert_eq!(
            render_svg_curves(&s, true).unwrap(),
            render_svg_curves(&s, true).unwrap()
        );
        assert!(render_svg_curves(&s, false)
            .unwrap()
            .contains("x &lt; y &amp; z"));
    }

    #[test]
    fn log_axis_uses_decades() {
        let s = Series {
            name: "decay".into(),
            points: (0..=40)
                .map(|i| (i as f64, 10f64.powf(1.0 - i as f64 / 10.0)))
                .collect(),
        };
        assert_eq!(decade_ticks(1e-3, 1e1), vec![-3, -2, -1, 0, 1]);
        let svg = render_svg_curves(&[s], true).unwrap();
        let labels: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("class=\"ytick\""))
            .map(|l| l.split('>').nth(1).unwrap().trim_end_matches("</text"))
            .collect();
        assert_eq!(labels, vec!["1e-3", "1e-2", "1e-1", "1e0", "1e1"]);
    }

    #[test]
    fn log_axis_rejects_non_positive() {
        let mut s = flat("a", 1.0);
        s.points[3].1 = 0.0;
        let e = render_svg_curves(&[s], true).unwrap_err();
        assert!(e.is_usage() && e.to_string().contains("index 3"), "{e}");
    }

    #[test]
    fn needs_two_points() {
        let s = Series {
            name: "one".into(),
            points: vec![(0.0, 1.0)],
        };
        assert!(render_svg_curves(&[s], false).unwrap_err().is_usage());
        assert!(render_svg_curves(&[], false).unwrap_err().is_usage());
    }
}
