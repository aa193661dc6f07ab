//! Minimal SVG line charts of sweep results.

use std::fmt::Write;

use crate::experiments::{ModelRecord, Summary, SweepRecord};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 210.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: usize,
}

/// Round numbers covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON * hi.abs().max(1.0));
    let raw = span / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * magnitude)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * magnitude);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.log10().floor() as i32;
    let last = hi.log10().ceil() as i32;
    (first..=last.max(first + 1)).map(|e| 10f64.powi(e)).collect()
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `series` as an SVG document. Non-finite points, and non-positive
/// ones on a log axis, break the line.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let usable = |y: f64| y.is_finite() && (!log_y || y > 0.0);
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|&y| usable(y))
        .collect();
    let (x_lo, x_hi) = bounds(&xs).unwrap_or((0.0, 1.0));
    let (y_lo, y_hi) = bounds(&ys).unwrap_or((if log_y { 0.1 } else { 0.0 }, 1.0));
    let x_ticks = linear_ticks(x_lo, x_hi);
    let y_ticks = if log_y { log_ticks(y_lo, y_hi) } else { linear_ticks(y_lo, y_hi) };
    let (x0, x1) = (x_ticks[0], *x_ticks.last().unwrap());
    let (y0, y1) = (y_ticks[0], *y_ticks.last().unwrap());
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| {
        let t = if log_y {
            (y.log10() - y0.log10()) / (y1.log10() - y0.log10())
        } else {
            (y - y0) / (y1 - y0)
        };
        TOP + (1.0 - t) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    for &t in &x_ticks {
        let x = px(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{TOP:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/>"##,
            TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            label(t)
        );
    }
    for &t in &y_ticks {
        let y = py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for s in series {
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, svg: &mut String| {
            if segment.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                    segment.join(" ")
                );
            }
            segment.clear();
        };
        for &(x, y) in &s.points {
            if usable(y) {
                segment.push(format!("{:.2},{:.2}", px(x), py(y)));
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
            } else {
                flush(&mut segment, &mut svg);
            }
        }
        flush(&mut segment, &mut svg);
    }

    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = LEFT + plot_w + 14.0;
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="1.8"{dash}/>"#,
            x + 26.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 32.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> Option<(f64, f64)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

/// Train (solid) and generalization (dashed) curves for every model, using
/// `pick` to select the pair of metrics.
pub fn sweep_series(sweep: &[SweepRecord], pick: impl Fn(&ModelRecord) -> Option<(Summary, Summary)>) -> Vec<Series> {
    let ids: Vec<&str> = sweep
        .first()
        .map(|r| r.models.iter().map(|m| m.model_id.as_str()).collect())
        .unwrap_or_default();
    let mut series = Vec::new();
    for (color, id) in ids.iter().enumerate() {
        let mut train = Vec::new();
        let mut gen = Vec::new();
        for record in sweep {
            if let Some((t, g)) = record.model(id).and_then(&pick) {
                train.push((record.ratio, t.mean));
                gen.push((record.ratio, g.mean));
            }
        }
        if train.is_empty() {
            continue;
        }
        series.push(Series {
            label: format!("{id} train"),
            points: train,
            dashed: false,
            color,
        });
        series.push(Series {
            label: format!("{id} gen"),
            points: gen,
            dashed: true,
            color,
        });
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = linear_ticks(0.13, 0.87);
        assert!(t[0] <= 0.13 && *t.last().unwrap() >= 0.87);
        assert_eq!(log_ticks(0.003, 0.2), [1e-3, 1e-2, 1e-1, 1.0]);
    }

    #[test]
    fn chart_is_deterministic_and_breaks_on_nan() {
        let series = [Series {
            label: "a<b".into(),
            points: vec![(0.5, 1.0), (1.0, f64::NAN), (2.0, 0.5), (3.0, 0.25)],
            dashed: true,
            color: 0,
        }];
        let a = line_chart("t", "k/m", "error", &series, true);
        assert_eq!(a, line_chart("t", "k/m", "error", &series, true));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<polyline").count(), 1);
        assert!(a.contains("a&lt;b"));
    }
}
