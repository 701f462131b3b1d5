//! Minimal SVG charts written as plain text.
//!
//! Histogram bars carry `class="bar"` plus `data-arm`, `data-bin` and
//! `data-count` attributes, and their heights are proportional to the count.

use crate::metrics::{histogram_counts, shared_bin_range};
use chrono::NaiveDate;
use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const BASELINE_COLOR: &str = "#4c72b0";
pub const AUGMENTED_COLOR: &str = "#dd8452";

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn open(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    s
}

fn axes(s: &mut String) {
    let (x0, y0) = (LEFT, HEIGHT - BOTTOM);
    writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - RIGHT
    )
    .unwrap();
    writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#
    )
    .unwrap();
}

fn legend(s: &mut String, items: &[(&str, &str)]) {
    for (i, (label, color)) in items.iter().enumerate() {
        let x = WIDTH - RIGHT - 150.0;
        let y = TOP + 4.0 + 18.0 * i as f64;
        writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="12" height="12" fill="{color}"/>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 18.0,
            y + 10.0,
            escape(label)
        )
        .unwrap();
    }
}

/// Two-arm histogram over shared equal-width bins.
pub fn histogram(title: &str, baseline: &[f64], augmented: &[f64], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = shared_bin_range(baseline, augmented);
    let counts = [
        (
            "baseline",
            BASELINE_COLOR,
            histogram_counts(baseline, lo, hi, bins),
        ),
        (
            "augmented",
            AUGMENTED_COLOR,
            histogram_counts(augmented, lo, hi, bins),
        ),
    ];
    let max = counts
        .iter()
        .flat_map(|c| c.2.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let bin_w = plot_w / bins as f64;
    let unit = plot_h / max as f64;

    let mut s = open(title);
    axes(&mut s);
    writeln!(s, r#"<g class="bars" data-unit="{unit}">"#).unwrap();
    for (k, (arm, color, c)) in counts.iter().enumerate() {
        for (b, &n) in c.iter().enumerate() {
            let h = n as f64 * unit;
            let x = LEFT + b as f64 * bin_w + 2.0 + k as f64 * (bin_w - 4.0) / 2.0;
            writeln!(
                s,
                r#"<rect class="bar" data-arm="{arm}" data-bin="{b}" data-count="{n}" x="{x:.3}" y="{:.3}" width="{:.3}" height="{h}" fill="{color}" fill-opacity="0.8"/>"#,
                HEIGHT - BOTTOM - h,
                (bin_w - 4.0) / 2.0
            )
            .unwrap();
        }
    }
    writeln!(s, "</g>").unwrap();
    for b in 0..=bins {
        let edge = lo + (hi - lo) * b as f64 / bins as f64;
        let x = LEFT + b as f64 * bin_w;
        writeln!(
            s,
            r#"<text x="{x:.3}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            short(edge)
        )
        .unwrap();
    }
    for i in 0..=4 {
        let v = max as f64 * i as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{:.3}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 6.0,
            HEIGHT - BOTTOM - v * unit + 4.0,
            short(v)
        )
        .unwrap();
    }
    legend(
        &mut s,
        &[("baseline", BASELINE_COLOR), ("augmented", AUGMENTED_COLOR)],
    );
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Actual and predicted series against time.
pub fn overlay(title: &str, dates: &[NaiveDate], actual: &[f64], predicted: &[f64]) -> String {
    let n = actual.len().min(predicted.len());
    let (mut lo, mut hi) = actual[..n]
        .iter()
        .chain(&predicted[..n])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        lo = if lo.is_finite() { lo - 1.0 } else { -1.0 };
        hi = lo + 2.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |i: usize| {
        LEFT + if n > 1 {
            plot_w * i as f64 / (n - 1) as f64
        } else {
            0.0
        }
    };
    let py = |v: f64| HEIGHT - BOTTOM - plot_h * (v - lo) / (hi - lo);

    let mut s = open(title);
    axes(&mut s);
    for (class, color, values) in [
        ("actual", "#333333", actual),
        ("predicted", AUGMENTED_COLOR, predicted),
    ] {
        let points: Vec<String> = (0..n)
            .map(|i| format!("{:.2},{:.2}", px(i), py(values[i])))
            .collect();
        writeln!(
            s,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        )
        .unwrap();
    }
    for i in [0, n / 2, n.saturating_sub(1)] {
        if let Some(d) = dates.get(i) {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{d}</text>"#,
                px(i),
                HEIGHT - BOTTOM + 16.0
            )
            .unwrap();
        }
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 6.0,
            py(v) + 4.0,
            short(v)
        )
        .unwrap();
    }
    legend(&mut s, &[("actual", "#333333"), ("predicted", AUGMENTED_COLOR)]);
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars, one per label, drawn from a zero line.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64], color: &str) -> String {
    let n = labels.len().min(values.len());
    let row_h = 22.0;
    let height = TOP + BOTTOM + row_h * n.max(1) as f64;
    let label_w = 240.0;
    let plot_w = WIDTH - label_w - RIGHT;
    let lo = values.iter().copied().fold(0.0_f64, f64::min);
    let hi = values.iter().copied().fold(0.0_f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |v: f64| label_w + plot_w * (v - lo) / span;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    for i in 0..n {
        let y = TOP + row_h * i as f64;
        let (a, b) = (px(0.0), px(values[i]));
        writeln!(
            s,
            r#"<rect class="bar" data-label="{}" data-value="{}" x="{:.3}" y="{:.3}" width="{:.3}" height="{}" fill="{color}"/>"#,
            escape(&labels[i]),
            values[i],
            a.min(b),
            y + 3.0,
            (b - a).abs(),
            row_h - 6.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{:.3}" text-anchor="end">{}</text>"#,
            label_w - 8.0,
            y + row_h / 2.0 + 4.0,
            escape(&labels[i])
        )
        .unwrap();
    }
    let zero = px(0.0);
    writeln!(
        s,
        r#"<line class="axis" x1="{zero:.3}" y1="{TOP}" x2="{zero:.3}" y2="{:.3}" stroke="black"/>"#,
        height - BOTTOM
    )
    .unwrap();
    for v in [lo, hi] {
        writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="10">{}</text>"#,
            px(v),
            height - BOTTOM + 16.0,
            short(v)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"a<b & "c">"#), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn histogram_has_one_bar_per_arm_and_bin() {
        let s = histogram("t", &[0.0, 1.0], &[0.5], 4);
        assert_eq!(s.matches(r#"class="bar""#).count(), 8);
        assert!(s.contains(r#"data-arm="augmented" data-bin="2" data-count="1""#));
    }

    #[test]
    fn degenerate_inputs_still_render() {
        assert!(overlay("t", &[], &[1.0], &[1.0]).ends_with("</svg>\n"));
        assert!(bar_chart("t", &[], &[], "red").ends_with("</svg>\n"));
        assert!(histogram("t", &[2.0], &[2.0], 10).contains(r#"data-bin="0" data-count="1""#));
    }
}
