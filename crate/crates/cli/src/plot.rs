//! Static SVG plots and terminal sparklines.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn frame(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
        for (v, anchor_y) in [(self.y0, b), (self.y1, t)] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                l - 4.0,
                anchor_y + 4.0,
                short(v)
            );
        }
        for (v, anchor_x) in [(self.x0, l), (self.x1, r)] {
            let _ = writeln!(
                out,
                r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{}</text>"#,
                b + 16.0,
                short(v)
            );
        }
    }
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Barrier value against step index, with the `h = 0` boundary dashed and the
/// minimum annotated. Non-finite samples are skipped.
pub fn h_curve_svg(title: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(_, h)| h.is_finite()).collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), &(_, h)| (lo.min(h), hi.max(h)));
    (lo, hi) = padded(lo, hi);
    let t_max = finite.iter().map(|p| p.0).fold(1.0f64, f64::max);
    let axes = Axes {
        x0: 0.0,
        x1: t_max,
        y0: lo,
        y1: hi,
    };
    let mut out = String::new();
    svg_open(&mut out, title);
    axes.frame(&mut out, "step", "h");
    let zero = axes.py(0.0);
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{zero}" x2="{}" y2="{zero}" stroke="black" stroke-dasharray="6 4"/>"#,
        WIDTH - MARGIN
    );
    let path: Vec<String> = finite
        .iter()
        .map(|&(t, h)| format!("{:.2},{:.2}", axes.px(t), axes.py(h)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="crimson"/>"#,
        path.join(" ")
    );
    if let Some(&(t, h)) = finite.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        let (x, y) = (axes.px(t), axes.py(h));
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="crimson"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">min h = {h:e} at step {t}</text>"#,
            x + 6.0,
            (y - 6.0).max(MARGIN)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram of per-step latencies in microseconds with the median marked.
pub fn latency_svg(title: &str, micros: &[f64], bins: usize) -> String {
    let mut sorted = micros.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in &sorted {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let peak = *counts.iter().max().unwrap_or(&1) as f64;
    let axes = Axes {
        x0: lo,
        x1: lo + width * bins as f64,
        y0: 0.0,
        y1: peak,
    };
    let mut out = String::new();
    svg_open(&mut out, title);
    axes.frame(&mut out, "filter step latency (µs)", "count");
    for (i, &c) in counts.iter().enumerate() {
        let x = axes.px(lo + width * i as f64);
        let w = axes.px(lo + width * (i + 1) as f64) - x;
        let y = axes.py(c as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
            (w - 1.0).max(0.5),
            HEIGHT - MARGIN - y
        );
    }
    let mx = axes.px(med);
    let _ = writeln!(
        out,
        r#"<line x1="{mx:.2}" y1="{MARGIN}" x2="{mx:.2}" y2="{}" stroke="black" stroke-dasharray="6 4"/>"#,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{}">median = {med:.3} µs</text>"#,
        mx + 6.0,
        MARGIN + 12.0
    );
    out.push_str("</svg>\n");
    out
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

const BLOCKS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];

/// One-line sparkline of the finite values, resampled to at most `width`
/// columns by taking the minimum of each bucket.
pub fn sparkline(values: &[f64], width: usize) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return String::new();
    }
    let cols = width.min(finite.len()).max(1);
    let buckets: Vec<f64> = (0..cols)
        .map(|c| {
            let (a, b) = (
                c * finite.len() / cols,
                ((c + 1) * finite.len() / cols).max(c * finite.len() / cols + 1),
            );
            finite[a..b].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let lo = buckets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = buckets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    buckets
        .iter()
        .map(|&v| {
            let level = if hi > lo {
                ((v - lo) / (hi - lo) * 7.0).round() as usize
            } else {
                0
            };
            BLOCKS[level.min(7)]
        })
        .collect()
}
