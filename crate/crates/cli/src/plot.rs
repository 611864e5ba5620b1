//! Self-contained SVG violin plots of per-replication estimates.

use std::fmt::Write as _;

use trainloop::{Method, Metric, ReplicationResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const GRID: usize = 64;
const PALETTE: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Gaussian kernel density with Silverman's bandwidth, evaluated on `grid`.
pub fn kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return vec![0.0; grid.len()];
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let spread = grid.last().unwrap_or(&1.0) - grid.first().unwrap_or(&0.0);
    let mut h = 1.06 * var.sqrt() * n.powf(-0.2);
    if h.is_nan() || h <= 0.0 {
        h = (spread / 50.0).max(1e-12);
    }
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|g| {
            samples
                .iter()
                .map(|x| (-0.5 * ((g - x) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Violin plot of the `metric` estimates of every method in `results`, with
/// a dashed reference line at `reference` (the ground-truth effect).
pub fn violin_svg(metric: Metric, results: &[ReplicationResult], reference: f64) -> String {
    let mut methods: Vec<Method> = results.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let samples: Vec<Vec<f64>> = methods
        .iter()
        .map(|&m| {
            results
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.metric(metric).estimate)
                .filter(|x| x.is_finite())
                .collect()
        })
        .collect();

    let mut lo = reference;
    let mut hi = reference;
    for x in samples.iter().flatten() {
        lo = lo.min(*x);
        hi = hi.max(*x);
    }
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.08 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let y = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;
    let slot = plot_w / methods.len().max(1) as f64;
    let half_width = 0.4 * slot;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Treatment effect: {}</text>"#,
        WIDTH / 2.0,
        escape(metric.title())
    );
    let _ = writeln!(
        svg,
        r##"<g class="axes" stroke="#333"><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/></g>"##,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM,
        r = WIDTH - MARGIN_RIGHT
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y(v) + 4.0,
            escape(&format!("{v:.3}"))
        );
    }

    for (i, (method, xs)) in methods.iter().zip(&samples).enumerate() {
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<g class="method" data-method="{}">"#, method.name());
        if xs.len() >= 2 {
            let (a, b) = xs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            let ext = 0.1 * (b - a).max(1e-9);
            let grid: Vec<f64> = (0..GRID)
                .map(|k| a - ext + (b - a + 2.0 * ext) * k as f64 / (GRID - 1) as f64)
                .collect();
            let density = kde(xs, &grid);
            let peak = density.iter().cloned().fold(0.0, f64::max).max(1e-300);
            let mut points = Vec::with_capacity(2 * GRID);
            for (g, d) in grid.iter().zip(&density) {
                points.push(format!("{:.2},{:.2}", cx + half_width * d / peak, y(*g)));
            }
            for (g, d) in grid.iter().zip(&density).rev() {
                points.push(format!("{:.2},{:.2}", cx - half_width * d / peak, y(*g)));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                points.join(" ")
            );
        }
        for x in xs {
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, y(*x));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 18.0,
            escape(method.title())
        );
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r#"<line class="reference" x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        MARGIN_LEFT,
        WIDTH - MARGIN_RIGHT,
        y = y(reference)
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kde_integrates_to_about_one() {
        let xs = [0.0, 0.3, 0.5, 1.2, -0.4];
        let grid: Vec<f64> = (0..2001).map(|k| -5.0 + 10.0 * k as f64 / 2000.0).collect();
        let d = kde(&xs, &grid);
        let integral: f64 = d.iter().sum::<f64>() * 10.0 / 2000.0;
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn kde_of_constant_samples_is_finite() {
        let d = kde(&[2.0, 2.0, 2.0], &[1.9, 2.0, 2.1]);
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(d[1] > d[0]);
    }
}
