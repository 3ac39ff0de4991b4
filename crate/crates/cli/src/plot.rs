//! Minimal SVG line chart of skew against time.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Renders `(time_ns, skew_ps)` points. Gaps (stalled cycles) break the line.
pub fn skew_svg(title: &str, points: &[(f64, Option<f64>)]) -> String {
    let present: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(t, s)| s.map(|s| (t, s)))
        .collect();
    let (t0, t1) = bounds(points.iter().map(|p| p.0));
    let (s0, s1) = bounds(present.iter().map(|p| p.1).chain([0.0]));
    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let y = |s: f64| HEIGHT - MARGIN - (s - s0) / (s1 - s0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (ax0, ax1) = (MARGIN, WIDTH - MARGIN);
    let _ = writeln!(
        svg,
        r#"<line x1="{ax0}" y1="{z:.2}" x2="{ax1}" y2="{z:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        z = y(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ax0}" y1="{}" x2="{ax0}" y2="{}" stroke="black"/>"#,
        MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ax0}" y1="{b}" x2="{ax1}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN
    );
    for (value, yy) in [(s1, y(s1)), (s0, y(s0))] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{yy:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{value:.1}</text>"#,
            MARGIN - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">time (ns), {t0:.2} to {t1:.2}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {})" text-anchor="middle">skew (ps)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let mut segment: Vec<String> = Vec::new();
    let flush = |seg: &mut Vec<String>, svg: &mut String| {
        if seg.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
                seg.join(" ")
            );
        }
        seg.clear();
    };
    for &(t, s) in points {
        match s {
            Some(s) => segment.push(format!("{:.2},{:.2}", x(t), y(s))),
            None => flush(&mut segment, &mut svg),
        }
    }
    flush(&mut segment, &mut svg);
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
