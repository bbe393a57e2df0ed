//! Minimal SVG line charts. Plots are a presentation layer over the CSV
//! output and never affect exit codes or data files.

use std::io::Write;
use std::path::Path;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;

pub fn write_line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> std::io::Result<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Ok(());
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    )?;
    writeln!(f, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        f,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{title}</text>"#,
        WIDTH / 2.0
    )?;
    // Axes.
    writeln!(
        f,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    )?;
    writeln!(
        f,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0
    )?;
    writeln!(
        f,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;
    // Tick labels at the extremes.
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        writeln!(
            f,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{x:.3}</text>"#,
            sx(x),
            HEIGHT - MARGIN + 18.0
        )?;
    }
    for y in [y0 + pad, y1 - pad] {
        writeln!(
            f,
            r#"<text x="{}" y="{}" text-anchor="end">{y:.3}</text>"#,
            MARGIN - 6.0,
            sy(y) + 4.0
        )?;
    }
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            f,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            s.color
        )?;
        let ly = MARGIN + 18.0 * i as f64;
        writeln!(
            f,
            r#"<line x1="{x}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 150.0 + 28.0,
            s.color,
            WIDTH - MARGIN - 150.0 + 34.0,
            ly + 4.0,
            s.name,
            x = WIDTH - MARGIN - 150.0,
        )?;
    }
    writeln!(f, "</svg>")?;
    Ok(())
}
