//! Minimal SVG line plots.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: &'a str,
    pub colour: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Polyline plot with labeled axes; `log` uses base-10 logarithms on both axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log: bool) -> String {
    let (w, h, m) = (640.0, 420.0, 70.0);
    let tr = |v: f64| if log { v.log10() } else { v };
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().map(|&(x, y)| (tr(x), tr(y)))).collect();
    let range = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = pts.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let tick = |v: f64| if log { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.3}") };

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{title}</text>"#, w / 2.0).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m).unwrap();
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        writeln!(s, r#"<text x="{:.2}" y="{}" font-size="10" text-anchor="{anchor}">{}</text>"#, px(v), h - m + 14.0, tick(v)).unwrap();
    }
    for v in [y0, y1] {
        writeln!(s, r#"<text x="{}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, m - 4.0, py(v) + 4.0, tick(v)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{xlabel}</text>"#, w / 2.0, h - 20.0).unwrap();
    writeln!(s, r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#, h / 2.0, h / 2.0)
        .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let poly: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(tr(x)), py(tr(y)))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, ser.colour, poly.join(" ")).unwrap();
        for &(x, y) in &ser.points {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, px(tr(x)), py(tr(y)), ser.colour).unwrap();
        }
        let ly = m + 16.0 * i as f64;
        writeln!(s, r#"<text x="{}" y="{ly}" font-size="11" fill="{}" text-anchor="end">{}</text>"#, w - m, ser.colour, ser.label).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
