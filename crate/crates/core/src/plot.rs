//! Plot-ready exports: a long-format CSV and a minimal SVG line chart.

use std::fmt::Write as _;
use std::io::Write;

use crate::bands::ConfidenceBand;
use crate::model::MonotoneCurve;

/// A named curve sampled at points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn from_curve(name: &str, curve: &MonotoneCurve, xs: &[f64]) -> Self {
        Series { name: name.to_string(), points: xs.iter().map(|&x| (x, curve.eval(x))).collect() }
    }
}

/// Curves evaluated on the union of their knots, plus the band envelopes.
pub fn collect_series(curves: &[(&str, &MonotoneCurve)], band: Option<&ConfidenceBand>) -> Vec<Series> {
    let mut xs: Vec<f64> = curves.iter().flat_map(|(_, c)| c.knots().iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out: Vec<Series> = curves.iter().map(|(n, c)| Series::from_curve(n, c, &xs)).collect();
    if let Some(b) = band.filter(|b| !b.knots.is_empty()) {
        let pts = |v: &[f64]| b.knots.iter().copied().zip(v.iter().copied()).collect();
        out.push(Series { name: "band_lower".into(), points: pts(&b.lower) });
        out.push(Series { name: "band_upper".into(), points: pts(&b.upper) });
    }
    out
}

/// Long-format CSV with columns `x, series, value`.
pub fn write_long_csv<W: Write>(series: &[Series], header: &[(String, String)], mut out: W) -> std::io::Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "x,series,value")?;
    for s in series {
        for &(x, y) in &s.points {
            writeln!(out, "{x},{},{y}", s.name)?;
        }
    }
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

/// Static SVG with axes, a legend and one polyline per series. The y axis
/// spans [0, 1]; the x axis spans the data.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let (w, h, m) = (640.0, 420.0, 50.0);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(|x| x.is_finite());
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() || !x1.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - y.clamp(0.0, 1.0) * (h - 2.0 * m);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = h - m,
        r = w - m
    );
    for i in 0..=4 {
        let y = i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y}</text>"#, m - 6.0, py(y) + 3.0);
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{x:.3}</text>"#, px(x), h - m + 16.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let dash = if s.name.starts_with("band") { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(svg, r#"<polyline points="{}" stroke="{color}" fill="none"{dash}/>"#, pts.join(" "));
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}"/>"#, w - m - 110.0, w - m - 90.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, w - m - 85.0, ly + 3.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CurveKind;

    #[test]
    fn series_counts() {
        let a = MonotoneCurve::new(vec![0.0, 1.0], vec![0.0, 1.0], CurveKind::Linear).unwrap();
        let b = MonotoneCurve::new(vec![0.0, 2.0], vec![0.0, 1.0], CurveKind::Linear).unwrap();
        let band = crate::bands::envelope(&[a.clone(), b.clone()], 0.1).unwrap();
        assert_eq!(collect_series(&[("init", &a), ("mle", &b)], Some(&band)).len(), 4);
        assert_eq!(collect_series(&[("init", &a), ("mle", &b)], None).len(), 2);
    }

    #[test]
    fn svg_coordinates_are_finite_and_in_frame() {
        let s = vec![Series { name: "a".into(), points: vec![(0.0, 0.0), (5.0, 0.5), (9.0, 1.0)] }];
        let svg = render_svg(&s, "t");
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let inner = poly.split('"').nth(1).unwrap();
        for pair in inner.split(' ') {
            let (x, y) = pair.split_once(',').unwrap();
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!(x.is_finite() && y.is_finite());
            assert!((0.0..=640.0).contains(&x) && (0.0..=420.0).contains(&y));
        }
    }
}
