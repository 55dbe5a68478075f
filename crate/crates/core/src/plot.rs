//! SVG rendering of open-water charts: K_T, 10·K_Q and η against J on a
//! shared axis.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hydro::OpenWaterCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 30.0, 40.0, 55.0); // left, right, top, bottom

struct Trace {
    label: &'static str,
    color: &'static str,
    dash: &'static str,
    values: Vec<f64>,
}

/// Round `x` up to a "nice" axis limit.
fn nice_ceil(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(x.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= x - 1e-12 {
            return m * mag;
        }
    }
    10.0 * mag
}

/// SVG document for a curve. Only converged points are drawn; K_Q is scaled
/// by 10 as on conventional propeller charts.
pub fn curve_svg(curve: &OpenWaterCurve, title: &str) -> Result<String> {
    let pts: Vec<_> = curve.points.iter().filter(|p| p.converged).collect();
    if pts.len() < 2 {
        return Err(Error::Empty("converged curve points"));
    }
    let js: Vec<f64> = pts.iter().map(|p| p.j).collect();
    let traces = [
        Trace { label: "K_T", color: "#1f77b4", dash: "", values: pts.iter().map(|p| p.kt).collect() },
        Trace { label: "10·K_Q", color: "#d62728", dash: "6 4", values: pts.iter().map(|p| 10.0 * p.kq).collect() },
        Trace { label: "η", color: "#2ca02c", dash: "2 3", values: pts.iter().map(|p| p.eta).collect() },
    ];
    let x_max = nice_ceil(js.iter().cloned().fold(0.0, f64::max));
    let y_max = nice_ceil(traces.iter().flat_map(|t| &t.values).cloned().fold(0.0, f64::max));
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let sx = |x: f64| ml + pw * x / x_max;
    let sy = |y: f64| mt + ph * (1.0 - y.max(0.0) / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        let fy = y_max * i as f64 / 5.0;
        let (x, y) = (sx(fx), sy(fy));
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, mt + ph);
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, ml + pw);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">J</text>"#, ml + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">K_T, 10·K_Q, η</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    for (k, t) in traces.iter().enumerate() {
        let path: Vec<String> = js.iter().zip(&t.values).map(|(&j, &v)| format!("{:.2},{:.2}", sx(j), sy(v))).collect();
        let dash = if t.dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{}""#, t.dash) };
        let _ = writeln!(
            s,
            r#"<polyline class="trace" data-label="{}" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            t.label,
            path.join(" "),
            t.color
        );
        let ly = mt + 16.0 + 18.0 * k as f64;
        let lx = ml + pw - 110.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 28.0,
            t.color,
            lx + 34.0,
            ly + 4.0,
            t.label
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_curve_svg(curve: &OpenWaterCurve, title: &str, path: &Path) -> Result<()> {
    std::fs::write(path, curve_svg(curve, title)?)?;
    Ok(())
}
