//! Return-versus-step curve as a standalone SVG document.

use std::fmt::Write as _;

use gac_core::trainer::LogRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Mean test return with a ±1 standard error band against step. Rows with a
/// non-finite return are skipped.
pub fn render_svg(rows: &[LogRow]) -> String {
    let pts: Vec<&LogRow> = rows.iter().filter(|r| r.test_return_mean.is_finite()).collect();
    let band = |r: &LogRow| if r.test_return_stderr.is_finite() { r.test_return_stderr } else { 0.0 };
    let (x0, x1) = axis_range(pts.iter().map(|r| r.step as f64));
    let (y0, y1) = axis_range(pts.iter().flat_map(|r| [r.test_return_mean - band(r), r.test_return_mean + band(r)]));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(w, r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let bottom = MARGIN_TOP + plot_h;
        writeln!(w, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0).unwrap();
        writeln!(w, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 20.0, label(xv)).unwrap();
        writeln!(w, r#"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_LEFT}" y2="{py:.2}" stroke="black"/>"#, MARGIN_LEFT - 5.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 8.0, py + 4.0, label(yv)).unwrap();
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 8.0).unwrap();
    writeln!(w, r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">test return</text>"#, MARGIN_TOP + plot_h / 2.0).unwrap();
    if !pts.is_empty() {
        let upper: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.test_return_mean + band(r)))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.test_return_mean - band(r)))).collect();
        writeln!(w, r#"<polygon points="{} {}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, upper.join(" "), lower.join(" ")).unwrap();
        let line: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.test_return_mean))).collect();
        writeln!(w, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, line.join(" ")).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, ret: f64) -> LogRow {
        LogRow {
            step,
            test_return_mean: ret,
            test_return_stderr: 1.0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            eta: 0.0,
            omega: 0.0,
            kl_realized: 0.0,
            entropy: 0.0,
            kappa: 0.0,
        }
    }

    #[test]
    fn document_is_complete() {
        let svg = render_svg(&[row(0, -1200.0), row(5000, -600.0), row(10000, f64::NAN), row(15000, -200.0)]);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 3);
    }

    #[test]
    fn degenerate_inputs_still_render() {
        assert!(render_svg(&[]).contains("</svg>"));
        assert!(render_svg(&[row(0, 3.0)]).contains("<polyline"));
    }
}
