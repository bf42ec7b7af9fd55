//! Standalone SVG loss curves.

use std::fmt::Write;

use crate::model::LossRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Polylines of `l_opp`, `l_same` and `l_total` against the iteration.
pub fn loss_svg(history: &[LossRecord]) -> String {
    let series: [(&str, &str, fn(&LossRecord) -> f64); 3] = [
        ("l_opp", "#d62728", |r| r.loss.l_opp),
        ("l_same", "#1f77b4", |r| r.loss.l_same),
        ("l_total", "#222222", |r| r.loss.l_total),
    ];
    let last_iter = history.last().map(|r| r.iteration).unwrap_or(0).max(1) as f64;
    let y_max = history
        .iter()
        .map(|r| r.loss.l_total)
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(1e-12);
    let (plot_w, plot_h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let x = |it: usize| MARGIN + plot_w * it as f64 / last_iter;
    let y = |v: f64| HEIGHT - MARGIN - plot_h * (v / y_max).clamp(0.0, 1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN} {MARGIN} V{} H{}" fill="none" stroke="black"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">iteration</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{last_iter}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{y_max:.3}</text>"#, MARGIN - 4.0, MARGIN + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">0</text>"#, MARGIN - 4.0, HEIGHT - MARGIN + 4.0);
    for (k, (name, color, f)) in series.iter().enumerate() {
        let points: Vec<String> = history
            .iter()
            .filter(|r| f(r).is_finite())
            .map(|r| format!("{:.2},{:.2}", x(r.iteration), y(f(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 60.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossBreakdown;

    #[test]
    fn one_polyline_per_series() {
        let h: Vec<LossRecord> = (0..5)
            .map(|i| LossRecord {
                iteration: i,
                sigma_multiplier: 1.0,
                loss: LossBreakdown::new(0.7 - 0.1 * i as f64, 0.1),
            })
            .collect();
        let svg = loss_svg(&h);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
