//! Standalone SVG plots: the per-step RMSE curve and the channel
//! correlation heatmap.

use std::fmt::Write as _;

use crate::tensor::Tensor;

use super::StepMetric;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;

/// Line chart of RMSE per prediction step.
pub fn per_step_rmse_svg(per_step: &[StepMetric]) -> String {
    let mut svg = String::new();
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let max_rmse = per_step
        .iter()
        .map(|s| s.rmse)
        .fold(0.0_f64, f64::max)
        .max(1e-9)
        * 1.1;
    let n = per_step.len().max(1);
    let x = |step: usize| {
        if n == 1 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + plot_w * (step - 1) as f64 / (n - 1) as f64
        }
    };
    let y = |rmse: f64| MARGIN_T + plot_h * (1.0 - rmse / max_rmse);

    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // Axes.
    let x0 = MARGIN_L;
    let y0 = MARGIN_T + plot_h;
    let _ = write!(
        svg,
        r#"<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>"#
    );
    let _ = write!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        MARGIN_L + plot_w
    );

    // Horizontal grid and y labels.
    for i in 0..=4 {
        let v = max_rmse * i as f64 / 4.0;
        let yy = y(v);
        let _ = write!(
            svg,
            r##"<line x1="{x0}" y1="{yy}" x2="{}" y2="{yy}" stroke="#ddd"/>"##,
            MARGIN_L + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{v:.1}</text>"#,
            x0 - 6.0,
            yy + 4.0
        );
    }

    // X ticks: at most ~10 labels.
    let tick_every = (n / 10).max(1);
    for s in (1..=n).filter(|s| (s - 1) % tick_every == 0 || *s == n) {
        let xx = x(s);
        let _ = write!(
            svg,
            r#"<line x1="{xx}" y1="{y0}" x2="{xx}" y2="{}" stroke="black"/>"#,
            y0 + 4.0
        );
        let _ = write!(
            svg,
            r#"<text x="{xx}" y="{}" font-size="12" text-anchor="middle">{s}</text>"#,
            y0 + 18.0
        );
    }

    // The curve itself.
    let points: Vec<String> = per_step
        .iter()
        .map(|s| format!("{:.2},{:.2}", x(s.step), y(s.rmse)))
        .collect();
    let _ = write!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        points.join(" ")
    );
    for s in per_step {
        let _ = write!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            x(s.step),
            y(s.rmse)
        );
    }

    // Labels.
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">prediction step</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">RMSE [veh/h]</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    svg.push_str("</svg>");
    svg
}

/// Blue-white-red map of [-1, 1].
fn heat_color(r: f64) -> String {
    let r = r.clamp(-1.0, 1.0);
    let (red, green, blue) = if r >= 0.0 {
        let t = 1.0 - r;
        (255.0, 255.0 * t, 255.0 * t)
    } else {
        let t = 1.0 + r;
        (255.0 * t, 255.0 * t, 255.0)
    };
    format!("rgb({},{},{})", red as u8, green as u8, blue as u8)
}

/// Heatmap of a channel correlation matrix.
pub fn correlation_heatmap_svg(corr: &Tensor, labels: &[String]) -> String {
    let c = corr.rows();
    let cell = (480.0 / c as f64).clamp(3.0, 40.0);
    let grid = cell * c as f64;
    let width = MARGIN_L + grid + 30.0;
    let height = MARGIN_T + grid + MARGIN_B;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = write!(svg, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);

    for i in 0..c {
        for j in 0..c {
            let _ = write!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                MARGIN_L + j as f64 * cell,
                MARGIN_T + i as f64 * cell,
                heat_color(corr.at(i, j))
            );
        }
    }

    // Sparse tick labels so large matrices stay readable.
    let tick_every = (c / 12).max(1);
    for i in (0..c).step_by(tick_every) {
        let label = labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{label}</text>"#,
            MARGIN_L - 4.0,
            MARGIN_T + (i as f64 + 0.7) * cell
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" transform="rotate(-90 {:.2} {:.2})">{label}</text>"#,
            MARGIN_L + (i as f64 + 0.7) * cell,
            MARGIN_T + grid + 6.0,
            MARGIN_L + (i as f64 + 0.7) * cell,
            MARGIN_T + grid + 6.0
        );
    }

    let _ = write!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">channel correlation (blue -1, white 0, red +1)</text>"#,
        MARGIN_L + grid / 2.0,
        height - 12.0
    );
    svg.push_str("</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_curve_contains_all_points() {
        let per_step: Vec<StepMetric> = (1..=5)
            .map(|s| StepMetric {
                step: s,
                rmse: 10.0 + s as f64,
                r2: 0.8,
            })
            .collect();
        let svg = per_step_rmse_svg(&per_step);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 5);
    }

    #[test]
    fn heatmap_has_one_cell_per_pair() {
        let corr = Tensor::matrix(3, 3, vec![1.0, 0.5, -0.5, 0.5, 1.0, 0.0, -0.5, 0.0, 1.0]).unwrap();
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let svg = correlation_heatmap_svg(&corr, &labels);
        // 9 cells + 1 background rect.
        assert_eq!(svg.matches("<rect").count(), 10);
    }

    #[test]
    fn heat_color_endpoints() {
        assert_eq!(heat_color(1.0), "rgb(255,0,0)");
        assert_eq!(heat_color(-1.0), "rgb(0,0,255)");
        assert_eq!(heat_color(0.0), "rgb(255,255,255)");
    }
}
