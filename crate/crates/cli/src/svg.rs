//! Self-contained SVG plots for the two experiment modes. No external
//! assets or scripts: every element is emitted inline so the file can be
//! opened directly in a browser.

use crate::experiment::SweepOutcome;
use bgconv::estimator::VariantKind;
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 86.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 58.0;

fn series_color(variant: VariantKind) -> &'static str {
    match variant {
        VariantKind::Gc => "#1f77b4",
        VariantKind::Bgc => "#d62728",
    }
}

/// Maps data coordinates onto the pixel plot box.
struct Mapper {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Mapper {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let span = |vals: &[f64]| -> (f64, f64) {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in vals {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !lo.is_finite() || !hi.is_finite() {
                return (0.0, 1.0);
            }
            if hi - lo < 1e-12 {
                (lo - 1.0, hi + 1.0)
            } else {
                let pad = 0.06 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Mapper { x0, x1, y0, y1 }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn open_document(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="15">{title}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0
    );
}

fn draw_axes(out: &mut String, map: &Mapper, x_label: &str, y_label: &str) {
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let top = MARGIN_TOP;
    let bottom = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = map.x0 + f * (map.x1 - map.x0);
        let yv = map.y0 + f * (map.y1 - map.y0);
        let px = map.sx(xv);
        let py = map.sy(yv);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{bottom}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#,
            bottom + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 20.0,
            format_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{left}" y2="{py:.1}" stroke="black"/>"#,
            left - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 9.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{y_label}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
}

/// Log-log scatter of approximation error against group fraction, with the
/// fitted decay line and its exponent annotated per variant.
pub fn render_scale(outcome: &SweepOutcome) -> String {
    struct Series {
        variant: VariantKind,
        points: Vec<(f64, f64)>,
        fit: Option<(f64, f64, f64, String)>, // slope, centroid x, centroid y, label
    }

    let mut series = Vec::new();
    let mut all_x = Vec::new();
    let mut all_y = Vec::new();
    for report in &outcome.reports {
        let mut points = Vec::new();
        for record in &report.records {
            if record.groups < 2 || record.error <= 0.0 || !record.error.is_finite() {
                continue;
            }
            let x = (1.0 - 1.0 / record.groups as f64).ln();
            let y = record.error.ln();
            points.push((x, y));
            all_x.push(x);
            all_y.push(y);
        }
        let fit = report.slope.as_ref().and_then(|slope| {
            // The least-squares line passes through the centroid of the
            // points it kept, so anchor it there instead of re-deriving
            // the intercept.
            let kept: Vec<(f64, f64)> = slope
                .kept
                .iter()
                .filter_map(|&i| {
                    let record = report.records.get(i)?;
                    if record.groups < 2 || record.error <= 0.0 {
                        return None;
                    }
                    Some((
                        (1.0 - 1.0 / record.groups as f64).ln(),
                        record.error.ln(),
                    ))
                })
                .collect();
            if kept.is_empty() {
                return None;
            }
            let n = kept.len() as f64;
            let cx = kept.iter().map(|p| p.0).sum::<f64>() / n;
            let cy = kept.iter().map(|p| p.1).sum::<f64>() / n;
            let label = format!(
                "{}: slope {:.4}, coefficient {:.3e}",
                report.variant, slope.gamma, slope.coefficient
            );
            Some((slope.gamma, cx, cy, label))
        });
        series.push(Series {
            variant: report.variant,
            points,
            fit,
        });
    }

    let mut out = String::new();
    open_document(&mut out, "approximation error vs group fraction (log-log)");
    if all_x.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no plottable points</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let map = Mapper::new(&all_x, &all_y);
    draw_axes(&mut out, &map, "ln(1 - 1/N)", "ln E");

    let mut legend_y = MARGIN_TOP + 16.0;
    for s in &series {
        let color = series_color(s.variant);
        if let Some((slope, cx, cy, label)) = &s.fit {
            let y_at = |x: f64| cy + slope * (x - cx);
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                map.sx(map.x0),
                map.sy(y_at(map.x0)),
                map.sx(map.x1),
                map.sy(y_at(map.x1))
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{legend_y:.1}" fill="{color}">{label}</text>"#,
                MARGIN_LEFT + 12.0
            );
        } else {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{legend_y:.1}" fill="{color}">{}: no fitted slope</text>"#,
                MARGIN_LEFT + 12.0,
                s.variant
            );
        }
        legend_y += 18.0;
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/>"#,
                map.sx(x),
                map.sy(y)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Normalized bound ratios against group count, with the kernel-density
/// ceiling K/n drawn as a horizontal reference line.
pub fn render_bound(outcome: &SweepOutcome) -> String {
    let mut all_x = Vec::new();
    let mut all_y = vec![outcome.ceiling, 0.0];
    let mut per_variant: Vec<(VariantKind, Vec<(f64, f64)>)> = Vec::new();
    for row in &outcome.rows {
        let Some(ratio) = row.bound_ratio else {
            continue;
        };
        let x = row.groups as f64;
        all_x.push(x);
        all_y.push(ratio);
        match per_variant.iter_mut().find(|(v, _)| *v == row.variant) {
            Some((_, points)) => points.push((x, ratio)),
            None => per_variant.push((row.variant, vec![(x, ratio)])),
        }
    }

    let mut out = String::new();
    open_document(&mut out, "bound ratio vs group count");
    if all_x.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no plottable points</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let map = Mapper::new(&all_x, &all_y);
    draw_axes(&mut out, &map, "N", "rel_E / (1 - 1/N)^p");

    let ceiling_y = map.sy(outcome.ceiling);
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{ceiling_y:.1}" x2="{:.1}" y2="{ceiling_y:.1}" stroke="#555555" stroke-dasharray="3 3"/>"##,
        map.sx(map.x0),
        map.sx(map.x1)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" fill="#555555">K/n = {}</text>"##,
        map.sx(map.x0) + 6.0,
        ceiling_y - 6.0,
        format_tick(outcome.ceiling)
    );

    let mut legend_y = MARGIN_TOP + 16.0;
    for (variant, points) in &per_variant {
        let color = series_color(*variant);
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", map.sx(x), map.sy(y)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in &sorted {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/>"#,
                map.sx(x),
                map.sy(y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{legend_y:.1}" fill="{color}">{variant}</text>"#,
            MARGIN_LEFT + 12.0
        );
        legend_y += 18.0;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::ResultRow;
    use bgconv::estimator::{
        ApproximabilityReport, GroupRecord, RunMeta, SlopeFit, VariantKind,
    };
    use bgconv::sampling::{InputDistribution, WeightInit};
    use bgconv::PaddingMode;

    fn meta() -> RunMeta {
        RunMeta {
            out_channels: 8,
            in_channels: 8,
            kernel_size: 3,
            length: 16,
            s_trials: 2,
            s_inputs: 4,
            distribution: InputDistribution::Normal01,
            init: WeightInit::He,
            padding: PaddingMode::ZeroSame,
            seed: 7,
        }
    }

    fn fabricated_outcome() -> SweepOutcome {
        let records = vec![
            GroupRecord {
                groups: 2,
                error: 10.0,
                rel_error: 0.1,
                bound_ratio: Some(0.2),
                flagged_trials: 0,
            },
            GroupRecord {
                groups: 4,
                error: 20.0,
                rel_error: 0.2,
                bound_ratio: Some(0.3),
                flagged_trials: 0,
            },
        ];
        let slope = SlopeFit {
            gamma: 1.25,
            coefficient: 3.8e-3,
            kept: vec![0, 1],
            excluded: Vec::new(),
        };
        let report = ApproximabilityReport::new(VariantKind::Gc, records, Some(slope), meta())
            .expect("fabricated records satisfy the report invariants");
        let rows = vec![
            ResultRow {
                variant: VariantKind::Gc,
                groups: 2,
                error: 10.0,
                rel_error: 0.1,
                bound_ratio: Some(0.2),
                gamma: Some(1.25),
                runtime_ms: None,
                flagged_trials: 0,
            },
            ResultRow {
                variant: VariantKind::Gc,
                groups: 4,
                error: 20.0,
                rel_error: 0.2,
                bound_ratio: Some(0.3),
                gamma: Some(1.25),
                runtime_ms: None,
                flagged_trials: 0,
            },
        ];
        SweepOutcome {
            rows,
            reports: vec![report],
            warnings: Vec::new(),
            diagnostics: Vec::new(),
            ceiling: 3.0 / 256.0,
        }
    }

    #[test]
    fn scale_plot_contains_points_fit_and_annotation() {
        let svg = render_scale(&fabricated_outcome());
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("stroke-dasharray=\"6 4\""), "fit line missing");
        assert!(svg.contains("gc: slope 1.2500"), "slope annotation missing");
        assert!(svg.contains("ln(1 - 1/N)"));
    }

    #[test]
    fn bound_plot_contains_reference_line() {
        let svg = render_bound(&fabricated_outcome());
        assert!(svg.contains("K/n = "));
        assert!(svg.contains("stroke-dasharray=\"3 3\""));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn empty_outcomes_render_placeholders() {
        let outcome = SweepOutcome {
            rows: Vec::new(),
            reports: Vec::new(),
            warnings: Vec::new(),
            diagnostics: Vec::new(),
            ceiling: 0.01,
        };
        assert!(render_scale(&outcome).contains("no plottable points"));
        assert!(render_bound(&outcome).contains("no plottable points"));
    }
}
