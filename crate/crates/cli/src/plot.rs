//! SVG figures. Presentation only: every plotted number is also in a CSV.

use std::path::Path;

use lsldg_core::estimator::Gamma;
use plotters::prelude::*;

use crate::error::{CliError, CliResult};
use crate::experiment::{RelativeRow, SummaryRow};

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("plotting: {e}"))
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(1e-3);
    (lo - pad, hi + pad)
}

/// Mean relative score (± one standard error) against the `γ` grid, one line per `d`.
/// The `γ` axis is categorical since it holds both `0` and `∞`.
pub fn relative_scores(rows: &[RelativeRow], gammas: &[Gamma], path: &Path) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (lo, hi) = y_range(rows.iter().flat_map(|r| {
        let m = r.mean.unwrap_or(0.0);
        let s = r.se.unwrap_or(0.0);
        [m - s, m + s]
    }));
    let labels: Vec<String> = gammas.iter().map(|g| g.to_string()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption("relative test score vs gamma", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5f64..(gammas.len() as f64 - 0.5), lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("gamma")
        .y_desc("score minus gamma = 0 score")
        .x_labels(gammas.len())
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                labels.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .draw()
        .map_err(plot_err)?;

    let mut dims: Vec<usize> = rows.iter().map(|r| r.d).collect();
    dims.dedup();
    for (c, d) in dims.into_iter().enumerate() {
        let color = Palette99::pick(c).to_rgba();
        let pts: Vec<(f64, f64, f64)> = gammas
            .iter()
            .enumerate()
            .filter_map(|(i, g)| {
                rows.iter()
                    .find(|r| r.d == d && r.gamma == *g)
                    .and_then(|r| r.mean.map(|m| (i as f64, m, r.se.unwrap_or(0.0))))
            })
            .collect();
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("d = {d}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.iter().map(|p| Circle::new((p.0, p.1), 3, color.filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(pts.iter().map(|p| PathElement::new(vec![(p.0, p.1 - p.2), (p.0, p.1 + p.2)], color)))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Mean ARI against dimensionality, one line per method.
pub fn ari_by_dimension(summary: &[SummaryRow], path: &Path) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (dmin, dmax) = summary
        .iter()
        .fold((usize::MAX, 0), |(l, h), s| (l.min(s.d), h.max(s.d)));
    let (dmin, dmax) = if dmin > dmax { (0, 1) } else { (dmin, dmax.max(dmin + 1)) };
    let mut chart = ChartBuilder::on(&root)
        .caption("adjusted Rand index vs dimension", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(dmin as f64 - 0.5..dmax as f64 + 0.5, -0.1f64..1.05)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("d")
        .y_desc("mean ARI")
        .draw()
        .map_err(plot_err)?;
    let mut methods: Vec<&str> = Vec::new();
    for s in summary {
        if !methods.contains(&s.method.as_str()) {
            methods.push(&s.method);
        }
    }
    for (c, m) in methods.into_iter().enumerate() {
        let color = Palette99::pick(c).to_rgba();
        let pts: Vec<(f64, f64)> = summary
            .iter()
            .filter(|s| s.method == m)
            .filter_map(|s| s.mean.map(|v| (s.d as f64, v)))
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(m.to_string())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
