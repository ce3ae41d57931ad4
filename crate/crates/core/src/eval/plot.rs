use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{CassError, Result};
use crate::trainer::EpochLog;

use super::{CrossAnalysisRecord, FAKE_THRESHOLD};

const SIZE: (u32, u32) = (800, 480);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// One training run to overlay on the error-curve panels.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    pub logs: Vec<EpochLog>,
}

fn plot_err<E: std::fmt::Display>(e: E) -> CassError {
    CassError::Plot(e.to_string())
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

type Curve = Vec<(f64, f64)>;

/// `(epoch, log10 test error)` points of component `i`.
fn curve(series: &CurveSeries, i: usize) -> Result<Curve> {
    let mut pts = Vec::new();
    for log in &series.logs {
        let Some(err) = log.components.get(i).and_then(|c| c.test_l2) else {
            continue;
        };
        if !(err > 0.0 && err.is_finite()) {
            return Err(CassError::Domain(format!(
                "cannot take the log of test error {err} ({}, epoch {})",
                series.label, log.epoch
            )));
        }
        pts.push(((log.epoch + 1) as f64, err.log10()));
    }
    Ok(pts)
}

fn draw_panel(path: &Path, title: &str, curves: &[(String, Curve)], x_from: f64) -> Result<()> {
    let visible: Vec<(&String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|(l, c)| (l, c.iter().copied().filter(|p| p.0 >= x_from).collect()))
        .collect();
    let pts = || visible.iter().flat_map(|(_, c)| c.iter());
    let x_max = pts().map(|p| p.0).fold(x_from + 1.0, f64::max);
    let (mut y_lo, mut y_hi) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 0.0);
    }
    let pad = ((y_hi - y_lo) * 0.05).max(1e-3);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x_from..x_max, (y_lo - pad)..(y_hi + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("log10 test error")
        .draw()
        .map_err(plot_err)?;
    for (n, (label, c)) in visible.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(c.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Per component, a full-length panel and a panel zoomed on the last
/// `last_k` epochs, overlaying every series. Returns the written files.
pub fn plot_error_curves(
    series: &[CurveSeries],
    component_names: &[String],
    out_dir: &Path,
    last_k: usize,
) -> Result<Vec<PathBuf>> {
    if series.is_empty() || series.iter().all(|s| s.logs.is_empty()) {
        return Err(CassError::arg("no epoch logs to plot"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CassError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (i, name) in component_names.iter().enumerate() {
        let curves: Vec<(String, Curve)> = series
            .iter()
            .map(|s| curve(s, i).map(|c| (s.label.clone(), c)))
            .collect::<Result<_>>()?;
        let epochs = series.iter().map(|s| s.logs.len()).max().unwrap_or(0);
        let full = out_dir.join(format!("curves_{}.svg", slug(name)));
        draw_panel(&full, &format!("{name}: test error"), &curves, 1.0)?;
        written.push(full);
        let from = epochs.saturating_sub(last_k) + 1;
        let zoom = out_dir.join(format!("curves_{}_last{}.svg", slug(name), last_k));
        draw_panel(&zoom, &format!("{name}: last {last_k} epochs"), &curves, from as f64)?;
        written.push(zoom);
    }
    Ok(written)
}

/// One scatter plot of outputs against sample index per record.
pub fn plot_discriminator_outputs(
    records: &[CrossAnalysisRecord],
    component_names: &[String],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(CassError::arg("no cross-analysis records to plot"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CassError::io(out_dir, e))?;
    let name = |i: usize| component_names.get(i).cloned().unwrap_or_else(|| format!("component{i}"));
    let mut written = Vec::new();
    for r in records {
        let path = out_dir.join(format!("disc_{}_to_{}.svg", slug(&name(r.source)), slug(&name(r.judge))));
        let root = SVGBackend::new(&path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let n = r.outputs.len().max(1) as f64;
        let mut chart = ChartBuilder::on(&root)
            .caption(
                format!(
                    "{} discriminator on {} reconstructions ({:.0}% judged fake)",
                    name(r.judge),
                    name(r.source),
                    100.0 * r.fraction_fake
                ),
                ("sans-serif", 18),
            )
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..n, 0.0..1.0)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("sample")
            .y_desc("discriminator output")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new([(0.0, FAKE_THRESHOLD), (n, FAKE_THRESHOLD)], BLACK.mix(0.4)))
            .map_err(plot_err)?;
        chart
            .draw_series(
                r.outputs
                    .iter()
                    .enumerate()
                    .map(|(s, &p)| Circle::new((s as f64, p), 3, PALETTE[0].filled())),
            )
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
        drop(chart);
        drop(root);
        written.push(path);
    }
    Ok(written)
}
