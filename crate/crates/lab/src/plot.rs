//! Static SVG figures for the co-occurrence curves and the sensitivity sweeps.

use std::path::Path;

use plotters::prelude::*;

use crate::metrics::CooccurrenceCurves;
use crate::{LabError, Result};

fn plot_err(e: impl std::fmt::Display) -> LabError {
    LabError::Plot(e.to_string())
}

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

/// Co-occurrence of each piece with the label in both partition cells, one
/// x position per labelled partition.
pub fn cooccurrence_plot(path: &Path, entries: &[(String, CooccurrenceCurves)]) -> Result<()> {
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = entries.len().max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption("co-occurrence with the label by assistant cell", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(-0.5f64..(n as f64 - 0.5), 0f64..1.05)
        .map_err(plot_err)?;
    let labels: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
    chart
        .configure_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 { labels.get(i as usize).cloned().unwrap_or_default() } else { String::new() }
        })
        .y_desc("P(piece class = label)")
        .draw()
        .map_err(plot_err)?;
    type Pick = fn(&CooccurrenceCurves) -> f64;
    let series: [(&str, Pick); 4] = [
        ("invariant, correct cell", |c| c.positive.invariant),
        ("invariant, incorrect cell", |c| c.negative.invariant),
        ("spurious, correct cell", |c| c.positive.spurious),
        ("spurious, incorrect cell", |c| c.negative.spurious),
    ];
    for (s, (name, pick)) in series.iter().enumerate() {
        let color = COLORS[s];
        let pts: Vec<(f64, f64)> = entries.iter().enumerate().map(|(i, e)| (i as f64, pick(&e.1))).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled()))).map_err(plot_err)?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Accuracy against a swept parameter, one line per series. `log2` spaces
/// the x axis logarithmically.
pub fn sweep_plot(path: &Path, title: &str, x_desc: &str, log2: bool, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let tx = |x: f64| if log2 { x.log2() } else { x };
    let xs: Vec<f64> = series.iter().flat_map(|s| s.1.iter().map(|p| tx(p.0))).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let (lo, hi) = if lo.is_finite() { (lo - 0.5, hi + 0.5) } else { (0.0, 1.0) };
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(lo..hi, 0f64..1.0)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc("test accuracy")
        .x_label_formatter(&|x| if log2 { format!("{}", 2f64.powf(*x)) } else { format!("{x}") })
        .draw()
        .map_err(plot_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (tx(x), y)).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled()))).map_err(plot_err)?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
