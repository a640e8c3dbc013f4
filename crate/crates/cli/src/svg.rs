use std::path::Path;

use plotters::prelude::*;

use crate::error::{CliError, CliResult};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a line.
    pub markers: bool,
}

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        0.5 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

/// Line chart; with `log_log` both axes show `log10` of the data.
pub fn chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_log: bool,
) -> CliResult<()> {
    let map = |(x, y): (f64, f64)| {
        if log_log {
            (x.log10(), y.log10())
        } else {
            (x, y)
        }
    };
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .copied()
                .map(map)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let xr = bounds(mapped.iter().flatten().map(|p| p.0));
    let yr = bounds(mapped.iter().flatten().map(|p| p.1));
    let (xl, yl) = if log_log {
        (format!("log10 {x_label}"), format!("log10 {y_label}"))
    } else {
        (x_label.to_string(), y_label.to_string())
    };
    let draw = || -> Result<(), Box<dyn std::error::Error>> {
        let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut ctx = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)?;
        ctx.configure_mesh()
            .x_desc(xl.as_str())
            .y_desc(yl.as_str())
            .draw()?;
        for (k, (s, pts)) in series.iter().zip(&mapped).enumerate() {
            let color = COLORS[k % COLORS.len()];
            if s.markers {
                ctx.draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled())))?
                    .label(s.label.as_str())
                    .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
            } else {
                ctx.draw_series(LineSeries::new(pts.iter().copied(), &color))?
                    .label(s.label.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            }
        }
        ctx.configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
        Ok(())
    };
    draw().map_err(|e| CliError::Config(format!("svg {}: {e}", path.display())))
}
