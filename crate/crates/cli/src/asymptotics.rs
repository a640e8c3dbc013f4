use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use conetool_core::solver::fit_tip_exponent;
use conetool_core::ConeError;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::solve::{build_grid, read_snapshot};
use crate::svg;

pub const SLOPE_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub mode: usize,
    pub predicted: f64,
    pub fitted: Option<f64>,
    pub stderr: Option<f64>,
    pub relative_error: Option<f64>,
    /// "ok", "off" (outside the tolerance) or "no signal".
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeTable {
    pub snapshot: String,
    pub window: (f64, f64),
    pub rows: Vec<SlopeRow>,
}

pub fn asymptotics(cfg: &Config, out: &Path) -> CliResult<(SlopeTable, Vec<PathBuf>)> {
    let grid = build_grid(cfg)?;
    let snap = out.join("snapshot_final.csv");
    let u = read_snapshot(&snap, &grid)?;
    let window = cfg.fit_window();
    let mut rows = Vec::new();
    for j in 1..grid.spectrum().n_modes() {
        let predicted = -grid.q_minus()[j];
        let row = match fit_tip_exponent(&grid, &u, j, window) {
            Ok(fit) => {
                let rel = (fit.slope - predicted).abs() / predicted.abs();
                SlopeRow {
                    mode: j,
                    predicted,
                    fitted: Some(fit.slope),
                    stderr: Some(fit.stderr),
                    relative_error: Some(rel),
                    status: if rel <= SLOPE_TOL { "ok" } else { "off" }.into(),
                }
            }
            Err(ConeError::NoSignal { .. }) => SlopeRow {
                mode: j,
                predicted,
                fitted: None,
                stderr: None,
                relative_error: None,
                status: "no signal".into(),
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    let table = SlopeTable {
        snapshot: snap.display().to_string(),
        window,
        rows,
    };

    let mut outputs = Vec::new();
    let csv_path = out.join("asymptotics.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "mode",
        "predicted",
        "fitted",
        "stderr",
        "relative_error",
        "status",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.mode.to_string(),
            r.predicted.to_string(),
            opt(r.fitted),
            opt(r.stderr),
            opt(r.relative_error),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    outputs.push(csv_path);
    let json_path = out.join("asymptotics.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&table)? + "\n")?;
    outputs.push(json_path);

    if cfg.svg {
        let path = out.join("asymptotics.svg");
        let (a, b) = window;
        let mut series = Vec::new();
        for r in table.rows.iter().filter(|r| r.fitted.is_some()) {
            let pts: Vec<(f64, f64)> = grid
                .x()
                .iter()
                .enumerate()
                .filter(|(_, x)| **x >= a && **x <= b)
                .map(|(i, x)| (*x, u.mode_amplitude(&grid, i, r.mode)))
                .collect();
            series.push(svg::Series {
                label: format!(
                    "mode {} (slope {:.4}, predicted {:.4})",
                    r.mode,
                    r.fitted.unwrap(),
                    r.predicted
                ),
                points: pts,
                markers: true,
            });
        }
        if series.is_empty() {
            return Err(CliError::Config(
                "no mode carries signal in the fit window; nothing to plot".into(),
            ));
        }
        svg::chart(&path, "tip asymptotics", "x", "|u_j|", &series, true)?;
        outputs.push(path);
    }
    Ok((table, outputs))
}

pub fn render(table: &SlopeTable) -> String {
    let mut s = format!(
        "fit window [{}, {}]\n{:>4}  {:>10}  {:>10}  {:>10}  {}\n",
        table.window.0, table.window.1, "mode", "predicted", "fitted", "rel.err", "status"
    );
    for r in &table.rows {
        let f =
            |v: Option<f64>, p: usize| v.map(|v| format!("{v:.p$}")).unwrap_or_else(|| "-".into());
        s += &format!(
            "{:>4}  {:>10.6}  {:>10}  {:>10}  {}\n",
            r.mode,
            r.predicted,
            f(r.fitted, 6),
            f(r.relative_error, 4),
            r.status
        );
    }
    s
}
