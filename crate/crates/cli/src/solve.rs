use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use conetool_core::mellin::MellinSymbol;
use conetool_core::solver::{
    energy_phi, fit_tip_exponent, mass, ConeField, ConeGrid, Equation, RadialOperator, Solver,
    SolverConfig, Trajectory,
};
use conetool_core::spectrum::CrossSectionSpectrum;
use conetool_core::weights::{gamma_window, pq_feasible};

use crate::analyze::{choose_weight, feasibility_mode};
use crate::config::{Config, Initial};
use crate::error::{CliError, CliResult};
use crate::svg;

pub fn build_grid(cfg: &Config) -> CliResult<ConeGrid> {
    let spectrum = CrossSectionSpectrum::build(cfg.kind.clone(), cfg.solver_modes)?;
    Ok(ConeGrid::new(spectrum, cfg.x_min, cfg.n_x)?)
}

pub fn equation(cfg: &Config, grid: &ConeGrid) -> Equation {
    cfg.equation().unwrap_or_else(|| Equation::Yamabe {
        curvature: ConeField::constant(grid, cfg.curvature),
    })
}

/// Checks the `(p, q)` conditions of the configured equation.
/// Returns the violated inequalities, empty when feasible or not applicable.
pub fn feasibility_gate(cfg: &Config) -> CliResult<Vec<String>> {
    let Some(mode) = feasibility_mode(cfg) else {
        return Ok(Vec::new());
    };
    let spectrum = CrossSectionSpectrum::build(cfg.kind.clone(), cfg.analysis_modes())?;
    let window = gamma_window(&MellinSymbol::laplacian(&spectrum), cfg.gamma_rule)?;
    let (weight, source) = choose_weight(cfg, &window);
    let weight =
        weight.ok_or_else(|| CliError::Config(format!("no weight available: {source}")))?;
    let f = pq_feasible(&weight, mode);
    Ok(f.violated()
        .iter()
        .map(|i| {
            format!(
                "{} (lhs {}, rhs {}) at n = {}, gamma = {}, p = {}, q = {}",
                i.statement, i.lhs, i.rhs, weight.n, weight.gamma, weight.p, weight.q
            )
        })
        .collect())
}

pub fn initial_state(cfg: &Config, grid: &ConeGrid, seed: u64) -> CliResult<ConeField> {
    let spectrum = grid.spectrum();
    // coefficient of the normalized constant eigenfunction for a unit value
    let unit = spectrum.volume().sqrt();
    let level = cfg.u0_level * unit;
    let amp = cfg.u0_amplitude;
    let mut u = match cfg.initial {
        Initial::Constant => ConeField::from_modes(grid, |_, b| if b == 0 { level } else { 0.0 }),
        Initial::Cosine => ConeField::from_modes(grid, |x, b| {
            if b == 0 {
                level + amp * unit * (PI * x).cos()
            } else {
                0.0
            }
        }),
        Initial::Tip => {
            let mut starts = Vec::new();
            for &j in &cfg.tip_modes {
                if j == 0 || j >= spectrum.n_modes() {
                    return Err(CliError::Config(format!(
                        "tip_modes: mode {j} is not in 1..{}",
                        spectrum.n_modes()
                    )));
                }
                starts.push(spectrum.basis_range(j).start);
            }
            ConeField::from_modes(grid, |x, b| {
                if b == 0 {
                    level
                } else if starts.contains(&b) {
                    amp * (-1.0 / x).exp()
                } else {
                    0.0
                }
            })
        }
        Initial::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let active = grid.basis_len().min(6);
            let coeffs: Vec<[f64; 3]> = (0..active)
                .map(|_| {
                    std::array::from_fn(|k| rng.gen_range(-1.0..1.0) / ((k + 1) * (k + 1)) as f64)
                })
                .collect();
            ConeField::from_modes(grid, |x, b| {
                let Some(a) = coeffs.get(b) else { return 0.0 };
                let wave: f64 = (0..3).map(|k| a[k] * ((k + 1) as f64 * PI * x).cos()).sum();
                if b == 0 {
                    level + amp * unit * wave
                } else {
                    amp * x * x * wave
                }
            })
        }
    };
    if cfg.u0_mean_zero {
        let e0 = 1.0 / unit;
        let shift = mass(grid, &u) / grid.volume() / e0;
        u.coeffs.column_mut(0).add_scalar_mut(-shift);
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy_phi: f64,
    pub min: f64,
    pub max: f64,
    /// Fitted tip slope per mode `1..`, `None` without signal.
    pub slopes: Vec<Option<f64>>,
}

pub fn diagnostics(
    cfg: &Config,
    grid: &ConeGrid,
    ops: &[RadialOperator],
    t: f64,
    u: &ConeField,
) -> Diagnostics {
    let e = u.extremes(grid);
    let window = cfg.fit_window();
    Diagnostics {
        t,
        mass: mass(grid, u),
        energy_phi: energy_phi(grid, u, ops).unwrap_or(f64::NAN),
        min: e.min,
        max: e.max,
        slopes: (1..grid.spectrum().n_modes())
            .map(|j| fit_tip_exponent(grid, u, j, window).ok().map(|f| f.slope))
            .collect(),
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

pub fn write_trajectory(path: &Path, modes: usize, rows: &[Diagnostics]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["t", "mass", "energy_phi", "min", "max"]
        .map(String::from)
        .to_vec();
    header.extend((1..modes).map(|j| format!("slope_mode_{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            fmt(r.t),
            fmt(r.mass),
            fmt(r.energy_phi),
            fmt(r.min),
            fmt(r.max),
        ];
        rec.extend(
            r.slopes
                .iter()
                .map(|s| s.map(fmt).unwrap_or_else(|| "nan".into())),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `tau, x, mode_0.., coef_0..`: mode amplitudes, then the raw basis coefficients.
pub fn write_snapshot(path: &Path, grid: &ConeGrid, u: &ConeField) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let modes = grid.spectrum().n_modes();
    let mut header: Vec<String> = vec!["tau".into(), "x".into()];
    header.extend((0..modes).map(|j| format!("mode_{j}")));
    header.extend((0..grid.basis_len()).map(|b| format!("coef_{b}")));
    w.write_record(&header)?;
    for i in 0..grid.n_x() {
        let mut rec = vec![fmt(grid.tau()[i]), fmt(grid.x()[i])];
        rec.extend((0..modes).map(|j| fmt(u.mode_amplitude(grid, i, j))));
        rec.extend((0..grid.basis_len()).map(|b| fmt(u.coeffs[(i, b)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path, grid: &ConeGrid) -> CliResult<ConeField> {
    let mut r = csv::Reader::from_path(path).map_err(|e| {
        CliError::Config(format!(
            "missing snapshot {}: {e}; run solve first",
            path.display()
        ))
    })?;
    let headers = r.headers()?.clone();
    let first_coef = headers
        .iter()
        .position(|h| h == "coef_0")
        .ok_or_else(|| CliError::Config(format!("{}: no coefficient columns", path.display())))?;
    let mut u = ConeField::zeros(grid);
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= grid.n_x() || rec.len() - first_coef != grid.basis_len() {
            return Err(CliError::Config(format!(
                "{} does not match the configured grid ({} nodes, {} basis vectors)",
                path.display(),
                grid.n_x(),
                grid.basis_len()
            )));
        }
        for b in 0..grid.basis_len() {
            u.coeffs[(i, b)] = rec[first_coef + b].parse().map_err(|_| {
                CliError::Config(format!("{}: bad number on row {}", path.display(), i + 2))
            })?;
        }
        rows += 1;
    }
    if rows != grid.n_x() {
        return Err(CliError::Config(format!(
            "{} has {rows} rows, the configured grid has {} nodes",
            path.display(),
            grid.n_x()
        )));
    }
    Ok(u)
}

pub struct SolveOutcome {
    pub outputs: Vec<PathBuf>,
    pub details: Vec<String>,
}

pub fn solve(
    cfg: &Config,
    out: &Path,
    force: bool,
    save_every: usize,
    seed: u64,
) -> CliResult<SolveOutcome> {
    let violated = feasibility_gate(cfg)?;
    let mut details = Vec::new();
    if !violated.is_empty() {
        let list = violated.join("; ");
        if !force {
            return Err(CliError::Config(format!(
                "infeasible (p, q): violated {list}"
            )));
        }
        details.push(format!("forced past infeasible (p, q): violated {list}"));
    }
    let grid = build_grid(cfg)?;
    let eq = equation(cfg, &grid);
    let conservative = !matches!(eq, Equation::Yamabe { .. });
    let sc = SolverConfig::new(eq, cfg.dt, cfg.t_end)
        .with_bc(cfg.bc_inner)
        .with_linearization(cfg.linearization);
    let solver = Solver::new(&grid, sc)?;
    let u0 = initial_state(cfg, &grid, seed)?;

    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let snap0 = out.join("snapshot_initial.csv");
    write_snapshot(&snap0, &grid, &u0)?;
    outputs.push(snap0);

    let traj: Trajectory = solver.run(&u0, save_every)?;
    let rows: Vec<Diagnostics> = traj
        .times
        .par_iter()
        .zip(traj.fields.par_iter())
        .map(|(t, u)| diagnostics(cfg, &grid, solver.operators(), *t, u))
        .collect();

    let modes = grid.spectrum().n_modes();
    let csv_path = out.join("trajectory.csv");
    write_trajectory(&csv_path, modes, &rows)?;
    outputs.push(csv_path);
    let snap = out.join("snapshot_final.csv");
    write_snapshot(&snap, &grid, traj.last())?;
    outputs.push(snap);

    let m0 = rows[0].mass;
    let drift = rows
        .iter()
        .map(|r| (r.mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if conservative {
        details.push(format!("max relative mass drift {drift:e}"));
    }
    if matches!(cfg.equation_name.as_str(), "cahn_hilliard") {
        let monotone = rows
            .windows(2)
            .all(|w| w[1].energy_phi <= w[0].energy_phi + 1e-8);
        details.push(format!("energy_phi nonincreasing: {monotone}"));
    }
    let last = rows.last().expect("initial row");
    details.push(format!(
        "final t = {}, min {}, max {}",
        last.t, last.min, last.max
    ));

    if cfg.svg {
        let path = out.join("trajectory.svg");
        let pick = |label: &str, f: fn(&Diagnostics) -> f64| svg::Series {
            label: label.into(),
            points: rows.iter().map(|r| (r.t, f(r))).collect(),
            markers: false,
        };
        svg::chart(
            &path,
            &format!("{} on the cone", cfg.equation_name),
            "t",
            "value",
            &[
                pick("min", |r| r.min),
                pick("max", |r| r.max),
                pick("energy_phi", |r| r.energy_phi),
            ],
            false,
        )?;
        outputs.push(path);
    }
    Ok(SolveOutcome { outputs, details })
}
