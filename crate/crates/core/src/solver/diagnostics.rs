use serde::Serialize;

use super::grid::{ConeField, ConeGrid};
use super::operator::{assemble_all, InnerBc, RadialOperator};
use crate::error::{ConeError, Result};

/// Amplitudes below this carry no usable exponent.
pub const SIGNAL_FLOOR: f64 = 1e-13;

/// `int u x^n dx dy` by the grid quadrature.
pub fn mass(grid: &ConeGrid, u: &ConeField) -> f64 {
    // only the constant eigenfunction has nonzero integral
    let e0 = grid.spectrum().basis_vector(0)[0];
    let int_e0 = e0 * grid.spectrum().volume();
    u.coeffs
        .column(0)
        .iter()
        .zip(grid.radial_weights())
        .map(|(c, w)| c * w)
        .sum::<f64>()
        * int_e0
}

/// `L^2` norm against the cone measure.
pub fn l2_norm(grid: &ConeGrid, u: &ConeField) -> f64 {
    u.coeffs
        .row_iter()
        .zip(grid.radial_weights())
        .map(|(r, w)| w * r.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// `|u_next - u| / dt` in the cone `L^2` norm.
pub fn rate_norm(grid: &ConeGrid, u: &ConeField, u_next: &ConeField, dt: f64) -> f64 {
    let mut d = u_next.clone();
    d.coeffs -= &u.coeffs;
    l2_norm(grid, &d) / dt
}

/// `1/2 |grad u|^2 + 1/4 |u^2 - 1|^2`; the gradient part is the Dirichlet form
/// of the operators, including the inner boundary term.
pub fn energy_phi(grid: &ConeGrid, u: &ConeField, ops: &[RadialOperator]) -> Result<f64> {
    u.check_shape(grid)?;
    grid.require_physical("the double-well energy")?;
    let spectrum = grid.spectrum();
    let mut grad = 0.0;
    for b in 0..grid.basis_len() {
        let col: Vec<f64> = u.coeffs.column(b).iter().copied().collect();
        grad += ops[spectrum.mode_of_basis(b)].dirichlet_form(&col, &col);
    }
    let values = u.values(grid);
    let cw = &spectrum.grid().weights;
    let mut well = 0.0;
    for (i, w) in grid.radial_weights().iter().enumerate() {
        let row: f64 = values
            .row(i)
            .iter()
            .zip(cw)
            .map(|(v, g)| g * (v * v - 1.0).powi(2))
            .sum();
        well += w * row;
    }
    Ok(0.5 * grad + 0.25 * well)
}

/// [`energy_phi`] with freshly assembled operators.
pub fn energy_phi_with(grid: &ConeGrid, u: &ConeField, bc: InnerBc) -> Result<f64> {
    energy_phi(grid, u, &assemble_all(grid, bc)?)
}

/// Discrete weighted cone Sobolev norm of order `s` in `{0, 1}` on `[x_min, 1]`,
/// with weight `x^{(n+1)/2 - gamma}` against `dx/x dy`.
pub fn weighted_norm(grid: &ConeGrid, u: &ConeField, gamma: f64, s: u32) -> Result<f64> {
    u.check_shape(grid)?;
    if s > 1 {
        return Err(ConeError::InvalidParameter(format!(
            "smoothness s must be 0 or 1, got {s}"
        )));
    }
    let k = grid.n() as f64 + 1.0 - 2.0 * gamma;
    let tau = grid.tau();
    let cells = grid.cells();
    let spectrum = grid.spectrum();
    let mut total = 0.0;
    for i in 0..grid.n_x() {
        let e = (k * tau[i]).exp() * cells[i];
        for b in 0..grid.basis_len() {
            let c = u.coeffs[(i, b)];
            let lam = if s == 1 {
                spectrum.eigenvalue(spectrum.mode_of_basis(b)).abs()
            } else {
                0.0
            };
            total += e * (1.0 + lam) * c * c;
        }
    }
    if s == 1 {
        for f in 0..grid.n_x() - 1 {
            let h = tau[f + 1] - tau[f];
            let e = (k * 0.5 * (tau[f] + tau[f + 1])).exp() * h;
            for b in 0..grid.basis_len() {
                let d = (u.coeffs[(f + 1, b)] - u.coeffs[(f, b)]) / h;
                total += e * d * d;
            }
        }
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Location {
    pub time_index: usize,
    pub node: usize,
    pub point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ComparisonVerdict {
    /// The initial data are not ordered; nothing is checked.
    PreconditionViolated { initial_margin: f64, at: Location },
    Checked {
        passed: bool,
        /// `min (v - u)` over all stored times.
        min_margin: f64,
        at: Location,
    },
}

impl ComparisonVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ComparisonVerdict::Checked { passed: true, .. })
    }
}

fn min_gap(grid: &ConeGrid, u: &ConeField, v: &ConeField, k: usize) -> (f64, Location) {
    let d = v.values(grid) - u.values(grid);
    let mut best = (
        f64::INFINITY,
        Location {
            time_index: k,
            node: 0,
            point: 0,
        },
    );
    for i in 0..d.nrows() {
        for g in 0..d.ncols() {
            if d[(i, g)] < best.0 {
                best = (
                    d[(i, g)],
                    Location {
                        time_index: k,
                        node: i,
                        point: g,
                    },
                );
            }
        }
    }
    best
}

/// Checks `u <= v + tol` pointwise at every stored time.
pub fn comparison_check(
    grid: &ConeGrid,
    u_traj: &[ConeField],
    v_traj: &[ConeField],
    tol: f64,
) -> Result<ComparisonVerdict> {
    grid.require_physical("the comparison check")?;
    if u_traj.len() != v_traj.len() || u_traj.is_empty() {
        return Err(ConeError::ShapeMismatch {
            expected: u_traj.len(),
            got: v_traj.len(),
        });
    }
    let (m0, at0) = min_gap(grid, &u_traj[0], &v_traj[0], 0);
    if m0 < -tol {
        return Ok(ComparisonVerdict::PreconditionViolated {
            initial_margin: m0,
            at: at0,
        });
    }
    let (min_margin, at) = u_traj
        .iter()
        .zip(v_traj)
        .enumerate()
        .map(|(k, (u, v))| min_gap(grid, u, v, k))
        .fold((f64::INFINITY, at0), |a, b| if b.0 < a.0 { b } else { a });
    Ok(ComparisonVerdict::Checked {
        passed: min_margin >= -tol,
        min_margin,
        at,
    })
}

/// Largest excursion of a trajectory outside `[lo, hi]` (0 when it stays inside).
pub fn bound_violation(grid: &ConeGrid, traj: &[ConeField], lo: f64, hi: f64) -> f64 {
    traj.iter()
        .map(|u| {
            let e = u.extremes(grid);
            (lo - e.min).max(e.max - hi).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TipFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares slope of `ln |pi_j u|` against `ln x` over nodes in `window`.
pub fn fit_tip_exponent(
    grid: &ConeGrid,
    u: &ConeField,
    j: usize,
    window: (f64, f64),
) -> Result<TipFit> {
    u.check_shape(grid)?;
    if j >= grid.spectrum().n_modes() {
        return Err(ConeError::ModeOutOfRange {
            index: j,
            available: grid.spectrum().n_modes(),
        });
    }
    let (a, b) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, x) in grid.x().iter().enumerate() {
        if *x >= a * (1.0 - 1e-12) && *x <= b * (1.0 + 1e-12) {
            let amp = u.mode_amplitude(grid, i, j);
            if !(amp >= SIGNAL_FLOOR) {
                return Err(ConeError::NoSignal { magnitude: amp });
            }
            xs.push(x.ln());
            ys.push(amp.ln());
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(ConeError::InvalidParameter(format!(
            "fit window [{a}, {b}] holds {n} nodes; need at least 3"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(TipFit {
        slope,
        stderr,
        intercept,
        points: n,
    })
}
