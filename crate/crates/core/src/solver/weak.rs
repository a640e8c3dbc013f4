use super::grid::{ConeField, ConeGrid};
use super::operator::RadialOperator;
use crate::error::{ConeError, Result};

/// Test function `phi(t, x) e_b(y)` on space-time, given per basis vector.
pub trait SpaceTimeTest {
    fn value(&self, t: f64, x: f64, b: usize) -> f64;
    /// `x d_x phi`.
    fn d_tau(&self, t: f64, x: f64, b: usize) -> f64;
}

/// Separable test `a(t) p(x)` on one basis vector.
pub struct Separable<A, P, D> {
    pub basis: usize,
    pub time: A,
    pub space: P,
    /// `x p'(x)`.
    pub space_d_tau: D,
}

impl<A, P, D> SpaceTimeTest for Separable<A, P, D>
where
    A: Fn(f64) -> f64,
    P: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    fn value(&self, t: f64, x: f64, b: usize) -> f64 {
        if b == self.basis {
            (self.time)(t) * (self.space)(x)
        } else {
            0.0
        }
    }

    fn d_tau(&self, t: f64, x: f64, b: usize) -> f64 {
        if b == self.basis {
            (self.time)(t) * (self.space_d_tau)(x)
        } else {
            0.0
        }
    }
}

fn weighted_inner(grid: &ConeGrid, a: &ConeField, b: &ConeField) -> f64 {
    grid.radial_weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * a.coeffs.row(i).dot(&b.coeffs.row(i)))
        .sum()
}

/// `int <grad phi, grad w>` at one time with `phi` differentiated exactly at the faces.
fn gradient_pairing(
    grid: &ConeGrid,
    ops: &[RadialOperator],
    phi: &dyn SpaceTimeTest,
    t: f64,
    w: &ConeField,
) -> f64 {
    let p = grid.n() as i32 - 1;
    let tau = grid.tau();
    let x = grid.x();
    let spectrum = grid.spectrum();
    let mut total = 0.0;
    for b in 0..grid.basis_len() {
        let op = &ops[spectrum.mode_of_basis(b)];
        for f in 0..grid.n_x() - 1 {
            let xf = (0.5 * (tau[f] + tau[f + 1])).exp();
            total += xf.powi(p) * phi.d_tau(t, xf, b) * (w.coeffs[(f + 1, b)] - w.coeffs[(f, b)]);
        }
        for i in 0..grid.n_x() {
            total -= op.reaction[i] * phi.value(t, x[i], b) * w.coeffs[(i, b)];
        }
        total += op.robin * phi.value(t, x[0], b) * w.coeffs[(0, b)];
    }
    total
}

fn sample(grid: &ConeGrid, phi: &dyn SpaceTimeTest, t: f64) -> ConeField {
    ConeField::from_modes(grid, |x, b| phi.value(t, x, b))
}

/// Residual of the weak porous medium identity
/// `int_0^T int (<grad phi, grad u^m> - phi_t u) - int phi(0) u(0)` over a stored trajectory.
pub fn weak_residual(
    grid: &ConeGrid,
    ops: &[RadialOperator],
    times: &[f64],
    traj: &[ConeField],
    m: f64,
    phi: &dyn SpaceTimeTest,
) -> Result<f64> {
    grid.require_physical("the weak residual")?;
    if times.len() != traj.len() || traj.len() < 2 {
        return Err(ConeError::ShapeMismatch {
            expected: times.len(),
            got: traj.len(),
        });
    }
    for u in traj {
        u.check_shape(grid)?;
    }
    let t_end = *times.last().expect("nonempty");
    let end = sample(grid, phi, t_end);
    if end.max_abs() > 1e-12 {
        return Err(ConeError::InvalidParameter(format!(
            "test function must vanish at the final time; max |phi(T)| = {:e}",
            end.max_abs()
        )));
    }
    let grads: Vec<f64> = times
        .iter()
        .zip(traj)
        .map(|(t, u)| {
            let w = ConeField::from_values(grid, &u.values(grid).map(|v| v.powf(m)));
            gradient_pairing(grid, ops, phi, *t, &w)
        })
        .collect();
    let phis: Vec<ConeField> = times.iter().map(|t| sample(grid, phi, *t)).collect();
    let mut grad = 0.0;
    let mut time = 0.0;
    for k in 0..traj.len() - 1 {
        let dt = times[k + 1] - times[k];
        grad += 0.5 * dt * (grads[k] + grads[k + 1]);
        let mut mid = traj[k].clone();
        mid.coeffs += &traj[k + 1].coeffs;
        mid.coeffs *= 0.5;
        let mut dphi = phis[k + 1].clone();
        dphi.coeffs -= &phis[k].coeffs;
        time += weighted_inner(grid, &dphi, &mid);
    }
    let initial = weighted_inner(grid, &phis[0], &traj[0]);
    Ok(grad - time - initial)
}
