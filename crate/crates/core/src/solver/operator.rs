use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::{ConeField, ConeGrid};
use crate::error::{ConeError, Result};

/// Inner boundary condition at `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerBc {
    /// `d_tau u_j = -q_j^- u_j`: exact for the decaying indicial solution `x^{-q_j^-}`.
    #[default]
    AsymptoticRobin,
    NeumannTau,
}

impl std::str::FromStr for InnerBc {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic_robin" | "robin" => Ok(InnerBc::AsymptoticRobin),
            "neumann_tau" | "neumann" => Ok(InnerBc::NeumannTau),
            other => Err(ConeError::InvalidParameter(format!(
                "unknown inner boundary '{other}'"
            ))),
        }
    }
}

/// `L_j = W^{-1} A_j` with `A_j` symmetric tridiagonal:
/// `(A_j u)_i = F_{i+1/2} - F_{i-1/2} + lambda_j x_i^{n-1} h_i u_i`,
/// `F_{i+1/2} = x_{i+1/2}^{n-1} (u_{i+1} - u_i) / h`.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub mode: usize,
    pub lambda: f64,
    /// Face conductances `x_{i+1/2}^{n-1} / h`.
    pub faces: Vec<f64>,
    /// `lambda_j x_i^{n-1} h_i`.
    pub reaction: Vec<f64>,
    /// Inner boundary conductance: `x_0^{n-1} |q_j^-|` for the Robin condition.
    pub robin: f64,
    pub weights: Vec<f64>,
}

impl RadialOperator {
    pub fn n_x(&self) -> usize {
        self.weights.len()
    }

    /// `A_j u`.
    pub fn flux_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out: Vec<f64> = (0..n).map(|i| self.reaction[i] * u[i]).collect();
        for (f, a) in self.faces.iter().enumerate() {
            let flux = a * (u[f + 1] - u[f]);
            out[f] += flux;
            out[f + 1] -= flux;
        }
        out[0] -= self.robin * u[0];
        out
    }

    /// `L_j u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.flux_apply(u);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    /// Diagonal of `A_j`.
    pub fn diag(&self) -> Vec<f64> {
        let mut d = self.reaction.clone();
        for (f, a) in self.faces.iter().enumerate() {
            d[f] -= a;
            d[f + 1] -= a;
        }
        d[0] -= self.robin;
        d
    }

    /// Dense `A_j`.
    pub fn flux_matrix(&self) -> DMatrix<f64> {
        let n = self.n_x();
        let d = self.diag();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
        }
        for (f, a) in self.faces.iter().enumerate() {
            m[(f, f + 1)] = *a;
            m[(f + 1, f)] = *a;
        }
        m
    }

    /// Dense `L_j`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = self.flux_matrix();
        for i in 0..self.n_x() {
            let w = self.weights[i];
            m.row_mut(i).iter_mut().for_each(|v| *v /= w);
        }
        m
    }

    /// `-<A_j u, v>`: the discrete Dirichlet form, including the boundary term.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        -self
            .flux_apply(u)
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }
}

/// Radial part of the cone Laplacian for mode `j`.
pub fn assemble_laplacian(grid: &ConeGrid, j: usize, bc: InnerBc) -> Result<RadialOperator> {
    let spectrum = grid.spectrum();
    if j >= spectrum.n_modes() {
        return Err(ConeError::ModeOutOfRange {
            index: j,
            available: spectrum.n_modes(),
        });
    }
    let p = grid.n() as i32 - 1;
    let tau = grid.tau();
    let faces = tau
        .windows(2)
        .map(|w| (0.5 * (w[0] + w[1])).exp().powi(p) / (w[1] - w[0]))
        .collect();
    let lambda = spectrum.eigenvalue(j);
    let reaction = grid
        .x()
        .iter()
        .zip(grid.cells())
        .map(|(x, c)| lambda * x.powi(p) * c)
        .collect();
    let robin = match bc {
        InnerBc::AsymptoticRobin => grid.x()[0].powi(p) * grid.q_minus()[j].abs(),
        InnerBc::NeumannTau => 0.0,
    };
    Ok(RadialOperator {
        mode: j,
        lambda,
        faces,
        reaction,
        robin,
        weights: grid.radial_weights().to_vec(),
    })
}

/// Operators for every resolved mode.
pub fn assemble_all(grid: &ConeGrid, bc: InnerBc) -> Result<Vec<RadialOperator>> {
    (0..grid.spectrum().n_modes())
        .map(|j| assemble_laplacian(grid, j, bc))
        .collect()
}

/// Applies `f` to every basis column with the operator of its mode.
pub(crate) fn map_columns(
    grid: &ConeGrid,
    field: &ConeField,
    ops: &[RadialOperator],
    f: impl Fn(&RadialOperator, &[f64]) -> Vec<f64>,
) -> ConeField {
    let mut out = ConeField::zeros(grid);
    for b in 0..grid.basis_len() {
        let op = &ops[grid.spectrum().mode_of_basis(b)];
        let col: Vec<f64> = field.coeffs.column(b).iter().copied().collect();
        let r = f(op, &col);
        out.coeffs.column_mut(b).copy_from_slice(&r);
    }
    out
}

/// Full cone Laplacian: radial operator of each mode applied to its coefficients.
pub fn apply_full_laplacian(grid: &ConeGrid, field: &ConeField, bc: InnerBc) -> Result<ConeField> {
    field.check_shape(grid)?;
    let ops = assemble_all(grid, bc)?;
    Ok(map_columns(grid, field, &ops, |op, c| op.apply(c)))
}
