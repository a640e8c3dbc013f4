use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::grid::{ConeField, ConeGrid};
use super::operator::{assemble_all, InnerBc, RadialOperator};
use crate::error::{ConeError, Result};

/// Relative size below which an eigenvalue of `-L_j` counts as the kernel.
pub const KERNEL_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct ModeEigen {
    /// Eigenvectors of `W^{-1/2} (-A_j) W^{-1/2}`.
    vectors: DMatrix<f64>,
    values: Vec<f64>,
    has_kernel: bool,
}

/// Spectral powers `(-L_j)^sigma` of the radial operators.
#[derive(Debug, Clone)]
pub struct FractionalPower {
    sqrt_w: DVector<f64>,
    modes: Vec<ModeEigen>,
}

impl FractionalPower {
    pub fn new(grid: &ConeGrid, bc: InnerBc) -> Result<Self> {
        let ops = assemble_all(grid, bc)?;
        Self::from_operators(&ops)
    }

    pub fn from_operators(ops: &[RadialOperator]) -> Result<Self> {
        let w = &ops[0].weights;
        let sqrt_w = DVector::from_iterator(w.len(), w.iter().map(|v| v.sqrt()));
        let modes = ops
            .iter()
            .map(|op| {
                let mut m = -op.flux_matrix();
                for i in 0..m.nrows() {
                    for k in 0..m.ncols() {
                        m[(i, k)] /= sqrt_w[i] * sqrt_w[k];
                    }
                }
                let eig = SymmetricEigen::new(m);
                let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut values = Vec::with_capacity(eig.eigenvalues.len());
                for &v in eig.eigenvalues.iter() {
                    if v.abs() <= KERNEL_TOL * top {
                        values.push(0.0);
                    } else if v < 0.0 {
                        return Err(ConeError::NegativeEigenvalue(v));
                    } else {
                        values.push(v);
                    }
                }
                let has_kernel = values.contains(&0.0);
                Ok(ModeEigen {
                    vectors: eig.eigenvectors,
                    values,
                    has_kernel,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sqrt_w, modes })
    }

    /// Eigenvalues of `-L_j` (kernel mapped to exactly 0).
    pub fn eigenvalues(&self, j: usize) -> &[f64] {
        &self.modes[j].values
    }

    /// `g(-L_j) v` through the spectral decomposition.
    pub fn apply_fn(&self, j: usize, v: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let e = &self.modes[j];
        // the kernel is spanned by constants; removing the weighted mean first
        // keeps constants from picking up eigenvector rounding
        let mean = if e.has_kernel {
            let (num, den) = v
                .iter()
                .zip(self.sqrt_w.iter())
                .fold((0.0, 0.0), |(a, b), (x, s)| (a + x * s * s, b + s * s));
            num / den
        } else {
            0.0
        };
        let y = DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(self.sqrt_w.iter())
                .map(|(a, s)| (a - mean) * s),
        );
        let mut c = e.vectors.tr_mul(&y);
        for (ck, lam) in c.iter_mut().zip(&e.values) {
            *ck *= g(*lam);
        }
        let z = &e.vectors * c;
        let k0 = if e.has_kernel { mean * g(0.0) } else { 0.0 };
        z.iter()
            .zip(self.sqrt_w.iter())
            .map(|(a, s)| a / s + k0)
            .collect()
    }

    /// `(-L_j)^sigma v`; the kernel maps to 0.
    pub fn apply_mode(&self, j: usize, sigma: f64, v: &[f64]) -> Vec<f64> {
        self.apply_fn(j, v, |lam| if lam == 0.0 { 0.0 } else { lam.powf(sigma) })
    }

    /// `(-L)^sigma` applied mode by mode.
    pub fn apply(&self, grid: &ConeGrid, sigma: f64, field: &ConeField) -> Result<ConeField> {
        check_sigma(sigma)?;
        field.check_shape(grid)?;
        let mut out = ConeField::zeros(grid);
        for b in 0..grid.basis_len() {
            let j = grid.spectrum().mode_of_basis(b);
            let col: Vec<f64> = field.coeffs.column(b).iter().copied().collect();
            out.coeffs
                .column_mut(b)
                .copy_from_slice(&self.apply_mode(j, sigma, &col));
        }
        Ok(out)
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma <= 1.0 {
        Ok(())
    } else {
        Err(ConeError::InvalidParameter(format!(
            "sigma must lie in (0, 1], got {sigma}"
        )))
    }
}

/// One-shot `(-L)^sigma field`; builds the decompositions each call.
pub fn fractional_apply(
    grid: &ConeGrid,
    sigma: f64,
    field: &ConeField,
    bc: InnerBc,
) -> Result<ConeField> {
    FractionalPower::new(grid, bc)?.apply(grid, sigma, field)
}
