use nalgebra::DMatrix;

use crate::error::{ConeError, Result};
use crate::mellin::MellinSymbol;
use crate::spectrum::CrossSectionSpectrum;

/// Log-uniform radial grid on `[x_min, 1]` times the cross-section grid.
#[derive(Debug, Clone)]
pub struct ConeGrid {
    x_min: f64,
    spectrum: CrossSectionSpectrum,
    tau: Vec<f64>,
    x: Vec<f64>,
    h: f64,
    /// Trapezoid cell widths in `tau`.
    cells: Vec<f64>,
    /// `x_i^{n+1} cells_i`: radial part of the cone measure `x^n dx`.
    radial_weights: Vec<f64>,
    q_minus: Vec<f64>,
    /// `synth[(b, g)] = e_b(y_g)`.
    synth: DMatrix<f64>,
    /// `analysis[(g, b)] = w_g e_b(y_g)`.
    analysis: DMatrix<f64>,
}

impl ConeGrid {
    pub fn new(spectrum: CrossSectionSpectrum, x_min: f64, n_x: usize) -> Result<Self> {
        if !(x_min > 0.0 && x_min < 1.0) {
            return Err(ConeError::InvalidParameter(format!(
                "x_min must lie in (0, 1), got {x_min}"
            )));
        }
        if n_x < 3 {
            return Err(ConeError::InvalidParameter(format!(
                "need at least 3 radial nodes, got {n_x}"
            )));
        }
        let t0 = x_min.ln();
        let h = -t0 / (n_x - 1) as f64;
        let tau: Vec<f64> = (0..n_x)
            .map(|i| if i + 1 == n_x { 0.0 } else { t0 + i as f64 * h })
            .collect();
        let x: Vec<f64> = tau.iter().map(|t| t.exp()).collect();
        let cells: Vec<f64> = (0..n_x)
            .map(|i| if i == 0 || i + 1 == n_x { 0.5 * h } else { h })
            .collect();
        let n = spectrum.dim_n() as i32;
        let radial_weights = x
            .iter()
            .zip(&cells)
            .map(|(x, c)| x.powi(n + 1) * c)
            .collect();
        let sym = MellinSymbol::laplacian(&spectrum);
        let q_minus = (0..spectrum.n_modes()).map(|j| sym.q_minus(j)).collect();
        let g = spectrum.grid();
        let b = spectrum.basis_len();
        let synth = DMatrix::from_fn(b, g.len(), |r, c| spectrum.basis_vector(r)[c]);
        let analysis = DMatrix::from_fn(g.len(), b, |r, c| {
            g.weights[r] * spectrum.basis_vector(c)[r]
        });
        Ok(Self {
            x_min,
            spectrum,
            tau,
            x,
            h,
            cells,
            radial_weights,
            q_minus,
            synth,
            analysis,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    /// Cross-section dimension.
    pub fn n(&self) -> usize {
        self.spectrum.dim_n()
    }

    pub fn spectrum(&self) -> &CrossSectionSpectrum {
        &self.spectrum
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    /// `q_j^-` for every resolved mode.
    pub fn q_minus(&self) -> &[f64] {
        &self.q_minus
    }

    pub fn basis_len(&self) -> usize {
        self.spectrum.basis_len()
    }

    pub fn cross_len(&self) -> usize {
        self.spectrum.grid().len()
    }

    /// Per-node, per-cross-point quadrature weights of `x^n dx dy`, row-major `(i, g)`.
    pub fn measure_weights(&self) -> Vec<f64> {
        let w = &self.spectrum.grid().weights;
        self.radial_weights
            .iter()
            .flat_map(|r| w.iter().map(move |g| r * g))
            .collect()
    }

    /// Quadrature volume of the truncated cone.
    pub fn volume(&self) -> f64 {
        self.radial_weights.iter().sum::<f64>() * self.spectrum.volume()
    }

    pub(crate) fn synth(&self) -> &DMatrix<f64> {
        &self.synth
    }

    pub(crate) fn analysis(&self) -> &DMatrix<f64> {
        &self.analysis
    }

    pub(crate) fn require_physical(&self, what: &str) -> Result<()> {
        if self.spectrum.has_physical_grid() {
            Ok(())
        } else {
            Err(ConeError::Unsupported(format!(
                "{what} needs a physical cross-section grid; custom spectra are coefficient-only"
            )))
        }
    }
}

/// Field on the cone stored as mode coefficients: row `i` is the radial node,
/// column `b` the cross-section basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeField {
    pub coeffs: DMatrix<f64>,
}

impl ConeField {
    pub fn zeros(grid: &ConeGrid) -> Self {
        Self {
            coeffs: DMatrix::zeros(grid.n_x(), grid.basis_len()),
        }
    }

    pub fn constant(grid: &ConeGrid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        let e0 = grid.spectrum().basis_vector(0)[0];
        f.coeffs.column_mut(0).fill(c / e0);
        f
    }

    /// `f(x, b)` gives the coefficient of basis vector `b` at radius `x`.
    pub fn from_modes(grid: &ConeGrid, f: impl Fn(f64, usize) -> f64) -> Self {
        Self {
            coeffs: DMatrix::from_fn(grid.n_x(), grid.basis_len(), |i, b| f(grid.x()[i], b)),
        }
    }

    /// Samples `f(x, g)` on the physical grid (`g` indexes cross-section points) and projects.
    pub fn from_physical(grid: &ConeGrid, f: impl Fn(f64, usize) -> f64) -> Result<Self> {
        grid.require_physical("sampling a physical field")?;
        let values = DMatrix::from_fn(grid.n_x(), grid.cross_len(), |i, g| f(grid.x()[i], g));
        Ok(Self::from_values(grid, &values))
    }

    /// Projects physical values `(n_x, cross_len)` onto the resolved basis.
    pub fn from_values(grid: &ConeGrid, values: &DMatrix<f64>) -> Self {
        Self {
            coeffs: values * grid.analysis(),
        }
    }

    /// Physical values `(n_x, cross_len)`.
    pub fn values(&self, grid: &ConeGrid) -> DMatrix<f64> {
        &self.coeffs * grid.synth()
    }

    pub fn n_x(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn check_shape(&self, grid: &ConeGrid) -> Result<()> {
        if self.coeffs.nrows() != grid.n_x() {
            return Err(ConeError::ShapeMismatch {
                expected: grid.n_x(),
                got: self.coeffs.nrows(),
            });
        }
        if self.coeffs.ncols() != grid.basis_len() {
            return Err(ConeError::ShapeMismatch {
                expected: grid.basis_len(),
                got: self.coeffs.ncols(),
            });
        }
        Ok(())
    }

    /// `|pi_j u|(x_i)`: Euclidean norm of the mode-`j` coefficients at node `i`.
    pub fn mode_amplitude(&self, grid: &ConeGrid, i: usize, j: usize) -> f64 {
        grid.spectrum()
            .basis_range(j)
            .map(|b| self.coeffs[(i, b)].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Radial profile of mode `j` with sign: the single coefficient for
    /// one-dimensional eigenspaces, otherwise the amplitude.
    pub fn mode_profile(&self, grid: &ConeGrid, j: usize) -> Vec<f64> {
        let range = grid.spectrum().basis_range(j);
        (0..self.n_x())
            .map(|i| {
                if range.len() == 1 {
                    self.coeffs[(i, range.start)]
                } else {
                    self.mode_amplitude(grid, i, j)
                }
            })
            .collect()
    }

    /// Min and max over the physical grid with the node and point attaining them;
    /// coefficient-only grids report the coefficient extremes.
    pub fn extremes(&self, grid: &ConeGrid) -> Extremes {
        let values = if grid.spectrum().has_physical_grid() {
            self.values(grid)
        } else {
            self.coeffs.clone()
        };
        let mut e = Extremes {
            min: f64::INFINITY,
            argmin: (0, 0),
            max: f64::NEG_INFINITY,
            argmax: (0, 0),
        };
        for i in 0..values.nrows() {
            for g in 0..values.ncols() {
                let v = values[(i, g)];
                if v < e.min {
                    e.min = v;
                    e.argmin = (i, g);
                }
                if v > e.max {
                    e.max = v;
                    e.argmax = (i, g);
                }
            }
        }
        e
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub argmin: (usize, usize),
    pub max: f64,
    pub argmax: (usize, usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{sphere_volume, CrossSectionKind};

    #[test]
    fn nodes_and_weights() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim: 2 }, 4).unwrap();
        let g = ConeGrid::new(s, 1e-3, 257).unwrap();
        assert!(g.tau().windows(2).all(|w| w[1] > w[0]));
        assert!((g.x()[0] - 1e-3).abs() < 1e-15 && g.x()[256] == 1.0);
        assert!(g.radial_weights().iter().all(|w| *w > 0.0));
        // int_{x_min}^1 x^2 dx vol(S^2)
        let exact = (1.0 - 1e-9) / 3.0 * sphere_volume(2);
        assert!((g.volume() - exact).abs() / exact < 1e-3);
        let mw: f64 = g.measure_weights().iter().sum();
        assert!((mw - g.volume()).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_is_second_order() {
        let err = |n_x: usize| {
            let s =
                CrossSectionSpectrum::build(CrossSectionKind::Circle { scale: 1.0 }, 2).unwrap();
            let g = ConeGrid::new(s, 1e-2, n_x).unwrap();
            let exact = (1.0 - 1e-4) / 2.0 * 2.0 * std::f64::consts::PI;
            (g.volume() - exact).abs()
        };
        let ratio = err(33) / err(65);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn constant_field_round_trip() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Circle { scale: 2.0 }, 3).unwrap();
        let g = ConeGrid::new(s, 1e-2, 9).unwrap();
        let f = ConeField::constant(&g, 2.5);
        let v = f.values(&g);
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-14));
        let back = ConeField::from_values(&g, &v);
        assert!((&back.coeffs - &f.coeffs).abs().max() < 1e-14);
        let e = f.extremes(&g);
        assert!((e.min - 2.5).abs() < 1e-14 && (e.max - 2.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Circle { scale: 1.0 }, 2).unwrap();
        assert!(ConeGrid::new(s.clone(), 1.0, 10).is_err());
        assert!(ConeGrid::new(s.clone(), 0.0, 10).is_err());
        assert!(ConeGrid::new(s, 0.1, 2).is_err());
    }
}
