//! Spectral data of the cross-section Laplacian.
//!
//! Every pole location and asymptotics exponent downstream is derived from
//! the distinct eigenvalues stored here. Three cross-sections are supported:
//!
//! - a circle of length `2*pi*scale`, sampled on a uniform periodic grid;
//! - the round unit sphere `S^n`, resolved on its zonal (axisymmetric) sector
//!   with Gauss-Gegenbauer nodes, one zonal harmonic per eigenvalue;
//! - a user-supplied list of eigenvalues in coefficient form (no physical grid).
//!
//! Fields on the cross-section are stored as values on [`CrossGrid`] points.
//! For the custom kind the "points" are the mode coefficients themselves.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};

/// Eigenvalues closer than this are merged into one multiplicity class.
pub const DISTINCT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CrossSectionKind {
    /// Circle with metric `scale^2 dtheta^2` on a `2*pi`-periodic angle.
    Circle { scale: f64 },
    /// Round unit sphere of dimension `dim >= 2`.
    Sphere { dim: usize },
    /// Arbitrary nonpositive eigenvalues, repeated entries give multiplicity.
    Custom { dim: usize, eigenvalues: Vec<f64> },
}

impl CrossSectionKind {
    pub fn dim(&self) -> usize {
        match self {
            CrossSectionKind::Circle { .. } => 1,
            CrossSectionKind::Sphere { dim } | CrossSectionKind::Custom { dim, .. } => *dim,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            CrossSectionKind::Circle { .. } => "circle",
            CrossSectionKind::Sphere { .. } => "sphere",
            CrossSectionKind::Custom { .. } => "custom",
        }
    }
}

/// How cross-section values are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    Periodic,
    Zonal,
    Coefficient,
}

/// Quadrature points on the cross-section; `weights` sum to its volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGrid {
    pub layout: GridLayout,
    /// Angle for the circle, `cos(polar angle)` for the sphere, index otherwise.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CrossGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct CrossSectionSpectrum {
    kind: CrossSectionKind,
    dim_n: usize,
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    grid: CrossGrid,
    /// Orthonormal grid vectors; `basis_offsets[j]..basis_offsets[j+1]` span `E_j`.
    basis: Vec<Vec<f64>>,
    basis_offsets: Vec<usize>,
}

/// JSON export shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumExport {
    pub kind: String,
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl CrossSectionSpectrum {
    /// Builds the first `n_modes` distinct eigenvalues with a default grid
    /// resolution (`4 * n_modes` circle points, `2 * n_modes` zonal nodes).
    pub fn build(kind: CrossSectionKind, n_modes: usize) -> Result<Self> {
        let resolution = match &kind {
            CrossSectionKind::Circle { .. } => (4 * n_modes).max(8),
            CrossSectionKind::Sphere { .. } => (2 * n_modes).max(4),
            CrossSectionKind::Custom { .. } => 0,
        };
        Self::build_with_resolution(kind, n_modes, resolution)
    }

    /// `resolution` is the number of circle points or zonal nodes; ignored for
    /// custom spectra.
    pub fn build_with_resolution(
        kind: CrossSectionKind,
        n_modes: usize,
        resolution: usize,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(ConeError::InvalidParameter(
                "n_modes must be at least 1".into(),
            ));
        }
        match &kind {
            CrossSectionKind::Circle { scale } => build_circle(*scale, n_modes, resolution),
            CrossSectionKind::Sphere { dim } => build_sphere(*dim, n_modes, resolution),
            CrossSectionKind::Custom { dim, eigenvalues } => {
                build_custom(*dim, eigenvalues, n_modes)
            }
        }
    }

    pub fn kind(&self) -> &CrossSectionKind {
        &self.kind
    }

    /// Cross-section dimension `n`; the cone has dimension `n + 1`.
    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &CrossGrid {
        &self.grid
    }

    pub fn volume(&self) -> f64 {
        self.grid.volume()
    }

    /// Total number of resolved basis vectors (sum over eigenspaces).
    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    pub fn basis_vector(&self, b: usize) -> &[f64] {
        &self.basis[b]
    }

    /// Basis indices spanning the resolved part of `E_j`.
    pub fn basis_range(&self, j: usize) -> std::ops::Range<usize> {
        self.basis_offsets[j]..self.basis_offsets[j + 1]
    }

    /// Eigenvalue index owning basis vector `b`.
    pub fn mode_of_basis(&self, b: usize) -> usize {
        self.basis_offsets.partition_point(|&o| o <= b) - 1
    }

    /// Whether nonlinear terms can be evaluated pointwise on the grid.
    pub fn has_physical_grid(&self) -> bool {
        self.grid.layout != GridLayout::Coefficient
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(ConeError::ShapeMismatch {
                expected: self.grid.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Coefficients of `values` against the orthonormal basis of `E_j`.
    pub fn project_mode(&self, values: &[f64], j: usize) -> Result<Vec<f64>> {
        self.check_len(values)?;
        if j >= self.n_modes() {
            return Err(ConeError::ModeOutOfRange {
                index: j,
                available: self.n_modes(),
            });
        }
        Ok(self
            .basis_range(j)
            .map(|b| self.grid.inner(values, &self.basis[b]))
            .collect())
    }

    /// All basis coefficients, ordered by basis index.
    pub fn analyze(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values)?;
        Ok(self
            .basis
            .iter()
            .map(|e| self.grid.inner(values, e))
            .collect())
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.basis_len() {
            return Err(ConeError::ShapeMismatch {
                expected: self.basis_len(),
                got: coeffs.len(),
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        for (c, e) in coeffs.iter().zip(&self.basis) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// `Delta_h` applied through the eigen-expansion `sum_j lambda_j pi_j`.
    pub fn apply_cross_laplacian(&self, values: &[f64]) -> Result<Vec<f64>> {
        let mut coeffs = self.analyze(values)?;
        for (b, c) in coeffs.iter_mut().enumerate() {
            *c *= self.eigenvalues[self.mode_of_basis(b)];
        }
        self.synthesize(&coeffs)
    }

    pub fn export(&self) -> SpectrumExport {
        SpectrumExport {
            kind: self.kind.label().to_string(),
            n: self.dim_n,
            eigenvalues: self.eigenvalues.clone(),
            multiplicities: self.multiplicities.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.export()).expect("spectrum export is serializable")
    }
}

fn build_circle(scale: f64, n_modes: usize, points: usize) -> Result<CrossSectionSpectrum> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(ConeError::InvalidParameter(format!(
            "circle scale must be positive, got {scale}"
        )));
    }
    // cos/sin of order j stay orthonormal under the trapezoid rule iff 2j < points
    let available = points.div_ceil(2);
    if n_modes > available {
        return Err(ConeError::UnderResolved {
            requested: n_modes,
            available,
        });
    }
    let h = 2.0 * std::f64::consts::PI / points as f64;
    let thetas: Vec<f64> = (0..points).map(|k| k as f64 * h).collect();
    let weights = vec![scale * h; points];

    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut multiplicities = Vec::with_capacity(n_modes);
    let mut basis = Vec::new();
    let mut offsets = vec![0];
    let c0 = 1.0 / (2.0 * std::f64::consts::PI * scale).sqrt();
    let cj = 1.0 / (std::f64::consts::PI * scale).sqrt();
    for j in 0..n_modes {
        let jf = j as f64;
        eigenvalues.push(-(jf / scale).powi(2));
        if j == 0 {
            multiplicities.push(1);
            basis.push(vec![c0; points]);
        } else {
            multiplicities.push(2);
            basis.push(thetas.iter().map(|t| cj * (jf * t).cos()).collect());
            basis.push(thetas.iter().map(|t| cj * (jf * t).sin()).collect());
        }
        offsets.push(basis.len());
    }
    Ok(CrossSectionSpectrum {
        kind: CrossSectionKind::Circle { scale },
        dim_n: 1,
        eigenvalues,
        multiplicities,
        grid: CrossGrid {
            layout: GridLayout::Periodic,
            points: thetas,
            weights,
        },
        basis,
        basis_offsets: offsets,
    })
}

/// `Gamma(k / 2)` for a positive integer `k`.
pub(crate) fn gamma_half(k: usize) -> f64 {
    assert!(k > 0);
    let (mut value, mut arg) = if k % 2 == 0 {
        (1.0, 2usize) // Gamma(1)
    } else {
        (std::f64::consts::PI.sqrt(), 1usize) // Gamma(1/2)
    };
    while arg < k {
        value *= arg as f64 / 2.0;
        arg += 2;
    }
    value
}

/// Volume of the round unit sphere `S^n`.
pub fn sphere_volume(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf((n as f64 + 1.0) / 2.0) / gamma_half(n + 1)
}

/// Multiplicity of `-j(j+n-1)` on `S^n`: `C(n+j, n) - C(n+j-2, n)`.
pub fn sphere_multiplicity(n: usize, j: usize) -> usize {
    fn binom(a: usize, b: usize) -> usize {
        if b > a {
            return 0;
        }
        let b = b.min(a - b);
        (0..b).fold(1usize, |acc, i| acc * (a - i) / (i + 1))
    }
    let lower = if j >= 2 { binom(n + j - 2, n) } else { 0 };
    binom(n + j, n) - lower
}

/// Gauss nodes and weights for the weight `(1 - x^2)^((n-2)/2)` on `[-1, 1]`
/// (Golub-Welsch on the Gegenbauer Jacobi matrix, `lambda = (n-1)/2`).
fn gauss_gegenbauer(n: usize, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let lambda = (n as f64 - 1.0) / 2.0;
    let mut jacobi = DMatrix::<f64>::zeros(nodes, nodes);
    for k in 1..nodes {
        let kf = k as f64;
        let beta =
            (kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0))).sqrt();
        jacobi[(k, k - 1)] = beta;
        jacobi[(k - 1, k)] = beta;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..nodes)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x, w) = pairs.into_iter().unzip();
    (x, w)
}

/// Gegenbauer polynomial `C_j^lambda(x)` by the three-term recurrence.
fn gegenbauer(j: usize, lambda: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if j == 0 {
        return prev;
    }
    let mut cur = 2.0 * lambda * x;
    for k in 1..j {
        let kf = k as f64;
        let next = (2.0 * x * (kf + lambda) * cur - (kf + 2.0 * lambda - 1.0) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn build_sphere(n: usize, n_modes: usize, nodes: usize) -> Result<CrossSectionSpectrum> {
    if n < 2 {
        return Err(ConeError::InvalidParameter(format!(
            "sphere cross-section needs dimension >= 2, got {n}"
        )));
    }
    if n_modes > nodes {
        return Err(ConeError::UnderResolved {
            requested: n_modes,
            available: nodes,
        });
    }
    let (mu, w) = gauss_gegenbauer(n, nodes);
    // rescale so the weights integrate zonal functions over the whole sphere
    let total: f64 = w.iter().sum();
    let vol = sphere_volume(n);
    let weights: Vec<f64> = w.iter().map(|wi| wi * vol / total).collect();
    let grid = CrossGrid {
        layout: GridLayout::Zonal,
        points: mu,
        weights,
    };

    let lambda = (n as f64 - 1.0) / 2.0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for j in 0..n_modes {
        let mut v: Vec<f64> = grid
            .points
            .iter()
            .map(|&x| gegenbauer(j, lambda, x))
            .collect();
        // one Gram-Schmidt sweep against earlier modes, then normalize
        for e in &basis {
            let c = grid.inner(&v, e);
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
        let norm = grid.inner(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let eigenvalues = (0..n_modes).map(|j| -((j * (j + n - 1)) as f64)).collect();
    let multiplicities = (0..n_modes).map(|j| sphere_multiplicity(n, j)).collect();
    Ok(CrossSectionSpectrum {
        kind: CrossSectionKind::Sphere { dim: n },
        dim_n: n,
        eigenvalues,
        multiplicities,
        grid,
        basis,
        basis_offsets: (0..=n_modes).collect(),
    })
}

fn build_custom(n: usize, raw: &[f64], n_modes: usize) -> Result<CrossSectionSpectrum> {
    if n == 0 {
        return Err(ConeError::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    if raw.iter().any(|l| !l.is_finite()) {
        return Err(ConeError::InvalidParameter(
            "eigenvalues must be finite".into(),
        ));
    }
    if let Some(bad) = raw.iter().find(|&&l| l > DISTINCT_TOL) {
        return Err(ConeError::InvalidParameter(format!(
            "eigenvalues must be <= 0, got {bad}"
        )));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut multiplicities: Vec<usize> = Vec::new();
    for l in sorted {
        match eigenvalues.last() {
            Some(&last) if (last - l).abs() < DISTINCT_TOL => {
                let m = multiplicities.last_mut().unwrap();
                let rep = eigenvalues.last_mut().unwrap();
                *rep = (*rep * *m as f64 + l) / (*m as f64 + 1.0);
                *m += 1;
            }
            _ => {
                eigenvalues.push(l);
                multiplicities.push(1);
            }
        }
    }
    if eigenvalues
        .first()
        .map_or(true, |l| l.abs() >= DISTINCT_TOL)
    {
        return Err(ConeError::InvalidParameter(
            "custom spectrum must contain the eigenvalue 0".into(),
        ));
    }
    eigenvalues[0] = 0.0;
    if n_modes > eigenvalues.len() {
        return Err(ConeError::UnderResolved {
            requested: n_modes,
            available: eigenvalues.len(),
        });
    }
    eigenvalues.truncate(n_modes);
    multiplicities.truncate(n_modes);

    let dim: usize = multiplicities.iter().sum();
    let mut basis = Vec::with_capacity(dim);
    let mut offsets = vec![0];
    for &m in &multiplicities {
        for _ in 0..m {
            let mut e = vec![0.0; dim];
            e[basis.len()] = 1.0;
            basis.push(e);
        }
        offsets.push(basis.len());
    }
    Ok(CrossSectionSpectrum {
        kind: CrossSectionKind::Custom {
            dim: n,
            eigenvalues: raw.to_vec(),
        },
        dim_n: n,
        eigenvalues,
        multiplicities,
        grid: CrossGrid {
            layout: GridLayout::Coefficient,
            points: (0..dim).map(|i| i as f64).collect(),
            weights: vec![1.0; dim],
        },
        basis,
        basis_offsets: offsets,
    })
}
