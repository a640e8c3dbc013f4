//! Banded solvers for the radial systems.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{ConeError, Result};

/// LU factors of a tridiagonal matrix without pivoting.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    lower: Vec<f64>,
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl TridiagFactor {
    /// `lower[i]` couples row `i + 1` to column `i`; `upper[i]` couples row `i` to column `i + 1`.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(ConeError::ShapeMismatch {
                expected: n.saturating_sub(1),
                got: lower.len().min(upper.len()),
            });
        }
        let mut pivot = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        let mut p = diag[0];
        pivot.push(p);
        for i in 1..n {
            if p == 0.0 || !p.is_finite() {
                return Err(ConeError::LinearSolve(format!(
                    "zero pivot at row {}",
                    i - 1
                )));
            }
            let m = lower[i - 1] / p;
            l.push(m);
            p = diag[i] - m * upper[i - 1];
            pivot.push(p);
        }
        if p == 0.0 || !p.is_finite() {
            return Err(ConeError::LinearSolve(format!(
                "zero pivot at row {}",
                n - 1
            )));
        }
        Ok(Self {
            lower: l,
            upper: upper.to_vec(),
            pivot,
        })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivot.len();
        for i in 1..n {
            rhs[i] -= self.lower[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivot[i];
        }
    }
}

/// Block tridiagonal matrix with square blocks of equal size.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    /// `lower[i]` sits at block position `(i + 1, i)`.
    pub lower: Vec<DMatrix<f64>>,
    pub diag: Vec<DMatrix<f64>>,
    /// `upper[i]` sits at block position `(i, i + 1)`.
    pub upper: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct BlockTridiagFactor {
    lower: Vec<DMatrix<f64>>,
    pivots: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `pivot_i^{-1} upper_i`.
    fill: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn factor(self) -> Result<BlockTridiagFactor> {
        let n = self.diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut fill: Vec<DMatrix<f64>> = Vec::with_capacity(n.saturating_sub(1));
        for (i, d) in self.diag.into_iter().enumerate() {
            let piv = if i == 0 {
                d
            } else {
                d - &self.lower[i - 1] * &fill[i - 1]
            };
            let lu = piv.lu();
            if i + 1 < n {
                let f = lu.solve(&self.upper[i]).ok_or_else(|| {
                    ConeError::LinearSolve(format!("singular pivot block at node {i}"))
                })?;
                fill.push(f);
            } else if !lu.is_invertible() {
                return Err(ConeError::LinearSolve(format!(
                    "singular pivot block at node {i}"
                )));
            }
            pivots.push(lu);
        }
        Ok(BlockTridiagFactor {
            lower: self.lower,
            pivots,
            fill,
        })
    }
}

impl BlockTridiagFactor {
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n = self.pivots.len();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let r = if i == 0 {
                rhs[0].clone()
            } else {
                &rhs[i] - &self.lower[i - 1] * &y[i - 1]
            };
            let yi = self.pivots[i].solve(&r).ok_or_else(|| {
                ConeError::LinearSolve(format!("singular pivot block at node {i}"))
            })?;
            y.push(yi);
        }
        for i in (0..n - 1).rev() {
            let corr = &self.fill[i] * &y[i + 1];
            y[i] -= corr;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tridiagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let lower: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let upper: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(2.5..4.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = diag[i];
            if i + 1 < n {
                dense[(i + 1, i)] = lower[i];
                dense[(i, i + 1)] = upper[i];
            }
        }
        let reference = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let f = TridiagFactor::new(&lower, &diag, &upper).unwrap();
        let mut x = b;
        f.solve_in_place(&mut x);
        for i in 0..n {
            assert!((x[i] - reference[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn block_tridiagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, b) = (12, 3);
        let mut rand_block = |shift: f64| {
            let mut m = DMatrix::from_fn(b, b, |_, _| rng.gen_range(-0.5..0.5));
            for k in 0..b {
                m[(k, k)] += shift;
            }
            m
        };
        let diag: Vec<_> = (0..n).map(|_| rand_block(4.0)).collect();
        let lower: Vec<_> = (0..n - 1).map(|_| rand_block(0.0)).collect();
        let upper: Vec<_> = (0..n - 1).map(|_| rand_block(0.0)).collect();
        let mut dense = DMatrix::zeros(n * b, n * b);
        for i in 0..n {
            dense.view_mut((i * b, i * b), (b, b)).copy_from(&diag[i]);
            if i + 1 < n {
                dense
                    .view_mut(((i + 1) * b, i * b), (b, b))
                    .copy_from(&lower[i]);
                dense
                    .view_mut((i * b, (i + 1) * b), (b, b))
                    .copy_from(&upper[i]);
            }
        }
        let rhs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(b, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let flat = DVector::from_iterator(n * b, rhs.iter().flat_map(|v| v.iter().copied()));
        let reference = dense.lu().solve(&flat).unwrap();
        let f = BlockTridiag { lower, diag, upper }.factor().unwrap();
        let x = f.solve(&rhs).unwrap();
        for i in 0..n {
            for k in 0..b {
                assert!((x[i][k] - reference[i * b + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_system_is_reported() {
        assert!(TridiagFactor::new(&[1.0], &[0.0, 1.0], &[1.0]).is_err());
    }
}
