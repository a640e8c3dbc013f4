use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fractional::{check_sigma, FractionalPower};
use super::grid::{ConeField, ConeGrid};
use super::linalg::{BlockTridiag, BlockTridiagFactor, TridiagFactor};
use super::operator::{assemble_all, InnerBc, RadialOperator};
use crate::error::{ConeError, Result};

/// Magnitude past which a run is declared unstable.
pub const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Equation {
    Heat,
    /// `d_t u = Delta(u^m)`.
    Pme {
        m: f64,
    },
    /// The same flow stepped in `v = u^m`; not conservative, kept for cross-checks.
    PmeVForm {
        m: f64,
    },
    /// `d_t u + (-Delta)^sigma (u^m) = 0`.
    Fpme {
        m: f64,
        sigma: f64,
    },
    /// `d_t u = -Delta^2 u + Delta(u^3 - u)`. `stabilization` adds
    /// `S (u_new - u_old)` to the chemical potential.
    CahnHilliard {
        stabilization: f64,
    },
    /// `d_t u = n u^{-4/(n-1)} Delta u - (n-1)/4 u^{(n-5)/(n-1)} R`.
    Yamabe {
        curvature: ConeField,
    },
}

impl Equation {
    pub fn name(&self) -> &'static str {
        match self {
            Equation::Heat => "heat",
            Equation::Pme { .. } => "pme",
            Equation::PmeVForm { .. } => "pme_v",
            Equation::Fpme { .. } => "fpme",
            Equation::CahnHilliard { .. } => "cahn_hilliard",
            Equation::Yamabe { .. } => "yamabe",
        }
    }

    fn needs_positivity(&self) -> bool {
        matches!(
            self,
            Equation::Pme { .. }
                | Equation::PmeVForm { .. }
                | Equation::Fpme { .. }
                | Equation::Yamabe { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    /// Radial coefficient `max_y m u^{m-1}` per node; modes decouple.
    FrozenCoefficient,
    /// Exact linearization of `u^m` around the previous step; modes couple.
    #[default]
    NewtonOneStep,
}

impl std::str::FromStr for Linearization {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" | "frozen_coefficient" => Ok(Linearization::FrozenCoefficient),
            "newton" | "newton_one_step" => Ok(Linearization::NewtonOneStep),
            other => Err(ConeError::InvalidParameter(format!(
                "unknown linearization '{other}'"
            ))),
        }
    }
}

/// Explicit source `f(t, u)` added to the right-hand side.
pub type Forcing = Arc<dyn Fn(f64, &ConeField) -> ConeField + Send + Sync>;

#[derive(Clone)]
pub struct SolverConfig {
    pub equation: Equation,
    pub dt: f64,
    pub t_end: f64,
    pub bc_inner: InnerBc,
    pub linearization: Linearization,
    pub forcing: Option<Forcing>,
}

impl std::fmt::Debug for SolverConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverConfig")
            .field("equation", &self.equation)
            .field("dt", &self.dt)
            .field("t_end", &self.t_end)
            .field("bc_inner", &self.bc_inner)
            .field("linearization", &self.linearization)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl SolverConfig {
    pub fn new(equation: Equation, dt: f64, t_end: f64) -> Self {
        Self {
            equation,
            dt,
            t_end,
            bc_inner: InnerBc::default(),
            linearization: Linearization::default(),
            forcing: None,
        }
    }

    pub fn with_bc(mut self, bc: InnerBc) -> Self {
        self.bc_inner = bc;
        self
    }

    pub fn with_linearization(mut self, lin: Linearization) -> Self {
        self.linearization = lin;
        self
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConeError::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(ConeError::InvalidParameter(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        let ratio = self.t_end / self.dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ConeError::InvalidParameter(format!(
                "t_end = {} must be a positive multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        match &self.equation {
            Equation::Pme { m } | Equation::PmeVForm { m } if !(*m > 0.0) => Err(
                ConeError::InvalidParameter(format!("m must be positive, got {m}")),
            ),
            Equation::Fpme { m, sigma } => {
                if !(*m > 0.0) {
                    return Err(ConeError::InvalidParameter(format!(
                        "m must be positive, got {m}"
                    )));
                }
                check_sigma(*sigma)
            }
            Equation::CahnHilliard { stabilization } if !(*stabilization >= 0.0) => {
                Err(ConeError::InvalidParameter(format!(
                    "stabilization must be >= 0, got {stabilization}"
                )))
            }
            _ => Ok(()),
        }
    }
}

enum Cache {
    None,
    Heat(Vec<TridiagFactor>),
    Ch(Vec<BlockTridiagFactor>),
    Fractional(FractionalPower),
}

/// Saved states of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<ConeField>,
}

impl Trajectory {
    pub fn last(&self) -> &ConeField {
        self.fields
            .last()
            .expect("trajectory holds the initial state")
    }
}

pub struct Solver<'g> {
    grid: &'g ConeGrid,
    config: SolverConfig,
    ops: Vec<RadialOperator>,
    diags: Vec<Vec<f64>>,
    cache: Cache,
}

impl<'g> Solver<'g> {
    pub fn new(grid: &'g ConeGrid, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let ops = assemble_all(grid, config.bc_inner)?;
        let diags: Vec<Vec<f64>> = ops.iter().map(|o| o.diag()).collect();
        let dt = config.dt;
        let cache = match &config.equation {
            Equation::Heat => Cache::Heat(
                ops.iter()
                    .zip(&diags)
                    .map(|(op, d)| {
                        let off: Vec<f64> = op.faces.iter().map(|a| -dt * a).collect();
                        let diag: Vec<f64> =
                            op.weights.iter().zip(d).map(|(w, d)| w - dt * d).collect();
                        TridiagFactor::new(&off, &diag, &off)
                    })
                    .collect::<Result<_>>()?,
            ),
            Equation::CahnHilliard { stabilization } => {
                grid.require_physical("the Cahn-Hilliard nonlinearity")?;
                Cache::Ch(
                    ops.iter()
                        .zip(&diags)
                        .map(|(op, d)| ch_system(op, d, dt, *stabilization).factor())
                        .collect::<Result<_>>()?,
                )
            }
            Equation::Fpme { .. } => {
                grid.require_physical("the porous medium nonlinearity")?;
                Cache::Fractional(FractionalPower::from_operators(&ops)?)
            }
            Equation::Pme { .. } | Equation::PmeVForm { .. } => {
                grid.require_physical("the porous medium nonlinearity")?;
                Cache::None
            }
            Equation::Yamabe { curvature } => {
                grid.require_physical("the Yamabe nonlinearity")?;
                if grid.n() < 2 {
                    return Err(ConeError::InvalidParameter(
                        "the Yamabe flow needs cross-section dimension n >= 2".into(),
                    ));
                }
                curvature.check_shape(grid)?;
                Cache::None
            }
        };
        Ok(Self {
            grid,
            config,
            ops,
            diags,
            cache,
        })
    }

    pub fn grid(&self) -> &ConeGrid {
        self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn operators(&self) -> &[RadialOperator] {
        &self.ops
    }

    /// One step from `t` to `t + dt`.
    pub fn step(&self, u: &ConeField, t: f64) -> Result<ConeField> {
        u.check_shape(self.grid)?;
        let dt = self.config.dt;
        let source = match &self.config.forcing {
            Some(f) => {
                let s = f(t, u);
                s.check_shape(self.grid)?;
                Some(s)
            }
            None => None,
        };
        let values = if self.grid.spectrum().has_physical_grid() {
            Some(u.values(self.grid))
        } else {
            None
        };
        if self.config.equation.needs_positivity() {
            check_positive(values.as_ref().expect("checked at construction"))?;
        }
        let next = match (&self.config.equation, &self.cache) {
            (Equation::Heat, Cache::Heat(factors)) => self.heat_step(factors, u, source.as_ref()),
            (Equation::Pme { m }, _) => {
                let values = values.as_ref().expect("checked at construction");
                match self.config.linearization {
                    Linearization::NewtonOneStep => {
                        self.pme_newton(*m, u, values, source.as_ref())?
                    }
                    Linearization::FrozenCoefficient => {
                        self.pme_frozen(*m, u, values, source.as_ref())?
                    }
                }
            }
            (Equation::PmeVForm { m }, _) => {
                let values = values.as_ref().expect("checked at construction");
                self.pme_v_step(*m, values, source.as_ref())?
            }
            (Equation::Fpme { m, sigma }, Cache::Fractional(fp)) => {
                let values = values.as_ref().expect("checked at construction");
                self.fpme_step(fp, *m, *sigma, u, values, source.as_ref())
            }
            (Equation::CahnHilliard { .. }, Cache::Ch(factors)) => {
                let values = values.as_ref().expect("checked at construction");
                self.ch_step(factors, u, values, source.as_ref())?
            }
            (Equation::Yamabe { curvature }, _) => {
                let values = values.as_ref().expect("checked at construction");
                self.yamabe_step(curvature, u, values, source.as_ref())?
            }
            _ => unreachable!("cache matches the equation"),
        };
        let t_next = t + dt;
        let mag = next.max_abs();
        if !next.is_finite() || mag > BLOWUP {
            return Err(ConeError::Instability {
                t: t_next,
                magnitude: if mag.is_finite() { mag } else { f64::INFINITY },
            });
        }
        if self.config.equation.needs_positivity() {
            check_positive(&next.values(self.grid))?;
        }
        Ok(next)
    }

    /// Runs to `t_end`, saving the initial state and every `save_every`-th step
    /// (the final state is always saved).
    pub fn run(&self, u0: &ConeField, save_every: usize) -> Result<Trajectory> {
        let save_every = save_every.max(1);
        let n = self.config.n_steps();
        let mut times = vec![0.0];
        let mut fields = vec![u0.clone()];
        let mut u = u0.clone();
        for k in 0..n {
            let t = k as f64 * self.config.dt;
            u = self.step(&u, t)?;
            if (k + 1) % save_every == 0 || k + 1 == n {
                times.push((k + 1) as f64 * self.config.dt);
                fields.push(u.clone());
            }
        }
        Ok(Trajectory { times, fields })
    }

    fn columns(
        &self,
        f: impl Fn(usize, &RadialOperator) -> Result<Vec<f64>> + Sync,
    ) -> Result<Vec<Vec<f64>>> {
        let spectrum = self.grid.spectrum();
        (0..self.grid.basis_len())
            .into_par_iter()
            .map(|b| f(b, &self.ops[spectrum.mode_of_basis(b)]))
            .collect()
    }

    fn column(field: &ConeField, b: usize) -> Vec<f64> {
        field.coeffs.column(b).iter().copied().collect()
    }

    fn from_columns(&self, cols: Vec<Vec<f64>>) -> ConeField {
        let mut out = ConeField::zeros(self.grid);
        for (b, c) in cols.into_iter().enumerate() {
            out.coeffs.column_mut(b).copy_from_slice(&c);
        }
        out
    }

    /// `u_old + dt (L w + s)` with `L` in flux form: the conservative update.
    fn conservative_update(
        &self,
        u: &ConeField,
        w: &ConeField,
        source: Option<&ConeField>,
    ) -> ConeField {
        let dt = self.config.dt;
        let spectrum = self.grid.spectrum();
        let mut out = u.clone();
        for b in 0..self.grid.basis_len() {
            let op = &self.ops[spectrum.mode_of_basis(b)];
            let lw = op.apply(&Self::column(w, b));
            for (i, v) in lw.iter().enumerate() {
                out.coeffs[(i, b)] += dt * v;
            }
        }
        if let Some(s) = source {
            out.coeffs += dt * &s.coeffs;
        }
        out
    }

    fn heat_step(
        &self,
        factors: &[TridiagFactor],
        u: &ConeField,
        source: Option<&ConeField>,
    ) -> ConeField {
        let rhs = self.increment_rhs(Some(u), source);
        let cols = self
            .columns(|b, _| {
                let mut r = Self::column(&rhs, b);
                factors[self.grid.spectrum().mode_of_basis(b)].solve_in_place(&mut r);
                Ok(r)
            })
            .expect("tridiagonal solves do not fail after factorization");
        let mut w = self.from_columns(cols);
        w.coeffs += &u.coeffs;
        self.conservative_update(u, &w, source)
    }

    /// `K_i = P diag(d_i) S`: multiplication by a pointwise coefficient, projected.
    fn pointwise_blocks(&self, coef: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let at = self.grid.analysis().transpose();
        let st = self.grid.synth().transpose();
        (0..coef.nrows())
            .into_par_iter()
            .map(|i| {
                let mut scaled = at.clone();
                for (g, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= coef[(i, g)];
                }
                scaled * &st
            })
            .collect()
    }

    fn mode_diag(&self, i: usize) -> DVector<f64> {
        let spectrum = self.grid.spectrum();
        DVector::from_fn(self.grid.basis_len(), |b, _| {
            self.diags[spectrum.mode_of_basis(b)][i]
        })
    }

    fn flux_of(&self, field: &ConeField) -> ConeField {
        let spectrum = self.grid.spectrum();
        let mut out = ConeField::zeros(self.grid);
        for b in 0..self.grid.basis_len() {
            let op = &self.ops[spectrum.mode_of_basis(b)];
            out.coeffs
                .column_mut(b)
                .copy_from_slice(&op.flux_apply(&Self::column(field, b)));
        }
        out
    }

    fn solve_blocks(&self, system: BlockTridiag, rhs: &ConeField) -> Result<ConeField> {
        let factor = system.factor()?;
        let rows: Vec<DVector<f64>> = (0..rhs.n_x())
            .map(|i| rhs.coeffs.row(i).transpose())
            .collect();
        let sol = factor.solve(&rows)?;
        let mut out = ConeField::zeros(self.grid);
        for (i, r) in sol.iter().enumerate() {
            out.coeffs.row_mut(i).copy_from(&r.transpose());
        }
        Ok(out)
    }

    /// `dt (A g + W s)`: right-hand side for the increment `u_new - u_old`.
    fn increment_rhs(&self, g: Option<&ConeField>, source: Option<&ConeField>) -> ConeField {
        let dt = self.config.dt;
        let w = self.grid.radial_weights();
        let mut rhs = match g {
            Some(g) => self.flux_of(g),
            None => ConeField::zeros(self.grid),
        };
        if let Some(s) = source {
            for (i, mut row) in rhs.coeffs.row_iter_mut().enumerate() {
                row += w[i] * s.coeffs.row(i);
            }
        }
        rhs.coeffs *= dt;
        rhs
    }

    fn power_field(&self, values: &DMatrix<f64>, m: f64) -> ConeField {
        ConeField::from_values(self.grid, &values.map(|v| v.powf(m)))
    }

    fn pme_newton(
        &self,
        m: f64,
        u: &ConeField,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> Result<ConeField> {
        let dt = self.config.dt;
        let grid = self.grid;
        let d = values.map(|v| m * v.powf(m - 1.0));
        let f = self.power_field(values, m);
        let k = self.pointwise_blocks(&d);
        let n = grid.n_x();
        let nb = grid.basis_len();
        let w = grid.radial_weights();
        let faces = &self.ops[0].faces;
        let diag = (0..n)
            .map(|i| {
                let mut blk = -dt * &k[i];
                let dg = self.mode_diag(i);
                for (r, mut row) in blk.row_iter_mut().enumerate() {
                    row *= dg[r];
                }
                blk + DMatrix::identity(nb, nb) * w[i]
            })
            .collect();
        let lower = (0..n - 1).map(|f| -dt * faces[f] * &k[f]).collect();
        let upper = (0..n - 1).map(|f| -dt * faces[f] * &k[f + 1]).collect();
        let rhs = self.increment_rhs(Some(&f), source);
        let delta = self.solve_blocks(BlockTridiag { lower, diag, upper }, &rhs)?;
        let mut flux_var = f;
        for i in 0..n {
            let kd = &k[i] * delta.coeffs.row(i).transpose();
            for b in 0..nb {
                flux_var.coeffs[(i, b)] += kd[b];
            }
        }
        Ok(self.conservative_update(u, &flux_var, source))
    }

    fn pme_frozen(
        &self,
        m: f64,
        u: &ConeField,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> Result<ConeField> {
        let dt = self.config.dt;
        let grid = self.grid;
        let n = grid.n_x();
        let dbar: Vec<f64> = (0..n)
            .map(|i| {
                values
                    .row(i)
                    .iter()
                    .fold(0.0f64, |a, v| a.max(m * v.powf(m - 1.0)))
            })
            .collect();
        let f = self.power_field(values, m);
        let rhs = self.increment_rhs(Some(&f), source);
        let w = grid.radial_weights();
        let cols = self.columns(|b, op| {
            let d = &self.diags[grid.spectrum().mode_of_basis(b)];
            let diag: Vec<f64> = (0..n).map(|i| w[i] - dt * d[i] * dbar[i]).collect();
            let lower: Vec<f64> = (0..n - 1).map(|f| -dt * op.faces[f] * dbar[f]).collect();
            let upper: Vec<f64> = (0..n - 1)
                .map(|f| -dt * op.faces[f] * dbar[f + 1])
                .collect();
            let factor = TridiagFactor::new(&lower, &diag, &upper)?;
            let mut r = Self::column(&rhs, b);
            factor.solve_in_place(&mut r);
            Ok(r)
        })?;
        let delta = self.from_columns(cols);
        let mut flux_var = f;
        for i in 0..n {
            for b in 0..grid.basis_len() {
                flux_var.coeffs[(i, b)] += dbar[i] * delta.coeffs[(i, b)];
            }
        }
        Ok(self.conservative_update(u, &flux_var, source))
    }

    fn fpme_step(
        &self,
        fp: &FractionalPower,
        m: f64,
        sigma: f64,
        u: &ConeField,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> ConeField {
        let dt = self.config.dt;
        let grid = self.grid;
        let dbar = values
            .iter()
            .fold(0.0f64, |a, v| a.max(m * v.powf(m - 1.0)));
        let f = self.power_field(values, m);
        let power = |lam: f64| if lam == 0.0 { 0.0 } else { lam.powf(sigma) };
        let cols = self
            .columns(|b, _| {
                let j = grid.spectrum().mode_of_basis(b);
                let mut delta = fp.apply_fn(j, &Self::column(&f, b), |lam| {
                    -dt * power(lam) / (1.0 + dt * dbar * power(lam))
                });
                if let Some(s) = source {
                    let ds = fp.apply_fn(j, &Self::column(s, b), |lam| {
                        dt / (1.0 + dt * dbar * power(lam))
                    });
                    delta.iter_mut().zip(ds).for_each(|(d, e)| *d += e);
                }
                Ok(delta)
            })
            .expect("spectral solves do not fail");
        let delta = self.from_columns(cols);
        let mut flux_var = f;
        flux_var.coeffs += dbar * &delta.coeffs;
        let mut out = u.clone();
        for b in 0..grid.basis_len() {
            let j = grid.spectrum().mode_of_basis(b);
            let r = fp.apply_mode(j, sigma, &Self::column(&flux_var, b));
            for (i, v) in r.iter().enumerate() {
                out.coeffs[(i, b)] -= dt * v;
            }
        }
        if let Some(s) = source {
            out.coeffs += dt * &s.coeffs;
        }
        out
    }

    fn ch_step(
        &self,
        factors: &[BlockTridiagFactor],
        u: &ConeField,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> Result<ConeField> {
        let dt = self.config.dt;
        let grid = self.grid;
        let n = grid.n_x();
        let w = grid.radial_weights();
        let mut f = self.power_field(values, 3.0);
        f.coeffs -= &u.coeffs;
        let au = self.flux_of(u);
        let cols = self.columns(|b, _| {
            let j = grid.spectrum().mode_of_basis(b);
            let rhs: Vec<DVector<f64>> = (0..n)
                .map(|i| {
                    let s = source.map_or(0.0, |s| s.coeffs[(i, b)]);
                    DVector::from_vec(vec![
                        dt * w[i] * s,
                        w[i] * f.coeffs[(i, b)] - au.coeffs[(i, b)],
                    ])
                })
                .collect();
            let sol = factors[j].solve(&rhs)?;
            Ok(sol.iter().map(|v| v[1]).collect())
        })?;
        let mu = self.from_columns(cols);
        Ok(self.conservative_update(u, &mu, source))
    }

    fn yamabe_step(
        &self,
        curvature: &ConeField,
        u: &ConeField,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> Result<ConeField> {
        let grid = self.grid;
        let nf = grid.n() as f64;
        let c = values.map(|v| nf * v.powf(-4.0 / (nf - 1.0)));
        let r = curvature.values(grid);
        let src_vals = values.zip_map(&r, |v, r| {
            -(nf - 1.0) / 4.0 * v.powf((nf - 5.0) / (nf - 1.0)) * r
        });
        let mut src = ConeField::from_values(grid, &src_vals);
        if let Some(s) = source {
            src.coeffs += &s.coeffs;
        }
        self.multiplier_solve(&c, u, Some(&src))
    }

    /// `d_t v = m v^{(m-1)/m} Delta v` for `v = u^m`, mapped back to `u`.
    fn pme_v_step(
        &self,
        m: f64,
        values: &DMatrix<f64>,
        source: Option<&ConeField>,
    ) -> Result<ConeField> {
        let grid = self.grid;
        let c = values.map(|v| m * v.powf(m - 1.0));
        let v_old = self.power_field(values, m);
        let v_new = self.multiplier_solve(&c, &v_old, source)?;
        let back = v_new.values(grid);
        if let Some((i, g)) = first_nonpositive(&back) {
            return Err(ConeError::PositivityLost {
                node: i,
                point: g,
                value: back[(i, g)],
            });
        }
        Ok(self.power_field(&back, 1.0 / m))
    }

    /// Solves `v - dt P(c S(L v)) = base + dt src` with `c` frozen pointwise.
    fn multiplier_solve(
        &self,
        c: &DMatrix<f64>,
        base: &ConeField,
        src: Option<&ConeField>,
    ) -> Result<ConeField> {
        let dt = self.config.dt;
        let grid = self.grid;
        let n = grid.n_x();
        let nb = grid.basis_len();
        let k = self.pointwise_blocks(c);
        let w = grid.radial_weights();
        let faces = &self.ops[0].faces;
        let diag = (0..n)
            .map(|i| {
                let mut blk = -dt * &k[i];
                let dg = self.mode_diag(i);
                for (col, mut cv) in blk.column_iter_mut().enumerate() {
                    cv *= dg[col];
                }
                blk + DMatrix::identity(nb, nb) * w[i]
            })
            .collect();
        let lower = (0..n - 1).map(|f| -dt * faces[f] * &k[f + 1]).collect();
        let upper = (0..n - 1).map(|f| -dt * faces[f] * &k[f]).collect();
        // solve for the increment so that stationary data stay exact
        let mut rhs = self.increment_rhs(None, src);
        let ab = self.flux_of(base);
        for i in 0..n {
            let row = dt * &k[i] * ab.coeffs.row(i).transpose();
            for b in 0..nb {
                rhs.coeffs[(i, b)] += row[b];
            }
        }
        let mut out = self.solve_blocks(BlockTridiag { lower, diag, upper }, &rhs)?;
        out.coeffs += &base.coeffs;
        Ok(out)
    }
}

/// Coupled system of one mode for the increment `d = u_new - u_old` and `mu`:
/// `W d - dt A mu = dt W s`, `A d + W mu - S W d = W f - A u_old`.
fn ch_system(op: &RadialOperator, d: &[f64], dt: f64, s: f64) -> BlockTridiag {
    let n = op.n_x();
    let w = &op.weights;
    let diag = (0..n)
        .map(|i| DMatrix::from_row_slice(2, 2, &[w[i], -dt * d[i], d[i] - s * w[i], w[i]]))
        .collect();
    let off: Vec<DMatrix<f64>> = op
        .faces
        .iter()
        .map(|a| DMatrix::from_row_slice(2, 2, &[0.0, -dt * a, *a, 0.0]))
        .collect();
    BlockTridiag {
        lower: off.clone(),
        diag,
        upper: off,
    }
}

fn first_nonpositive(values: &DMatrix<f64>) -> Option<(usize, usize)> {
    (0..values.nrows())
        .flat_map(|i| (0..values.ncols()).map(move |g| (i, g)))
        .find(|&(i, g)| !(values[(i, g)] > 0.0))
}

fn check_positive(values: &DMatrix<f64>) -> Result<()> {
    match first_nonpositive(values) {
        Some((i, g)) => Err(ConeError::PositivityLost {
            node: i,
            point: g,
            value: values[(i, g)],
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::diagnostics::{energy_phi, mass};
    use crate::spectrum::{CrossSectionKind, CrossSectionSpectrum};
    use std::f64::consts::PI;

    fn circle(scale: f64, x_min: f64, n_x: usize) -> ConeGrid {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Circle { scale }, 3).unwrap();
        ConeGrid::new(s, x_min, n_x).unwrap()
    }

    fn smooth(g: &ConeGrid) -> ConeField {
        ConeField::from_modes(g, |x, b| match b {
            0 => 2.0 + (PI * x).cos(),
            1 => 0.3 * x.powi(2) * (1.0 - x).powi(2),
            _ => 0.0,
        })
    }

    fn positive(g: &ConeGrid) -> ConeField {
        ConeField::from_physical(g, |x, k| {
            let th = g.spectrum().grid().points[k];
            1.0 + 0.4 * (PI * x).cos() + 0.2 * x * x * th.cos()
        })
        .unwrap()
    }

    fn dense_exp_reference(g: &ConeGrid, u0: &ConeField, t: f64) -> ConeField {
        let ops = assemble_all(g, InnerBc::AsymptoticRobin).unwrap();
        let mut out = ConeField::zeros(g);
        for b in 0..g.basis_len() {
            let l = ops[g.spectrum().mode_of_basis(b)].to_dense();
            let e = (l * t).exp();
            out.coeffs.set_column(b, &(e * u0.coeffs.column(b)));
        }
        out
    }

    #[test]
    fn pme_keeps_constants() {
        let g = circle(2.0, 1e-3, 64);
        for lin in [
            Linearization::NewtonOneStep,
            Linearization::FrozenCoefficient,
        ] {
            for m in [0.5, 2.0, 3.0] {
                let cfg =
                    SolverConfig::new(Equation::Pme { m }, 1e-3, 1e-2).with_linearization(lin);
                let s = Solver::new(&g, cfg).unwrap();
                let u = ConeField::constant(&g, 1.3);
                let v = s.step(&u, 0.0).unwrap();
                let d = (&v.coeffs - &u.coeffs).abs().max();
                assert!(d < 1e-13, "{lin:?} m={m}: {d}");
            }
        }
    }

    #[test]
    fn yamabe_flat_data_is_stationary() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim: 2 }, 3).unwrap();
        let g = ConeGrid::new(s, 1e-3, 64).unwrap();
        let curvature = ConeField::zeros(&g);
        let cfg = SolverConfig::new(Equation::Yamabe { curvature }, 1e-3, 1e-2);
        let solver = Solver::new(&g, cfg).unwrap();
        let u = ConeField::constant(&g, 1.0);
        let v = solver.step(&u, 0.0).unwrap();
        let d = (&v.coeffs - &u.coeffs).abs().max();
        assert!(d < 1e-13, "{d}");
    }

    #[test]
    fn heat_tracks_matrix_exponential() {
        // implicit Euler: error about dt t |L^2 u0| / 2, so the data are kept mild
        let g = circle(2.0, 1e-3, 64);
        let u0 = ConeField::from_modes(&g, |x, b| match b {
            0 => 1.0 + 0.05 * (PI * x).cos(),
            1 => 0.01 * x.powi(2) * (1.0 - x).powi(2),
            _ => 0.0,
        });
        let cfg = SolverConfig::new(Equation::Heat, 1e-4, 1e-3);
        let traj = Solver::new(&g, cfg).unwrap().run(&u0, 10).unwrap();
        let reference = dense_exp_reference(&g, &u0, 1e-3);
        let err = (&traj.last().coeffs - &reference.coeffs).abs().max();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn heat_relative_error_at_longer_times() {
        let g = circle(2.0, 1e-3, 64);
        let u0 = smooth(&g);
        let cfg = SolverConfig::new(Equation::Heat, 1e-4, 1e-2);
        let traj = Solver::new(&g, cfg).unwrap().run(&u0, 100).unwrap();
        let reference = dense_exp_reference(&g, &u0, 1e-2);
        let err =
            (&traj.last().coeffs - &reference.coeffs).abs().max() / reference.coeffs.abs().max();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn conservative_schemes_keep_mass() {
        let g = circle(2.0, 1e-2, 64);
        let u0 = positive(&g);
        let m0 = mass(&g, &u0);
        let equations = [
            (Equation::Pme { m: 0.5 }, Linearization::NewtonOneStep),
            (Equation::Pme { m: 2.0 }, Linearization::NewtonOneStep),
            (Equation::Pme { m: 3.0 }, Linearization::FrozenCoefficient),
            (
                Equation::Fpme { m: 2.0, sigma: 0.5 },
                Linearization::NewtonOneStep,
            ),
            (
                Equation::CahnHilliard { stabilization: 2.0 },
                Linearization::NewtonOneStep,
            ),
        ];
        for (eq, lin) in equations {
            let name = eq.name();
            let cfg = SolverConfig::new(eq, 1e-4, 1e-2).with_linearization(lin);
            let traj = Solver::new(&g, cfg).unwrap().run(&u0, 10).unwrap();
            for (k, u) in traj.fields.iter().enumerate() {
                let drift = (mass(&g, u) - m0).abs() / m0.abs();
                assert!(drift < 1e-12 * (1 + 10 * k) as f64, "{name}: {drift:e}");
            }
        }
    }

    #[test]
    fn cahn_hilliard_energy_decreases() {
        let g = circle(2.0, 1e-2, 64);
        let u0 = ConeField::from_physical(&g, |x, k| {
            let th = g.spectrum().grid().points[k];
            0.3 * (2.0 * PI * x).cos() + 0.2 * x * th.sin()
        })
        .unwrap();
        let cfg = SolverConfig::new(Equation::CahnHilliard { stabilization: 2.0 }, 1e-4, 0.05);
        let solver = Solver::new(&g, cfg).unwrap();
        let traj = solver.run(&u0, 1).unwrap();
        let e: Vec<f64> = traj
            .fields
            .iter()
            .map(|u| energy_phi(&g, u, solver.operators()).unwrap())
            .collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        assert!(e[e.len() - 1] < e[0]);
    }

    #[test]
    fn v_form_agrees_with_conservative_form() {
        // the round trip through u^m is exact only when the products stay resolved
        let g = circle(2.0, 1e-2, 64);
        let u0 = ConeField::from_modes(&g, |x, b| if b == 0 { 3.0 + (PI * x).cos() } else { 0.0 });
        let run = |eq| {
            let cfg = SolverConfig::new(eq, 1e-4, 1e-2);
            Solver::new(&g, cfg).unwrap().run(&u0, 100).unwrap()
        };
        let a = run(Equation::Pme { m: 2.0 });
        let b = run(Equation::PmeVForm { m: 2.0 });
        let d = (&a.last().coeffs - &b.last().coeffs).abs().max();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn forcing_adds_mass() {
        let g = circle(2.0, 1e-2, 32);
        let u0 = ConeField::constant(&g, 1.0);
        let forcing: Forcing = Arc::new(|_, u: &ConeField| {
            let mut f = u.clone();
            f.coeffs.fill(0.0);
            f.coeffs.column_mut(0).fill(1.0);
            f
        });
        let cfg = SolverConfig::new(Equation::Heat, 1e-3, 0.1).with_forcing(forcing);
        let traj = Solver::new(&g, cfg).unwrap().run(&u0, 100).unwrap();
        let e0 = g.spectrum().basis_vector(0)[0];
        let gained = mass(&g, traj.last()) - mass(&g, &u0);
        let expected = 0.1 * e0 * g.volume();
        assert!(
            (gained - expected).abs() < 1e-12 * expected,
            "{gained} {expected}"
        );
    }

    #[test]
    fn positivity_loss_is_reported() {
        let g = circle(2.0, 1e-2, 16);
        let cfg = SolverConfig::new(Equation::Pme { m: 2.0 }, 1e-3, 1e-2);
        let solver = Solver::new(&g, cfg).unwrap();
        let mut u = ConeField::constant(&g, 1.0);
        u.coeffs.column_mut(0).fill(0.0);
        assert!(matches!(
            solver.step(&u, 0.0),
            Err(ConeError::PositivityLost { node: 0, .. })
        ));
    }

    #[test]
    fn blowup_is_detected() {
        let g = circle(2.0, 1e-2, 16);
        let forcing: Forcing = Arc::new(|_, u: &ConeField| {
            let mut f = u.clone();
            f.coeffs *= 1e15;
            f
        });
        let cfg = SolverConfig::new(Equation::Heat, 1e-1, 1.0).with_forcing(forcing);
        let solver = Solver::new(&g, cfg).unwrap();
        let r = solver.run(&ConeField::constant(&g, 1.0), 1);
        assert!(matches!(r, Err(ConeError::Instability { .. })), "{r:?}");
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let g = circle(2.0, 1e-2, 16);
        let bad = [
            SolverConfig::new(Equation::Heat, 0.0, 1.0),
            SolverConfig::new(Equation::Heat, 1e-3, -1.0),
            SolverConfig::new(Equation::Heat, 0.4, 1.0),
            SolverConfig::new(Equation::Pme { m: 0.0 }, 1e-3, 1.0),
            SolverConfig::new(Equation::Fpme { m: 1.0, sigma: 1.5 }, 1e-3, 1.0),
            SolverConfig::new(
                Equation::CahnHilliard {
                    stabilization: -1.0,
                },
                1e-3,
                1.0,
            ),
            SolverConfig::new(
                Equation::Yamabe {
                    curvature: ConeField::zeros(&g),
                },
                1e-3,
                1.0,
            ),
        ];
        for cfg in bad {
            assert!(Solver::new(&g, cfg).is_err());
        }
        assert_eq!(
            "newton".parse::<Linearization>().unwrap(),
            Linearization::NewtonOneStep
        );
        assert!("exact".parse::<Linearization>().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let g = circle(2.0, 1e-2, 48);
        let u0 = positive(&g);
        let cfg = SolverConfig::new(Equation::Pme { m: 2.0 }, 1e-4, 2e-3);
        let a = Solver::new(&g, cfg.clone()).unwrap().run(&u0, 5).unwrap();
        let b = Solver::new(&g, cfg).unwrap().run(&u0, 5).unwrap();
        assert_eq!(a.times, b.times);
        assert!(a.fields.iter().zip(&b.fields).all(|(x, y)| x == y));
    }
}
