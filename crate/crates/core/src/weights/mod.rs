//! Weight windows, closed-extension domains and admissibility checks.
//!
//! Everything here is exact arithmetic on the pole lattice of the conormal
//! symbol. The "line" of a weight `gamma` is `(n+1)/2 - gamma`; a function
//! `x^{-q}` near the tip belongs to the weighted space of weight `gamma`
//! exactly when `q` lies left of that line.

mod domain;
mod feasibility;
mod hinfty;
mod interpolation;
mod windows;

pub use domain::{
    asymptotics_in_window, build_domain, AsymptoticsSpace, DomainFlavor, DomainSpec, SobolevCore,
};
pub use feasibility::{pq_feasible, Feasibility, FeasibilityMode, Inequality};
pub use hinfty::{
    check_hinfty_admissible, hinfty_lattice, ConditionReport, HinftyVerdict, PoleCheck,
    PreconditionFailure, Selection,
};
pub use interpolation::{interpolation_descriptor, InterpolationDescriptor, DEFAULT_EPSILON};
pub use windows::{gamma_window, GammaRule, GammaWindow};

use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};

/// The tuple `(n, s, gamma, p, q)` addressing a weighted cone Sobolev space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub n: usize,
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    /// Warped cones (cross-section metric depending on `x`) are not handled.
    #[serde(default)]
    pub h_x_dependent: bool,
}

impl WeightConfig {
    pub fn new(n: usize, s: f64, gamma: f64, p: f64, q: f64) -> Self {
        Self {
            n,
            s,
            gamma,
            p,
            q,
            h_x_dependent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ConeError::InvalidParameter("n must be at least 1".into()));
        }
        if !(self.s.is_finite() && self.gamma.is_finite()) {
            return Err(ConeError::InvalidParameter(
                "s and gamma must be finite".into(),
            ));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(v > 1.0 && v.is_finite()) {
                return Err(ConeError::InvalidParameter(format!(
                    "{name} must lie in (1, inf), got {v}"
                )));
            }
        }
        if self.h_x_dependent {
            return Err(ConeError::Unsupported(
                "cross-section metric depending on x (warped cone)".into(),
            ));
        }
        Ok(())
    }

    /// `(n+1)/2 - gamma`.
    pub fn line(&self) -> f64 {
        line_for(self.n, self.gamma)
    }
}

pub(crate) fn line_for(n: usize, gamma: f64) -> f64 {
    (n as f64 + 1.0) / 2.0 - gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn intersect(&self, other: &OpenInterval) -> OpenInterval {
        OpenInterval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

/// `I_gamma` for `mu = 2` and `J_gamma` for `mu = 4`:
/// `((n+1)/2 - gamma - mu, (n+1)/2 - gamma)`.
pub fn interval_for(config: &WeightConfig, mu: u32) -> OpenInterval {
    let line = config.line();
    OpenInterval::new(line - mu as f64, line)
}

/// Whether `omega(x) x^{-q} ln^k x c(y)` lies in the space of weight `gamma`.
/// The log power does not matter.
pub fn membership_x_power(q_loc: f64, _k: u32, gamma: f64, n: usize) -> bool {
    q_loc < line_for(n, gamma)
}
