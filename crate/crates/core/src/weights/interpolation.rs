use serde::{Deserialize, Serialize};

use super::{AsymptoticsSpace, DomainSpec, SobolevCore, WeightConfig};
use crate::error::{ConeError, Result};
use crate::mellin::MellinSymbol;
use crate::spectrum::CrossSectionSpectrum;

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Two-sided bracket of the real interpolation space
/// `(H^{s,gamma}_p, D)_{1-1/q, q}` by cone Sobolev spaces plus asymptotics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationDescriptor {
    pub epsilon: f64,
    /// Smaller space: exponents `s + 2 - 2/q + eps`, `gamma + 2 - 2/q + eps`.
    pub inner_core: SobolevCore,
    /// Larger space: exponents `s + 2 - 2/q - eps`, `gamma + 2 - 2/q - eps`.
    pub outer_core: SobolevCore,
    /// `(n+1)/2 - gamma - 2 + 2/q + eps`.
    pub threshold: f64,
    /// Largest `r` with `q_r^- > threshold` (0 when no such `j >= 1`).
    pub r: usize,
    pub retained: Vec<AsymptoticsSpace>,
    pub retains_constants: bool,
}

pub fn interpolation_descriptor(
    config: &WeightConfig,
    spectrum: &CrossSectionSpectrum,
    domain: &DomainSpec,
    epsilon: f64,
) -> Result<InterpolationDescriptor> {
    config.validate()?;
    if domain.order_mu != 2 {
        return Err(ConeError::InvalidParameter(
            "interpolation is described for extensions of Delta (mu = 2)".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ConeError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let theta = 2.0 - 2.0 / config.q;
    if epsilon >= theta {
        return Err(ConeError::InvalidParameter(format!(
            "epsilon {epsilon} >= 2 - 2/q = {theta}: the bracket degenerates"
        )));
    }
    let threshold = config.line() - 2.0 + 2.0 / config.q + epsilon;
    if threshold >= 0.0 {
        return Err(ConeError::InvalidParameter(format!(
            "epsilon {epsilon} pushes the shifted line to {threshold} >= 0: the bracket degenerates"
        )));
    }
    let sym = MellinSymbol::laplacian(spectrum);
    let r = (1..spectrum.n_modes())
        .take_while(|&j| sym.q_minus(j) > threshold)
        .last()
        .unwrap_or(0);
    let retained = domain
        .selected
        .iter()
        .filter(|a| a.mode >= 1 && a.mode <= r && (a.exponent - sym.q_minus(a.mode)).abs() < 1e-9)
        .cloned()
        .collect();
    let core = |sign: f64| SobolevCore {
        s: config.s + theta + sign * epsilon,
        gamma: config.gamma + theta + sign * epsilon,
        p: config.p,
    };
    Ok(InterpolationDescriptor {
        epsilon,
        inner_core: core(1.0),
        outer_core: core(-1.0),
        threshold,
        r,
        retained,
        retains_constants: domain.underline_e0,
    })
}
