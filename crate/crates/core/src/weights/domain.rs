use serde::{Deserialize, Serialize};

use super::{interval_for, OpenInterval, WeightConfig};
use crate::error::{ConeError, Result};
use crate::mellin::{MellinSymbol, PoleLattice, SymbolOrder, POLE_TOL};
use crate::spectrum::CrossSectionSpectrum;

/// Span of `omega(x) x^{-q} ln^k x e(y)`, `e` in `E_mode`, `k <= log_power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsSpace {
    pub exponent: f64,
    pub mode: usize,
    pub log_power: u32,
    pub dimension: usize,
}

/// `H^{s+mu, gamma+mu}_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevCore {
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainFlavor {
    Minimal,
    Maximal,
    /// Core plus the constants near the tip.
    Constants,
    /// Core plus every `E_{q_j^-}`, `1 <= j <= k`, plus constants.
    TipAsymptotics,
    /// Core plus every `E_{q_j^-}`, `j >= 1`, inside `I_gamma`, plus constants.
    Nested,
    /// Domain of the square of the `Constants` extension.
    ChSquare,
    Custom,
}

impl std::str::FromStr for DomainFlavor {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "minimal" => DomainFlavor::Minimal,
            "maximal" => DomainFlavor::Maximal,
            "constants" => DomainFlavor::Constants,
            "tip" => DomainFlavor::TipAsymptotics,
            "nested" => DomainFlavor::Nested,
            "ch-square" => DomainFlavor::ChSquare,
            other => {
                return Err(ConeError::InvalidParameter(format!(
                    "unknown domain flavor '{other}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub core: SobolevCore,
    pub order_mu: u32,
    pub n: usize,
    pub gamma: f64,
    pub window: OpenInterval,
    pub selected: Vec<AsymptoticsSpace>,
    pub flavor: DomainFlavor,
    /// `omega(x) e(y)` with `e` constant: the constants slice at the pole 0.
    pub underline_e0: bool,
}

impl DomainSpec {
    pub fn selects(&self, exponent: f64, mode: usize) -> bool {
        self.selected
            .iter()
            .any(|a| a.mode == mode && (a.exponent - exponent).abs() < POLE_TOL)
    }

    /// Adds a full asymptotics space from the window (used for perturbation studies).
    pub fn with_space(mut self, space: AsymptoticsSpace) -> Result<Self> {
        if !self.window.contains(space.exponent) {
            return Err(ConeError::InvalidParameter(format!(
                "exponent {} lies outside the window ({}, {})",
                space.exponent, self.window.lo, self.window.hi
            )));
        }
        if !self.selects(space.exponent, space.mode) {
            self.selected.push(space);
            self.selected
                .sort_by(|a, b| a.exponent.total_cmp(&b.exponent).then(a.mode.cmp(&b.mode)));
            self.flavor = DomainFlavor::Custom;
        }
        Ok(self)
    }
}

fn symbol_for(spectrum: &CrossSectionSpectrum, mu: u32) -> Result<MellinSymbol<'_>> {
    match mu {
        2 => Ok(MellinSymbol::new(spectrum, SymbolOrder::Laplacian)),
        4 => Ok(MellinSymbol::new(spectrum, SymbolOrder::BiLaplacian)),
        _ => Err(ConeError::InvalidParameter(format!(
            "order mu must be 2 or 4, got {mu}"
        ))),
    }
}

fn spaces_of(
    lattice: &PoleLattice,
    spectrum: &CrossSectionSpectrum,
    window: &OpenInterval,
) -> Vec<AsymptoticsSpace> {
    let mut out = Vec::new();
    for p in lattice.iter().filter(|p| window.contains(p.q)) {
        for &mode in &p.modes {
            let log_power = p.mode_order(mode) - 1;
            out.push(AsymptoticsSpace {
                exponent: p.q,
                mode,
                log_power,
                dimension: spectrum.multiplicities()[mode] * (1 + log_power as usize),
            });
        }
    }
    out
}

/// One space per (pole, contributing mode) strictly inside the open window.
/// A pole within tolerance of an endpoint is an error.
pub fn asymptotics_in_window(
    sym: &MellinSymbol<'_>,
    window: OpenInterval,
) -> Result<Vec<AsymptoticsSpace>> {
    let lattice = sym.poles_of_inverse(window.lo, window.hi)?;
    for end in [window.lo, window.hi] {
        if lattice.find(end).is_some() {
            return Err(ConeError::WeightOnPole { location: end });
        }
    }
    Ok(spaces_of(&lattice, sym.spectrum(), &window))
}

fn check_lines(sym: &MellinSymbol<'_>, lines: &[f64]) -> Result<()> {
    let lo = lines.iter().copied().fold(f64::INFINITY, f64::min) - 0.5;
    let hi = lines.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.5;
    let lattice = sym.poles_of_inverse(lo, hi)?;
    for &l in lines {
        if lattice.find(l).is_some() {
            return Err(ConeError::WeightOnPole { location: l });
        }
    }
    Ok(())
}

/// Builds the closed-extension domain of `Delta` (`mu = 2`) or `Delta^2`
/// (`mu = 4`) in the space of weight `config.gamma`.
pub fn build_domain(
    config: &WeightConfig,
    spectrum: &CrossSectionSpectrum,
    flavor: DomainFlavor,
    mu: u32,
) -> Result<DomainSpec> {
    config.validate()?;
    if config.n != spectrum.dim_n() {
        return Err(ConeError::InvalidParameter(format!(
            "config n = {} but cross-section has dimension {}",
            config.n,
            spectrum.dim_n()
        )));
    }
    let preset_mu = match flavor {
        DomainFlavor::ChSquare => 4,
        DomainFlavor::Minimal | DomainFlavor::Maximal | DomainFlavor::Custom => mu,
        _ => 2,
    };
    if preset_mu != mu {
        return Err(ConeError::IncompatiblePreset {
            preset: format!("{flavor:?}"),
            reason: format!("preset is defined for mu = {preset_mu}, got mu = {mu}"),
        });
    }
    let sym = symbol_for(spectrum, mu)?;
    let line = config.line();
    let window = interval_for(config, mu);
    let mut lines = vec![line, line - 2.0];
    if mu == 4 {
        lines.push(line - 4.0);
    }
    check_lines(&sym, &lines)?;
    let all = asymptotics_in_window(&sym, window)?;
    let core = SobolevCore {
        s: config.s + mu as f64,
        gamma: config.gamma + mu as f64,
        p: config.p,
    };
    let n = config.n;
    let incompatible = |reason: String| ConeError::IncompatiblePreset {
        preset: format!("{flavor:?}"),
        reason,
    };

    let mut underline_e0 = false;
    let selected: Vec<AsymptoticsSpace> = match flavor {
        DomainFlavor::Minimal | DomainFlavor::Custom => Vec::new(),
        DomainFlavor::Maximal => all,
        DomainFlavor::Constants | DomainFlavor::TipAsymptotics | DomainFlavor::Nested => {
            if !window.contains(0.0) {
                return Err(incompatible(format!(
                    "the constants (pole 0) are not in I_gamma = ({}, {})",
                    window.lo, window.hi
                )));
            }
            underline_e0 = true;
            let minus: Vec<AsymptoticsSpace> = all
                .into_iter()
                .filter(|a| a.mode >= 1 && (a.exponent - sym.q_minus(a.mode)).abs() < POLE_TOL)
                .collect();
            match flavor {
                DomainFlavor::Constants => Vec::new(),
                DomainFlavor::Nested => minus,
                _ => {
                    let lap = MellinSymbol::laplacian(spectrum);
                    let k = (1..spectrum.n_modes())
                        .take_while(|&j| lap.q_minus(j) > -2.0)
                        .last()
                        .unwrap_or(0);
                    if k == 0 {
                        return Err(incompatible("k = 0: no q_j^- in (-2, 0)".into()));
                    }
                    for j in 1..=k {
                        if !minus.iter().any(|a| a.mode == j) {
                            return Err(incompatible(format!(
                                "q_{j}^- = {} is not inside I_gamma",
                                lap.q_minus(j)
                            )));
                        }
                    }
                    minus.into_iter().filter(|a| a.mode <= k).collect()
                }
            }
        }
        DomainFlavor::ChSquare => {
            let inner = OpenInterval::new(window.lo, line - 2.0);
            if !OpenInterval::new(line - 2.0, line).contains(0.0) {
                return Err(incompatible(format!(
                    "the constants (pole 0) are not in [{}, {})",
                    line - 2.0,
                    line
                )));
            }
            underline_e0 = true;
            all.into_iter()
                .filter(|a| inner.contains(a.exponent))
                .collect()
        }
    };
    Ok(DomainSpec {
        core,
        order_mu: mu,
        n,
        gamma: config.gamma,
        window,
        selected,
        flavor,
        underline_e0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::CrossSectionKind;
    use crate::weights::membership_x_power;

    fn sphere2() -> CrossSectionSpectrum {
        CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim: 2 }, 10).unwrap()
    }

    fn circle(scale: f64) -> CrossSectionSpectrum {
        CrossSectionSpectrum::build(CrossSectionKind::Circle { scale }, 10).unwrap()
    }

    fn exps(d: &[AsymptoticsSpace]) -> Vec<(f64, usize)> {
        d.iter().map(|a| (a.exponent, a.mode)).collect()
    }

    #[test]
    fn window_spaces() {
        let s = sphere2();
        let sym = MellinSymbol::laplacian(&s);
        let sp = asymptotics_in_window(&sym, OpenInterval::new(-1.5, 0.5)).unwrap();
        assert_eq!(exps(&sp), vec![(-1.0, 1), (0.0, 0)]);
        assert_eq!(sp[0].dimension, 3);

        let c = circle(1.0);
        let sym = MellinSymbol::laplacian(&c);
        let sp = asymptotics_in_window(&sym, OpenInterval::new(-2.0, 0.0));
        assert!(matches!(sp, Err(ConeError::WeightOnPole { .. })));
        let sp = asymptotics_in_window(&sym, OpenInterval::new(-1.5, 0.5)).unwrap();
        assert_eq!(exps(&sp), vec![(-1.0, 1), (0.0, 0)]);
        assert_eq!(sp[1].log_power, 1);
        assert_eq!(sp[1].dimension, 2);
        assert_eq!(sp[0].log_power, 0);
    }

    #[test]
    fn window_spaces_endpoint_excluded() {
        // (-2, 0) with endpoints nudged off the poles keeps only -1
        let c = circle(1.0);
        let sym = MellinSymbol::laplacian(&c);
        let sp = asymptotics_in_window(&sym, OpenInterval::new(-1.9, -0.1)).unwrap();
        assert_eq!(exps(&sp), vec![(-1.0, 1)]);
    }

    #[test]
    fn maximal_and_minimal() {
        let s = sphere2();
        let cfg = WeightConfig::new(2, 0.0, 1.2, 2.0, 2.0);
        let d = build_domain(&cfg, &s, DomainFlavor::Maximal, 2).unwrap();
        assert!((d.core.gamma - 3.2).abs() < 1e-12 && d.core.s == 2.0);
        assert_eq!(exps(&d.selected), vec![(-1.0, 1), (0.0, 0)]);
        let d = build_domain(&cfg, &s, DomainFlavor::Minimal, 2).unwrap();
        assert!(d.selected.is_empty() && !d.underline_e0);
    }

    #[test]
    fn ch_square_domain() {
        let s = sphere2();
        let cfg = WeightConfig::new(2, 0.0, 1.2, 2.0, 2.0);
        let d = build_domain(&cfg, &s, DomainFlavor::ChSquare, 4).unwrap();
        assert!((d.core.gamma - 5.2).abs() < 1e-12 && d.core.s == 4.0);
        assert!(d.underline_e0);
        // Delta^2 poles in (-3.7, -1.7): -2 (modes 0, 2) and -3 (modes 1, 3)
        assert_eq!(
            exps(&d.selected),
            vec![(-3.0, 1), (-3.0, 3), (-2.0, 0), (-2.0, 2)]
        );
        for a in &d.selected {
            assert!(a.exponent > -3.7 && a.exponent < -1.7);
        }
    }

    #[test]
    fn presets() {
        let s = sphere2();
        let cfg = WeightConfig::new(2, 0.0, 1.2, 2.0, 2.0);
        let d = build_domain(&cfg, &s, DomainFlavor::TipAsymptotics, 2).unwrap();
        assert_eq!(exps(&d.selected), vec![(-1.0, 1)]);
        assert!(d.underline_e0);
        let d = build_domain(&cfg, &s, DomainFlavor::Constants, 2).unwrap();
        assert!(d.selected.is_empty() && d.underline_e0);

        // circle scale 0.4: q_1^- = -2.5, so k = 0 and the tip preset is incompatible
        let c = circle(0.4);
        let cfg = WeightConfig::new(1, 0.0, 0.5, 2.0, 2.0);
        let r = build_domain(&cfg, &c, DomainFlavor::TipAsymptotics, 2);
        assert!(matches!(r, Err(ConeError::IncompatiblePreset { .. })));
        assert!(matches!(
            build_domain(&cfg, &c, DomainFlavor::ChSquare, 2),
            Err(ConeError::IncompatiblePreset { .. })
        ));
    }

    #[test]
    fn weight_on_pole_rejected() {
        let s = sphere2();
        let cfg = WeightConfig::new(2, 0.0, 1.5, 2.0, 2.0);
        let r = build_domain(&cfg, &s, DomainFlavor::Maximal, 2);
        assert!(matches!(r, Err(ConeError::WeightOnPole { .. })));
    }

    #[test]
    fn selected_spaces_sit_between_core_and_ambient() {
        for (s, gammas) in [
            (sphere2(), vec![0.6, 0.9, 1.2, 1.4, -0.3]),
            (circle(2.0), vec![0.3, 0.7, -0.2]),
            (circle(0.7), vec![0.1, 0.6]),
        ] {
            let n = s.dim_n();
            for g in gammas {
                let cfg = WeightConfig::new(n, 0.0, g, 2.0, 2.0);
                for mu in [2, 4] {
                    let Ok(d) = build_domain(&cfg, &s, DomainFlavor::Maximal, mu) else {
                        continue;
                    };
                    for a in &d.selected {
                        assert!(!membership_x_power(
                            a.exponent,
                            a.log_power,
                            g + mu as f64,
                            n
                        ));
                        assert!(membership_x_power(a.exponent, a.log_power, g, n));
                    }
                }
            }
        }
    }
}
