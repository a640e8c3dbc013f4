use serde::{Deserialize, Serialize};

use super::{line_for, DomainSpec, OpenInterval, WeightConfig};
use crate::error::{ConeError, Result};
use crate::mellin::{MellinSymbol, Pole, PoleLattice, POLE_TOL};

/// What a domain keeps of the asymptotics space over one pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Full,
    Zero,
    /// `omega(x) e(y)`, `e` constant, at the double pole `0`.
    ConstantsSlice,
}

impl Selection {
    /// Orthocomplement under the pairing of `q` with `n - 1 - q`.
    pub fn complement(self) -> Selection {
        match self {
            Selection::Full => Selection::Zero,
            Selection::Zero => Selection::Full,
            Selection::ConstantsSlice => Selection::ConstantsSlice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleCheck {
    pub q: f64,
    pub selection: Selection,
    pub required: Selection,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `"i"`, `"ii"` or `"iii"`.
    pub condition: String,
    pub description: String,
    pub applies: bool,
    pub holds: bool,
    pub checks: Vec<PoleCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreconditionFailure {
    WeightTooLarge { gamma: f64, bound: f64 },
    LineOnPole { location: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinftyVerdict {
    pub admissible: bool,
    pub precondition: Option<PreconditionFailure>,
    pub conditions: Vec<ConditionReport>,
}

impl HinftyVerdict {
    pub fn failed_conditions(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.condition.as_str())
            .collect()
    }
}

/// Poles needed by [`check_hinfty_admissible`]: everything in the closure of
/// `I_gamma` and `I_{-gamma}`.
pub fn hinfty_lattice(sym: &MellinSymbol<'_>, config: &WeightConfig) -> Result<PoleLattice> {
    let n = config.n as f64;
    let line = config.line();
    let lo = (line - 2.0).min(n - 1.0 - line);
    let hi = line.max(n + 1.0 - line);
    sym.poles_of_inverse(lo - 0.5, hi + 0.5)
}

fn selection_at(domain: &DomainSpec, pole: &Pole) -> Result<Selection> {
    let mut per_mode = Vec::new();
    for &mode in &pole.modes {
        let order = pole.mode_order(mode);
        let full = domain
            .selected
            .iter()
            .find(|a| a.mode == mode && (a.exponent - pole.q).abs() < POLE_TOL);
        let sel = match full {
            Some(a) if a.log_power + 1 == order => Selection::Full,
            Some(a) => {
                return Err(ConeError::Unsupported(format!(
                    "partial log selection (power {} of {}) at q = {}",
                    a.log_power,
                    order - 1,
                    pole.q
                )))
            }
            None if mode == 0 && pole.q.abs() < POLE_TOL && domain.underline_e0 => {
                if order == 1 {
                    Selection::Full
                } else {
                    Selection::ConstantsSlice
                }
            }
            None => Selection::Zero,
        };
        per_mode.push(sel);
    }
    let first = per_mode[0];
    if per_mode.iter().any(|&s| s != first) {
        return Err(ConeError::Unsupported(format!(
            "mixed per-mode selection at q = {}",
            pole.q
        )));
    }
    Ok(first)
}

/// Evaluates the three pairing conditions for a bounded `H_infty` calculus of
/// `c - Delta` with the given domain.
pub fn check_hinfty_admissible(
    domain: &DomainSpec,
    config: &WeightConfig,
    lattice: &PoleLattice,
) -> Result<HinftyVerdict> {
    config.validate()?;
    if domain.order_mu != 2 {
        return Err(ConeError::InvalidParameter(
            "the H_infty check applies to extensions of Delta (mu = 2)".into(),
        ));
    }
    if domain.n != config.n || (domain.gamma - config.gamma).abs() > 1e-12 {
        return Err(ConeError::InvalidParameter(
            "domain was built for a different (n, gamma)".into(),
        ));
    }
    let n = config.n as f64;
    let gamma = config.gamma;
    let bound = (n + 1.0) / 2.0;
    let failed = |p: PreconditionFailure| HinftyVerdict {
        admissible: false,
        precondition: Some(p),
        conditions: Vec::new(),
    };
    if gamma.abs() >= bound {
        return Ok(failed(PreconditionFailure::WeightTooLarge { gamma, bound }));
    }
    let line = line_for(config.n, gamma);
    for loc in [line, line - 2.0] {
        if lattice.find(loc).is_some() {
            return Ok(failed(PreconditionFailure::LineOnPole { location: loc }));
        }
    }

    let i_plus = OpenInterval::new(line - 2.0, line);
    let i_minus = OpenInterval::new(n - 1.0 - line, n + 1.0 - line);
    let mut paired = Vec::new();
    let mut one_sided = Vec::new();
    for pole in lattice.iter().filter(|p| i_plus.contains(p.q)) {
        let sel = selection_at(domain, pole)?;
        if i_minus.contains(pole.q) {
            let partner_q = n - 1.0 - pole.q;
            let partner_sel = match lattice.find(partner_q) {
                Some(partner) => selection_at(domain, partner)?,
                None => Selection::Zero,
            };
            let required = partner_sel.complement();
            // the constants slice is only its own complement at a self-paired double pole
            let ok = sel == required
                && (sel != Selection::ConstantsSlice || (partner_q - pole.q).abs() < POLE_TOL);
            paired.push(PoleCheck {
                q: pole.q,
                selection: sel,
                required,
                ok,
            });
        } else {
            one_sided.push((pole.q, sel));
        }
    }

    let one_sided_report = |name: &str, description: &str, applies: bool, want: Selection| {
        let checks: Vec<PoleCheck> = if applies {
            one_sided
                .iter()
                .map(|&(q, sel)| PoleCheck {
                    q,
                    selection: sel,
                    required: want,
                    ok: sel == want,
                })
                .collect()
        } else {
            Vec::new()
        };
        ConditionReport {
            condition: name.into(),
            description: description.into(),
            applies,
            holds: checks.iter().all(|c| c.ok),
            checks,
        }
    };
    let cond_i = ConditionReport {
        condition: "i".into(),
        description: "selection at q is the orthocomplement of the selection at n-1-q on I_gamma and I_-gamma".into(),
        applies: true,
        holds: paired.iter().all(|c| c.ok),
        checks: paired,
    };
    let cond_ii = one_sided_report(
        "ii",
        "gamma >= 0: full spaces on I_gamma minus I_-gamma",
        gamma >= 0.0,
        Selection::Full,
    );
    let cond_iii = one_sided_report(
        "iii",
        "gamma <= 0: zero spaces on I_gamma minus I_-gamma",
        gamma <= 0.0,
        Selection::Zero,
    );
    let conditions = vec![cond_i, cond_ii, cond_iii];
    Ok(HinftyVerdict {
        admissible: conditions.iter().all(|c| c.holds),
        precondition: None,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{CrossSectionKind, CrossSectionSpectrum};
    use crate::weights::{build_domain, gamma_window, AsymptoticsSpace, DomainFlavor, GammaRule};

    fn verdict(s: &CrossSectionSpectrum, d: &DomainSpec, gamma: f64) -> HinftyVerdict {
        let cfg = WeightConfig::new(s.dim_n(), 0.0, gamma, 2.0, 2.0);
        let sym = MellinSymbol::laplacian(s);
        let lattice = hinfty_lattice(&sym, &cfg).unwrap();
        check_hinfty_admissible(d, &cfg, &lattice).unwrap()
    }

    fn domain(s: &CrossSectionSpectrum, gamma: f64, flavor: DomainFlavor) -> DomainSpec {
        let cfg = WeightConfig::new(s.dim_n(), 0.0, gamma, 2.0, 2.0);
        build_domain(&cfg, s, flavor, 2).unwrap()
    }

    #[test]
    fn sphere_nested_domain_passes() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim: 2 }, 8).unwrap();
        for g in [0.6, 0.9, 1.2, 1.45] {
            let d = domain(&s, g, DomainFlavor::Nested);
            let v = verdict(&s, &d, g);
            assert!(v.admissible, "gamma {g}: {v:?}");
            // I_gamma lies left of I_-gamma: -1 and 0 are checked under (ii)
            assert_eq!(v.conditions[1].checks.len(), 2);
        }
    }

    #[test]
    fn extra_plus_space_breaks_pairing() {
        // circle of length 6 pi: q_j^+- = +-j/3. gamma = -0.1 puts L = 1.1 and
        // I_gamma = (-0.9, 1.1), so +-1/3 and +-2/3 are paired.
        let s = CrossSectionSpectrum::build(CrossSectionKind::Circle { scale: 3.0 }, 16).unwrap();
        let g = -0.1;
        let w = gamma_window(&MellinSymbol::laplacian(&s), GammaRule::Nested { ell: 2 }).unwrap();
        assert!(w.contains(g));
        let d = domain(&s, g, DomainFlavor::Nested);
        assert!(verdict(&s, &d, g).admissible);
        let bad = d
            .with_space(AsymptoticsSpace {
                exponent: 1.0 / 3.0,
                mode: 1,
                log_power: 0,
                dimension: 2,
            })
            .unwrap();
        let v = verdict(&s, &bad, g);
        assert!(!v.admissible);
        assert_eq!(v.failed_conditions(), vec!["i"]);
    }

    #[test]
    fn circle_symmetric_weight_uses_constants_table() {
        // gamma = 0, n = 1: the double pole 0 keeps only the constants
        let s = CrossSectionSpectrum::build(CrossSectionKind::Circle { scale: 1.5 }, 8).unwrap();
        let d = domain(&s, 0.0, DomainFlavor::Nested);
        let v = verdict(&s, &d, 0.0);
        assert!(v.admissible, "{v:?}");
        let zero = v.conditions[0]
            .checks
            .iter()
            .find(|c| c.q.abs() < 1e-12)
            .unwrap();
        assert_eq!(zero.selection, Selection::ConstantsSlice);
        assert!(!v.conditions[1].applies || v.conditions[1].checks.is_empty());

        // the maximal domain keeps ln x at 0: full is not self-complementary
        let d = domain(&s, 0.0, DomainFlavor::Maximal);
        let v = verdict(&s, &d, 0.0);
        assert!(!v.admissible);
    }

    #[test]
    fn preconditions() {
        let s = CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim: 2 }, 8).unwrap();
        let d = domain(&s, 1.2, DomainFlavor::Minimal);
        let cfg = WeightConfig::new(2, 0.0, 1.2, 2.0, 2.0);
        let sym = MellinSymbol::laplacian(&s);
        let lattice = hinfty_lattice(&sym, &cfg).unwrap();
        let mut far = d.clone();
        far.gamma = 1.6;
        let cfg_far = WeightConfig::new(2, 0.0, 1.6, 2.0, 2.0);
        let v = check_hinfty_admissible(&far, &cfg_far, &lattice).unwrap();
        assert!(matches!(
            v.precondition,
            Some(PreconditionFailure::WeightTooLarge { .. })
        ));
        let mut on_pole = d.clone();
        on_pole.gamma = 0.5;
        let cfg_pole = WeightConfig::new(2, 0.0, 0.5, 2.0, 2.0);
        let lattice = hinfty_lattice(&sym, &cfg_pole).unwrap();
        let v = check_hinfty_admissible(&on_pole, &cfg_pole, &lattice).unwrap();
        assert_eq!(
            v.precondition,
            Some(PreconditionFailure::LineOnPole { location: 1.0 })
        );
        // the minimal domain fails (ii) for positive gamma
        let v = verdict(&s, &d, 1.2);
        assert_eq!(v.failed_conditions(), vec!["ii"]);
    }

    #[test]
    fn presets_pass_across_spectra() {
        let kinds = [
            CrossSectionKind::Circle { scale: 0.5 },
            CrossSectionKind::Circle { scale: 1.0 },
            CrossSectionKind::Circle { scale: 2.5 },
            CrossSectionKind::Sphere { dim: 2 },
            CrossSectionKind::Sphere { dim: 3 },
            CrossSectionKind::Sphere { dim: 4 },
        ];
        for kind in kinds {
            let s = CrossSectionSpectrum::build(kind.clone(), 14).unwrap();
            let sym = MellinSymbol::laplacian(&s);
            let mut rules = vec![(GammaRule::Maximal, DomainFlavor::TipAsymptotics)];
            for ell in 0..4 {
                rules.push((GammaRule::Nested { ell }, DomainFlavor::Nested));
            }
            for (rule, flavor) in rules {
                let w = gamma_window(&sym, rule).unwrap();
                if flavor == DomainFlavor::TipAsymptotics && w.k == 0 {
                    continue;
                }
                for i in &w.intervals {
                    for t in 1..10 {
                        let g = i.lo + i.length() * t as f64 / 10.0;
                        let d = domain(&s, g, flavor.clone());
                        let v = verdict(&s, &d, g);
                        assert!(v.admissible, "{kind:?} {rule:?} gamma {g}: {v:?}");
                    }
                }
            }
        }
    }
}
