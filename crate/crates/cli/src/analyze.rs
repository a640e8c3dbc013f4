use serde::{Deserialize, Serialize};

use conetool_core::mellin::{MellinSymbol, SignTag};
use conetool_core::spectrum::{CrossSectionSpectrum, SpectrumExport};
use conetool_core::weights::{
    build_domain, check_hinfty_admissible, gamma_window, hinfty_lattice, interpolation_descriptor,
    pq_feasible, DomainFlavor, DomainSpec, Feasibility, FeasibilityMode, GammaRule, GammaWindow,
    HinftyVerdict, InterpolationDescriptor, OpenInterval, WeightConfig,
};

use crate::config::Config;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRow {
    pub q: f64,
    pub order: u32,
    pub modes: Vec<usize>,
    pub sign: SignTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub rule: String,
    pub intervals: Vec<OpenInterval>,
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub spectrum: SpectrumExport,
    pub q_minus: Vec<f64>,
    pub q_plus: Vec<f64>,
    /// Poles of the inverse symbol in the strip `[-4, n + 1]`.
    pub poles: Vec<PoleRow>,
    /// Largest `j` with `q_j^- > -2`.
    pub k: usize,
    pub windows: Vec<WindowRow>,
    pub gamma_rule: String,
    pub gamma_source: String,
    pub weight: Option<WeightConfig>,
    pub domain: Option<DomainSpec>,
    pub hinfty: Option<HinftyVerdict>,
    pub interpolation: Option<InterpolationDescriptor>,
    pub feasibility: Option<Feasibility>,
    pub warnings: Vec<String>,
}

pub fn feasibility_mode(cfg: &Config) -> Option<FeasibilityMode> {
    match cfg.equation_name.as_str() {
        "pme" | "pme_v" => Some(FeasibilityMode::Pme),
        "fpme" => Some(FeasibilityMode::Fpme { sigma: cfg.sigma }),
        "cahn_hilliard" => Some(FeasibilityMode::Ch),
        _ => None,
    }
}

pub fn default_flavor(rule: GammaRule) -> DomainFlavor {
    match rule {
        GammaRule::Maximal => DomainFlavor::TipAsymptotics,
        GammaRule::PorousMedium | GammaRule::CahnHilliard => DomainFlavor::Constants,
        GammaRule::Nested { .. } => DomainFlavor::Nested,
    }
}

/// The configured weight, or the midpoint of the first interval of the configured window.
pub fn choose_weight(cfg: &Config, window: &GammaWindow) -> (Option<WeightConfig>, String) {
    let weight = |gamma| WeightConfig::new(cfg.n(), cfg.s, gamma, cfg.p, cfg.q);
    match (cfg.gamma, window.intervals.first()) {
        (Some(g), _) => (Some(weight(g)), "config".into()),
        (None, Some(i)) => (
            Some(weight(0.5 * (i.lo + i.hi))),
            format!("midpoint of ({}, {})", i.lo, i.hi),
        ),
        (None, None) => (
            None,
            format!("none: the {} window is empty", window.rule.label()),
        ),
    }
}

pub fn analyze(cfg: &Config) -> CliResult<AnalysisReport> {
    let spectrum = CrossSectionSpectrum::build(cfg.kind.clone(), cfg.analysis_modes())?;
    let sym = MellinSymbol::laplacian(&spectrum);
    let n = cfg.n();
    let modes = spectrum.n_modes();
    let lattice = sym.poles_of_inverse(-4.0, n as f64 + 1.0)?;
    let poles = lattice
        .iter()
        .map(|p| PoleRow {
            q: p.q,
            order: p.order,
            modes: p.modes.iter().copied().collect(),
            sign: p.sign,
        })
        .collect();

    let mut warnings = Vec::new();
    let maximal = gamma_window(&sym, GammaRule::Maximal)?;
    let k = maximal.k;
    if k == 0 {
        warnings.push("k = 0: no q_j^- lies in (-2, 0), so the tip presets are unavailable".into());
    }
    let mut rules = vec![
        GammaRule::PorousMedium,
        GammaRule::Maximal,
        GammaRule::CahnHilliard,
    ];
    rules.extend((1..=k.min(modes - 1)).map(|ell| GammaRule::Nested { ell }));
    if !rules.contains(&cfg.gamma_rule) {
        rules.push(cfg.gamma_rule);
    }
    let mut windows = Vec::new();
    let mut chosen = None;
    for rule in rules {
        let w = gamma_window(&sym, rule)?;
        if w.is_empty() {
            warnings.push(format!("the {} window is empty (k = {k})", rule.label()));
        }
        windows.push(WindowRow {
            rule: rule.label(),
            intervals: w.intervals.clone(),
            excluded: w.excluded.clone(),
        });
        if rule == cfg.gamma_rule {
            chosen = Some(w);
        }
    }
    let chosen = chosen.expect("configured rule is listed");
    let (weight, gamma_source) = choose_weight(cfg, &chosen);
    if let (Some(g), Some(w)) = (cfg.gamma, weight.as_ref()) {
        if !chosen.contains(g) {
            warnings.push(format!(
                "gamma = {} lies outside the {} window",
                w.gamma,
                cfg.gamma_rule.label()
            ));
        }
    }

    let mut domain = None;
    let mut hinfty = None;
    let mut interpolation = None;
    let feasibility = match (feasibility_mode(cfg), weight.as_ref()) {
        (Some(mode), Some(w)) => Some(pq_feasible(w, mode)),
        _ => None,
    };
    if let Some(w) = weight.as_ref() {
        let flavor = cfg.domain.clone().unwrap_or(default_flavor(cfg.gamma_rule));
        let mu = if flavor == DomainFlavor::ChSquare {
            4
        } else {
            2
        };
        match build_domain(w, &spectrum, flavor, mu) {
            Ok(d) => {
                if mu == 2 {
                    let lat = hinfty_lattice(&sym, w)?;
                    match check_hinfty_admissible(&d, w, &lat) {
                        Ok(v) => hinfty = Some(v),
                        Err(e) => warnings.push(format!("H-infinity check: {e}")),
                    }
                    match interpolation_descriptor(w, &spectrum, &d, cfg.epsilon) {
                        Ok(i) => interpolation = Some(i),
                        Err(e) => warnings.push(format!("interpolation: {e}")),
                    }
                } else {
                    warnings.push("H-infinity and interpolation reports cover mu = 2 only".into());
                }
                domain = Some(d);
            }
            Err(e) => warnings.push(format!("domain: {e}")),
        }
    }

    Ok(AnalysisReport {
        spectrum: spectrum.export(),
        q_minus: (0..modes).map(|j| sym.q_minus(j)).collect(),
        q_plus: (0..modes).map(|j| sym.q_plus(j)).collect(),
        poles,
        k,
        windows,
        gamma_rule: cfg.gamma_rule.label(),
        gamma_source,
        weight,
        domain,
        hinfty,
        interpolation,
        feasibility,
        warnings,
    })
}
