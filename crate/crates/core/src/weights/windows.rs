use serde::{Deserialize, Serialize};

use super::OpenInterval;
use crate::error::{ConeError, Result};
use crate::mellin::{MellinSymbol, SymbolOrder, POLE_TOL};

/// Which set of weight inequalities to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `max{-2, q_1^-} < L - 2 < 0`: only the constants sit in `I_gamma` above the core.
    PorousMedium,
    /// `-2 < L - 2 < q_k^-`, `L != q_j^+`: every `q_j^- > -2` lies in `I_gamma`.
    Maximal,
    /// `max{-2, q_1^-} < L - 2 < 0`, `L != q_j^+`, `L - 4 != q_j^-`.
    CahnHilliard,
    /// `max{-2, q_{ell+1}^-} < L - 2 < q_ell^- <= 0` for a chosen `ell`.
    Nested { ell: usize },
}

impl GammaRule {
    pub fn label(&self) -> String {
        match self {
            GammaRule::PorousMedium => "porous-medium".into(),
            GammaRule::Maximal => "maximal".into(),
            GammaRule::CahnHilliard => "cahn-hilliard".into(),
            GammaRule::Nested { ell } => format!("nested:{ell}"),
        }
    }
}

impl std::str::FromStr for GammaRule {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "porous-medium" => Ok(GammaRule::PorousMedium),
            "maximal" => Ok(GammaRule::Maximal),
            "cahn-hilliard" => Ok(GammaRule::CahnHilliard),
            other => other
                .strip_prefix("nested:")
                .and_then(|e| e.parse().ok())
                .map(|ell| GammaRule::Nested { ell })
                .ok_or_else(|| {
                    ConeError::InvalidParameter(format!("unknown window rule '{other}'"))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaWindow {
    pub rule: GammaRule,
    /// Largest `j` with `q_j^- > -2`.
    pub k: usize,
    /// Admissible open gamma intervals, ascending, with pole hits removed.
    pub intervals: Vec<OpenInterval>,
    /// Gamma values removed because a line hit a pole.
    pub excluded: Vec<f64>,
}

impl GammaWindow {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, gamma: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(gamma))
    }

    /// Convex hull of the admissible set, if nonempty.
    pub fn hull(&self) -> Option<OpenInterval> {
        let first = self.intervals.first()?;
        let last = self.intervals.last()?;
        Some(OpenInterval::new(first.lo, last.hi))
    }
}

/// Solves the weight inequalities of `rule` for the Laplacian symbol `sym`.
pub fn gamma_window(sym: &MellinSymbol<'_>, rule: GammaRule) -> Result<GammaWindow> {
    if sym.order() != SymbolOrder::Laplacian {
        return Err(ConeError::InvalidParameter(
            "gamma windows are defined through the symbol of Delta".into(),
        ));
    }
    sym.check_resolves(-4.0, 2.0)?;
    let n = sym.n();
    let modes = sym.spectrum().n_modes();
    let k = (1..modes)
        .take_while(|&j| sym.q_minus(j) > -2.0)
        .last()
        .unwrap_or(0);
    let q_minus = |j: usize| {
        if j < modes {
            sym.q_minus(j)
        } else {
            f64::NEG_INFINITY
        }
    };

    // window for the line L = (n+1)/2 - gamma
    let (l_lo, l_hi) = match rule {
        GammaRule::Maximal => (0.0, q_minus(k) + 2.0),
        GammaRule::PorousMedium | GammaRule::CahnHilliard => ((-2.0f64).max(q_minus(1)) + 2.0, 2.0),
        GammaRule::Nested { ell } => {
            if ell >= modes {
                return Err(ConeError::ModeOutOfRange {
                    index: ell,
                    available: modes,
                });
            }
            ((-2.0f64).max(q_minus(ell + 1)) + 2.0, q_minus(ell) + 2.0)
        }
    };

    let lattice = sym.poles_of_inverse(-4.0, 2.0)?;
    let mut hits: Vec<f64> = Vec::new();
    for p in lattice.iter() {
        hits.push(p.q);
        hits.push(p.q + 2.0);
        if rule == GammaRule::CahnHilliard && (0..modes).any(|j| p.is_minus_root_of(j)) {
            hits.push(p.q + 4.0);
        }
    }
    hits.retain(|&h| h > l_lo + POLE_TOL && h < l_hi - POLE_TOL);
    hits.sort_by(f64::total_cmp);
    hits.dedup_by(|a, b| (*a - *b).abs() < POLE_TOL);

    let half = (n as f64 + 1.0) / 2.0;
    let mut intervals = Vec::new();
    if l_hi > l_lo {
        let mut cuts = vec![l_lo];
        cuts.extend(hits.iter().copied());
        cuts.push(l_hi);
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                intervals.push(OpenInterval::new(half - w[1], half - w[0]));
            }
        }
        intervals.reverse();
    }
    let mut excluded: Vec<f64> = hits.iter().map(|h| half - h).collect();
    excluded.reverse();
    Ok(GammaWindow {
        rule,
        k,
        intervals,
        excluded,
    })
}
