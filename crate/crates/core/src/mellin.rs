//! Conormal (Mellin) symbols of the cone Laplacian and its square.
//!
//! On the eigenspace `E_j` the symbol of `Delta` acts as the scalar
//! `z^2 - (n-1) z + lambda_j`, with roots
//! `q_j^{+-} = (n-1)/2 +- sqrt(((n-1)/2)^2 - lambda_j)`. The symbol of
//! `Delta^2` is `sigma(z + 2) sigma(z)`, so its roots are `q_j^{+-}` and
//! `q_j^{+-} - 2`.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};
use crate::spectrum::CrossSectionSpectrum;

/// Two pole locations closer than this are treated as one.
pub const POLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolOrder {
    /// `Delta`, order 2.
    Laplacian,
    /// `Delta^2`, order 4.
    BiLaplacian,
}

impl SymbolOrder {
    pub fn mu(self) -> u32 {
        match self {
            SymbolOrder::Laplacian => 2,
            SymbolOrder::BiLaplacian => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignTag {
    Plus,
    Minus,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum RootSign {
    Plus,
    Minus,
}

/// One factor root that landed in a pole cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RootTag {
    mode: usize,
    sign: RootSign,
    /// 0 for `q_j^{+-}`, 2 for the `Delta^2` companions `q_j^{+-} - 2`.
    shift: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub q: f64,
    pub order: u32,
    pub modes: BTreeSet<usize>,
    pub sign: SignTag,
    #[serde(skip)]
    roots: Vec<RootTag>,
}

impl Pole {
    /// True if some contributing root is the unshifted `q_j^-` of mode `j`.
    pub fn is_minus_root_of(&self, j: usize) -> bool {
        self.roots
            .iter()
            .any(|r| r.mode == j && r.sign == RootSign::Minus && r.shift == 0)
    }

    /// Number of roots of mode `j` at this location (0 if `j` does not contribute).
    pub fn mode_order(&self, j: usize) -> u32 {
        self.roots.iter().filter(|r| r.mode == j).count() as u32
    }

    pub fn is_plus_root_of(&self, j: usize) -> bool {
        self.roots
            .iter()
            .any(|r| r.mode == j && r.sign == RootSign::Plus && r.shift == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoleLattice {
    pub poles: Vec<Pole>,
}

impl PoleLattice {
    pub fn iter(&self) -> impl Iterator<Item = &Pole> {
        self.poles.iter()
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn find(&self, q: f64) -> Option<&Pole> {
        self.poles.iter().find(|p| (p.q - q).abs() < POLE_TOL)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pole lattice is serializable")
    }
}

#[derive(Debug, Clone)]
pub struct MellinSymbol<'a> {
    spectrum: &'a CrossSectionSpectrum,
    order: SymbolOrder,
}

/// Result of the weight-line test.
#[derive(Debug, Clone, PartialEq)]
pub struct LineEllipticity {
    pub line: f64,
    pub elliptic: bool,
    pub witness: Option<Pole>,
    /// Interior (principal symbol) ellipticity holds for `Delta` on any
    /// Riemannian cross-section and is recorded rather than computed.
    pub interior_symbol_elliptic: bool,
}

impl<'a> MellinSymbol<'a> {
    pub fn new(spectrum: &'a CrossSectionSpectrum, order: SymbolOrder) -> Self {
        Self { spectrum, order }
    }

    pub fn laplacian(spectrum: &'a CrossSectionSpectrum) -> Self {
        Self::new(spectrum, SymbolOrder::Laplacian)
    }

    pub fn bilaplacian(spectrum: &'a CrossSectionSpectrum) -> Self {
        Self::new(spectrum, SymbolOrder::BiLaplacian)
    }

    pub fn spectrum(&self) -> &CrossSectionSpectrum {
        self.spectrum
    }

    pub fn order(&self) -> SymbolOrder {
        self.order
    }

    pub fn n(&self) -> usize {
        self.spectrum.dim_n()
    }

    fn half(&self) -> f64 {
        (self.n() as f64 - 1.0) / 2.0
    }

    fn radical(&self, j: usize) -> f64 {
        // lambda_j <= 0 keeps the radicand nonnegative
        (self.half().powi(2) - self.spectrum.eigenvalue(j)).sqrt()
    }

    pub fn q_plus(&self, j: usize) -> f64 {
        self.half() + self.radical(j)
    }

    pub fn q_minus(&self, j: usize) -> f64 {
        self.half() - self.radical(j)
    }

    fn laplacian_value(&self, j: usize, z: Complex64) -> Complex64 {
        z * z - (self.n() as f64 - 1.0) * z + self.spectrum.eigenvalue(j)
    }

    /// Per-mode multipliers of the symbol at `z`.
    pub fn eval(&self, z: Complex64) -> Vec<Complex64> {
        (0..self.spectrum.n_modes())
            .map(|j| match self.order {
                SymbolOrder::Laplacian => self.laplacian_value(j, z),
                SymbolOrder::BiLaplacian => {
                    self.laplacian_value(j, z + 2.0) * self.laplacian_value(j, z)
                }
            })
            .collect()
    }

    fn candidates(&self) -> Vec<(f64, RootTag)> {
        let mut out = Vec::new();
        let shifts: &[u8] = match self.order {
            SymbolOrder::Laplacian => &[0],
            SymbolOrder::BiLaplacian => &[0, 2],
        };
        for j in 0..self.spectrum.n_modes() {
            for &shift in shifts {
                for (q, sign) in [
                    (self.q_minus(j), RootSign::Minus),
                    (self.q_plus(j), RootSign::Plus),
                ] {
                    out.push((
                        q - shift as f64,
                        RootTag {
                            mode: j,
                            sign,
                            shift,
                        },
                    ));
                }
            }
        }
        out
    }

    /// Confirms that no unresolved eigenvalue can place a pole in `[lo, hi]`.
    pub fn check_resolves(&self, lo: f64, hi: f64) -> Result<()> {
        let last = self.spectrum.n_modes() - 1;
        let shift = match self.order {
            SymbolOrder::Laplacian => 0.0,
            SymbolOrder::BiLaplacian => 2.0,
        };
        let left = self.q_minus(last);
        let right = self.q_plus(last) - shift;
        if left < lo - POLE_TOL && right > hi + POLE_TOL {
            Ok(())
        } else {
            Err(ConeError::WindowNotCovered {
                lo,
                hi,
                detail: format!(
                    "last resolved mode {last} has poles {left} and {right}; add modes"
                ),
            })
        }
    }

    /// Poles of the inverse symbol in the closed window `[lo, hi]`, merged
    /// within [`POLE_TOL`] and sorted ascending.
    pub fn poles_of_inverse(&self, lo: f64, hi: f64) -> Result<PoleLattice> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ConeError::InvalidParameter(format!(
                "window ({lo}, {hi}) must be bounded and nonempty"
            )));
        }
        self.check_resolves(lo, hi)?;
        let mut cands: Vec<(f64, RootTag)> = self
            .candidates()
            .into_iter()
            .filter(|(q, _)| *q >= lo - POLE_TOL && *q <= hi + POLE_TOL)
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut poles: Vec<Pole> = Vec::new();
        let mut cluster: Vec<(f64, RootTag)> = Vec::new();
        for c in cands {
            if let Some(last) = cluster.last() {
                if c.0 - last.0 >= POLE_TOL {
                    poles.push(merge_cluster(&cluster));
                    cluster.clear();
                }
            }
            cluster.push(c);
        }
        if !cluster.is_empty() {
            poles.push(merge_cluster(&cluster));
        }
        Ok(PoleLattice { poles })
    }

    /// Tests invertibility of the symbol on the line `Re z = (n+1)/2 - gamma`.
    pub fn is_elliptic_on_line(&self, gamma: f64) -> Result<LineEllipticity> {
        let line = (self.n() as f64 + 1.0) / 2.0 - gamma;
        let lattice = self.poles_of_inverse(line - 0.5, line + 0.5)?;
        let witness = lattice
            .poles
            .into_iter()
            .find(|p| (p.q - line).abs() < POLE_TOL);
        Ok(LineEllipticity {
            line,
            elliptic: witness.is_none(),
            witness,
            interior_symbol_elliptic: true,
        })
    }
}

fn merge_cluster(cluster: &[(f64, RootTag)]) -> Pole {
    let q = cluster[0].0;
    let roots: Vec<RootTag> = cluster.iter().map(|c| c.1).collect();
    let modes: BTreeSet<usize> = roots.iter().map(|r| r.mode).collect();
    // orthogonal projections cannot cancel: the order is the largest per-mode
    // root multiplicity at this location
    let order = modes
        .iter()
        .map(|&m| roots.iter().filter(|r| r.mode == m).count() as u32)
        .max()
        .unwrap_or(0);
    let plus = roots.iter().any(|r| r.sign == RootSign::Plus);
    let minus = roots.iter().any(|r| r.sign == RootSign::Minus);
    let sign = match (plus, minus) {
        (true, true) => SignTag::Both,
        (true, false) => SignTag::Plus,
        _ => SignTag::Minus,
    };
    Pole {
        q,
        order,
        modes,
        sign,
        roots,
    }
}
