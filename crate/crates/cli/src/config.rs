use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use conetool_core::solver::{Equation, InnerBc, Linearization};
use conetool_core::spectrum::CrossSectionKind;
use conetool_core::weights::{DomainFlavor, GammaRule};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self { line: Some(l), .. } => write!(f, "line {l}: {}", self.message),
            Self { line: None, .. } => write!(f, "{}", self.message),
        }
    }
}

/// Key, default and one-line description of every accepted setting.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("cross_section", "circle", "circle | sphere | custom"),
    ("scale", "1", "circle: metric scale ell"),
    ("dim", "2", "sphere or custom: dimension n of the cone base"),
    (
        "eigenvalues",
        "",
        "custom: comma separated nonpositive eigenvalues",
    ),
    (
        "modes",
        "auto",
        "distinct eigenvalues used for pole analysis",
    ),
    (
        "gamma_rule",
        "maximal",
        "porous-medium | maximal | cahn-hilliard | nested:<l>",
    ),
    (
        "gamma",
        "auto",
        "weight; auto picks the midpoint of the first window interval",
    ),
    (
        "domain",
        "auto",
        "minimal | maximal | constants | tip | nested | ch-square | auto",
    ),
    ("s", "0", "smoothness index of the base space"),
    ("p", "8", "spatial integrability exponent"),
    ("q", "8", "temporal integrability exponent"),
    ("epsilon", "1e-3", "interpolation bracket width"),
    (
        "equation",
        "pme",
        "heat | pme | pme_v | fpme | cahn_hilliard | yamabe",
    ),
    ("m", "2", "porous medium exponent"),
    ("sigma", "0.5", "fractional power for fpme"),
    ("stabilization", "2", "Cahn-Hilliard stabilization constant"),
    ("curvature", "0", "yamabe: constant prescribed curvature"),
    ("linearization", "newton", "newton | frozen"),
    ("bc_inner", "robin", "robin | neumann"),
    (
        "solver_modes",
        "3",
        "distinct eigenvalues kept by the solver",
    ),
    ("x_min", "1e-3", "inner radius of the truncated collar"),
    ("n_x", "128", "radial nodes"),
    ("dt", "1e-4", "time step"),
    ("t_end", "0.01", "final time, a multiple of dt"),
    ("save_every", "10", "steps between saved diagnostics rows"),
    ("initial", "cosine", "constant | cosine | tip | random"),
    ("u0_level", "1", "mean level of the initial state"),
    (
        "u0_amplitude",
        "0.1",
        "perturbation amplitude of the initial state",
    ),
    (
        "u0_mean_zero",
        "false",
        "project the initial state to zero mass",
    ),
    (
        "tip_modes",
        "1",
        "tip: comma separated modes seeded with exp(-1/x)",
    ),
    (
        "fit_lo",
        "auto",
        "lower end of the tip fit window; auto = 3 x_min",
    ),
    (
        "fit_hi",
        "auto",
        "upper end of the tip fit window; auto = 100 x_min",
    ),
    ("svg", "false", "write SVG plots next to the CSV output"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Constant,
    Cosine,
    Tip,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub kind: CrossSectionKind,
    pub modes: Option<usize>,
    pub gamma_rule: GammaRule,
    pub gamma: Option<f64>,
    pub domain: Option<DomainFlavor>,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
    pub equation_name: String,
    pub m: f64,
    pub sigma: f64,
    pub stabilization: f64,
    pub curvature: f64,
    pub linearization: Linearization,
    pub bc_inner: InnerBc,
    pub solver_modes: usize,
    pub x_min: f64,
    pub n_x: usize,
    pub dt: f64,
    pub t_end: f64,
    pub save_every: usize,
    pub initial: Initial,
    pub u0_level: f64,
    pub u0_amplitude: f64,
    pub u0_mean_zero: bool,
    pub tip_modes: Vec<usize>,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
    pub svg: bool,
    /// Every key with its effective value, defaults included.
    pub resolved: BTreeMap<String, String>,
}

struct Raw {
    values: BTreeMap<String, (String, usize)>,
}

impl Raw {
    fn get(&self, key: &str) -> (String, usize) {
        self.values.get(key).cloned().unwrap_or_else(|| {
            let d = SCHEMA
                .iter()
                .find(|(k, _, _)| *k == key)
                .expect("schema key");
            (d.1.to_string(), 0)
        })
    }

    fn err(line: usize, key: &str, msg: String) -> ConfigError {
        if line == 0 {
            ConfigError::global(format!("{key}: {msg}"))
        } else {
            ConfigError::at(line, format!("{key}: {msg}"))
        }
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (v, line) = self.get(key);
        v.parse::<T>()
            .map_err(|e| Self::err(line, key, format!("cannot parse '{v}': {e}")))
    }

    fn auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        if self.get(key).0 == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Self::err(
                self.get(key).1,
                key,
                format!("must be positive, got {v}"),
            ))
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (v, line) = self.get(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Self::err(line, key, format!("cannot parse entry '{s}': {e}")))
            })
            .collect()
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::global(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                ConfigError::at(line, format!("expected key = value, got '{content}'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !SCHEMA.iter().any(|(k, _, _)| *k == key) {
                return Err(ConfigError::at(line, format!("unknown key '{key}'")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("{key}: empty value")));
            }
            if let Some((_, first)) = values.insert(key.to_string(), (value.to_string(), line)) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key '{key}' (first set on line {first})"),
                ));
            }
        }
        Self::from_raw(Raw { values })
    }

    fn from_raw(raw: Raw) -> Result<Self, ConfigError> {
        let (cs, cs_line) = raw.get("cross_section");
        let kind = match cs.as_str() {
            "circle" => CrossSectionKind::Circle {
                scale: raw.positive("scale")?,
            },
            "sphere" => {
                let dim: usize = raw.parse("dim")?;
                if dim < 2 {
                    return Err(Raw::err(
                        raw.get("dim").1,
                        "dim",
                        "a sphere needs dim >= 2".into(),
                    ));
                }
                CrossSectionKind::Sphere { dim }
            }
            "custom" => {
                let eigenvalues: Vec<f64> = raw.list("eigenvalues")?;
                if eigenvalues.is_empty() {
                    return Err(ConfigError::global(
                        "eigenvalues: required for a custom cross-section",
                    ));
                }
                CrossSectionKind::Custom {
                    dim: raw.parse("dim")?,
                    eigenvalues,
                }
            }
            other => {
                return Err(Raw::err(
                    cs_line,
                    "cross_section",
                    format!("expected circle, sphere or custom, got '{other}'"),
                ))
            }
        };

        let gamma_rule: GammaRule = raw.parse("gamma_rule")?;
        let domain: Option<DomainFlavor> = raw.auto("domain")?;
        let linearization: Linearization = raw.parse("linearization")?;
        let bc_inner: InnerBc = raw.parse("bc_inner")?;
        let equation_name = raw.get("equation").0;
        if !["heat", "pme", "pme_v", "fpme", "cahn_hilliard", "yamabe"]
            .contains(&equation_name.as_str())
        {
            return Err(Raw::err(
                raw.get("equation").1,
                "equation",
                format!("unknown equation '{equation_name}'"),
            ));
        }
        let initial = match raw.get("initial").0.as_str() {
            "constant" => Initial::Constant,
            "cosine" => Initial::Cosine,
            "tip" => Initial::Tip,
            "random" => Initial::Random,
            other => {
                return Err(Raw::err(
                    raw.get("initial").1,
                    "initial",
                    format!("expected constant, cosine, tip or random, got '{other}'"),
                ))
            }
        };
        let modes: Option<usize> = raw.auto("modes")?;
        if modes == Some(0) {
            return Err(Raw::err(
                raw.get("modes").1,
                "modes",
                "must be at least 1".into(),
            ));
        }
        let solver_modes: usize = raw.parse("solver_modes")?;
        let n_x: usize = raw.parse("n_x")?;
        let save_every: usize = raw.parse("save_every")?;
        for (key, v, min) in [
            ("solver_modes", solver_modes, 1),
            ("n_x", n_x, 4),
            ("save_every", save_every, 1),
        ] {
            if v < min {
                return Err(Raw::err(
                    raw.get(key).1,
                    key,
                    format!("must be at least {min}"),
                ));
            }
        }
        let x_min = raw.positive("x_min")?;
        if x_min >= 1.0 {
            return Err(Raw::err(
                raw.get("x_min").1,
                "x_min",
                "must be below 1".into(),
            ));
        }
        let tip_modes: Vec<usize> = raw.list("tip_modes")?;

        let resolved = SCHEMA
            .iter()
            .map(|(k, _, _)| (k.to_string(), raw.get(k).0))
            .collect();
        Ok(Config {
            kind,
            modes,
            gamma_rule,
            gamma: raw.auto("gamma")?,
            domain,
            s: raw.parse("s")?,
            p: raw.positive("p")?,
            q: raw.positive("q")?,
            epsilon: raw.positive("epsilon")?,
            equation_name,
            m: raw.positive("m")?,
            sigma: raw.positive("sigma")?,
            stabilization: raw.parse("stabilization")?,
            curvature: raw.parse("curvature")?,
            linearization,
            bc_inner,
            solver_modes,
            x_min,
            n_x,
            dt: raw.positive("dt")?,
            t_end: raw.positive("t_end")?,
            save_every,
            initial,
            u0_level: raw.parse("u0_level")?,
            u0_amplitude: raw.parse("u0_amplitude")?,
            u0_mean_zero: raw.parse("u0_mean_zero")?,
            tip_modes,
            fit_lo: raw.auto("fit_lo")?,
            fit_hi: raw.auto("fit_hi")?,
            svg: raw.parse("svg")?,
            resolved,
        })
    }

    /// Distinct eigenvalues for pole analysis: enough to resolve the strip `[-4, 2]`.
    pub fn analysis_modes(&self) -> usize {
        self.modes.unwrap_or(match &self.kind {
            CrossSectionKind::Circle { scale } => (4.0 * scale).ceil() as usize + 3,
            CrossSectionKind::Sphere { .. } => 8,
            CrossSectionKind::Custom { eigenvalues, .. } => {
                let mut e = eigenvalues.clone();
                e.sort_by(|a, b| b.total_cmp(a));
                e.dedup();
                e.len()
            }
        })
    }

    pub fn n(&self) -> usize {
        self.kind.dim()
    }

    /// `curvature` is applied by the caller for Yamabe, which needs the grid.
    pub fn equation(&self) -> Option<Equation> {
        Some(match self.equation_name.as_str() {
            "heat" => Equation::Heat,
            "pme" => Equation::Pme { m: self.m },
            "pme_v" => Equation::PmeVForm { m: self.m },
            "fpme" => Equation::Fpme {
                m: self.m,
                sigma: self.sigma,
            },
            "cahn_hilliard" => Equation::CahnHilliard {
                stabilization: self.stabilization,
            },
            _ => return None,
        })
    }

    pub fn fit_window(&self) -> (f64, f64) {
        (
            self.fit_lo.unwrap_or(3.0 * self.x_min),
            self.fit_hi.unwrap_or((100.0 * self.x_min).min(1.0)),
        )
    }
}
