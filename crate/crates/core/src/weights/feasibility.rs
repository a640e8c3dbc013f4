use serde::{Deserialize, Serialize};

use super::WeightConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "snake_case")]
pub enum FeasibilityMode {
    Pme,
    Fpme { sigma: f64 },
    Ch,
}

/// One inequality `lhs < rhs` (or `<=` when `strict` is false).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    /// `rhs - lhs`; positive when satisfied strictly.
    pub slack: f64,
    pub holds: bool,
}

impl Inequality {
    fn lt(statement: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            statement: statement.into(),
            lhs,
            rhs,
            strict: true,
            slack: rhs - lhs,
            holds: lhs < rhs,
        }
    }

    fn le(statement: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            statement: statement.into(),
            lhs,
            rhs,
            strict: false,
            slack: rhs - lhs,
            holds: lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub mode: FeasibilityMode,
    pub feasible: bool,
    pub inequalities: Vec<Inequality>,
}

impl Feasibility {
    pub fn violated(&self) -> Vec<&Inequality> {
        self.inequalities.iter().filter(|i| !i.holds).collect()
    }
}

/// Exponent conditions on `(p, q)` for the maximal regularity setting of each equation.
pub fn pq_feasible(config: &WeightConfig, mode: FeasibilityMode) -> Feasibility {
    let n1 = config.n as f64 + 1.0;
    let (p, q) = (config.p, config.q);
    let line = config.line();
    let inequalities = match mode {
        FeasibilityMode::Pme => vec![
            Inequality::lt("(n+1)/p + 2/q < 1", n1 / p + 2.0 / q, 1.0),
            Inequality::lt("(n+1)/2 - gamma - 2 + 4/q < 0", line - 2.0 + 4.0 / q, 0.0),
        ],
        FeasibilityMode::Fpme { sigma } => vec![
            Inequality::lt("0 < sigma", 0.0, sigma),
            Inequality::le("sigma <= 1", sigma, 1.0),
            Inequality::lt(
                "(n+1)/p + 2 sigma/q < 2 sigma",
                n1 / p + 2.0 * sigma / q,
                2.0 * sigma,
            ),
            Inequality::lt(
                "(n+1)/2 - gamma - 2 sigma + 2 sigma/q < 0",
                line - 2.0 * sigma + 2.0 * sigma / q,
                0.0,
            ),
            Inequality::lt("(n+1)/2 - gamma < 2 sigma", line, 2.0 * sigma),
        ],
        FeasibilityMode::Ch => vec![
            Inequality::le("n + 1 <= p", n1, p),
            Inequality::lt("2 < q", 2.0, q),
        ],
    };
    Feasibility {
        mode,
        feasible: inequalities.iter().all(|i| i.holds),
        inequalities,
    }
}
