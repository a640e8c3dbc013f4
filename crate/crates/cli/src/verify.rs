use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use conetool_core::mellin::MellinSymbol;
use conetool_core::solver::{
    bound_violation, comparison_check, fit_tip_exponent, mass, weak_residual, ComparisonVerdict,
    ConeField, ConeGrid, Equation, FractionalPower, InnerBc, Separable, Solver, SolverConfig,
    Trajectory,
};
use conetool_core::spectrum::{CrossSectionKind, CrossSectionSpectrum};
use conetool_core::weights::{
    build_domain, check_hinfty_admissible, gamma_window, hinfty_lattice, AsymptoticsSpace,
    DomainFlavor, GammaRule, OpenInterval, WeightConfig,
};

use crate::error::{CliError, CliResult};

pub const SUITES: [&str; 8] = [
    "poles",
    "windows",
    "hinfty",
    "conservation",
    "comparison",
    "exponents",
    "fractional",
    "weakform",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    /// Pass when `value <= tolerance`, or `value >= tolerance` for lower bounds.
    pub tolerance: f64,
    pub lower_bound: bool,
    pub passed: bool,
}

fn upper(suite: &str, name: String, value: f64, tolerance: f64) -> Check {
    Check {
        suite: suite.into(),
        name,
        value,
        tolerance,
        lower_bound: false,
        passed: value <= tolerance,
    }
}

fn lower(suite: &str, name: String, value: f64, tolerance: f64) -> Check {
    Check {
        suite: suite.into(),
        name,
        value,
        tolerance,
        lower_bound: true,
        passed: value >= tolerance,
    }
}

fn spectrum(kind: CrossSectionKind, modes: usize) -> CrossSectionSpectrum {
    CrossSectionSpectrum::build(kind, modes).expect("built-in spectrum")
}

fn circle(scale: f64, modes: usize) -> CrossSectionSpectrum {
    spectrum(CrossSectionKind::Circle { scale }, modes)
}

fn sphere(dim: usize, modes: usize) -> CrossSectionSpectrum {
    spectrum(CrossSectionKind::Sphere { dim }, modes)
}

pub fn run_suite(name: &str, seed: u64) -> CliResult<Vec<Check>> {
    match name {
        "poles" => poles(),
        "windows" => windows(),
        "hinfty" => hinfty(),
        "conservation" => conservation(),
        "comparison" => comparison(seed),
        "exponents" => exponents(),
        "fractional" => fractional(),
        "weakform" => weakform(),
        other => Err(CliError::Config(format!(
            "unknown suite '{other}'; expected one of {} or all",
            SUITES.join(", ")
        ))),
    }
}

fn label(s: &CrossSectionSpectrum) -> String {
    match s.kind() {
        CrossSectionKind::Circle { scale } => format!("circle {scale}"),
        CrossSectionKind::Sphere { dim } => format!("sphere {dim}"),
        CrossSectionKind::Custom { .. } => "custom".into(),
    }
}

fn poles() -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let spectra: Vec<CrossSectionSpectrum> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .map(|l| circle(*l, 12))
        .chain([2, 3, 4].iter().map(|d| sphere(*d, 12)))
        .collect();
    for s in &spectra {
        let sym = MellinSymbol::laplacian(s);
        let n = s.dim_n() as f64;
        let label = label(s);
        let mut residual = 0.0f64;
        let mut symmetry = 0.0f64;
        let mut identity = 0.0f64;
        for j in 0..s.n_modes() {
            for q in [sym.q_plus(j), sym.q_minus(j)] {
                residual = residual.max(sym.eval(Complex64::new(q, 0.0))[j].norm());
            }
            symmetry = symmetry.max((sym.q_plus(j) + sym.q_minus(j) - (n - 1.0)).abs());
            identity = identity.max((sym.q_minus(j) + j as f64).abs());
        }
        out.push(upper(
            "poles",
            format!("{label}: symbol residual at q_j"),
            residual,
            1e-12,
        ));
        out.push(upper(
            "poles",
            format!("{label}: q_j^+ + q_j^- - (n-1)"),
            symmetry,
            1e-12,
        ));
        if matches!(s.kind(), CrossSectionKind::Sphere { .. }) {
            out.push(upper(
                "poles",
                format!("{label}: q_j^- + j"),
                identity,
                1e-10,
            ));
        }
        if s.dim_n() == 1 {
            let lattice = sym.poles_of_inverse(-3.0, 3.0)?;
            let wrong = lattice
                .iter()
                .filter(|p| (p.q.abs() < 1e-12) != (p.order == 2) || p.order > 2)
                .count();
            out.push(upper(
                "poles",
                format!("{label}: poles other than a single double pole at 0"),
                wrong as f64,
                0.0,
            ));
        }
    }
    Ok(out)
}

fn windows() -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let s = sphere(2, 12);
    let w = gamma_window(&MellinSymbol::laplacian(&s), GammaRule::Maximal)?;
    let hull = w.hull().unwrap_or(OpenInterval::new(f64::NAN, f64::NAN));
    let err = (hull.lo - 0.5).abs().max((hull.hi - 1.5).abs());
    out.push(upper(
        "windows",
        "sphere 2 maximal window vs (0.5, 1.5)".into(),
        if err.is_nan() { f64::INFINITY } else { err },
        1e-9,
    ));
    for s in [
        circle(0.5, 12),
        circle(2.0, 12),
        circle(3.0, 16),
        sphere(2, 12),
        sphere(3, 12),
    ] {
        let sym = MellinSymbol::laplacian(&s);
        for rule in [
            GammaRule::PorousMedium,
            GammaRule::Maximal,
            GammaRule::CahnHilliard,
        ] {
            let win = gamma_window(&sym, rule)?;
            let mut hits = 0;
            for iv in &win.intervals {
                for t in 0..1000 {
                    let g = iv.lo + iv.length() * (t as f64 + 0.5) / 1000.0;
                    if !(sym.is_elliptic_on_line(g)?.elliptic
                        && sym.is_elliptic_on_line(g + 2.0)?.elliptic)
                    {
                        hits += 1;
                    }
                }
            }
            out.push(upper(
                "windows",
                format!("{} {}: sampled weights on a pole", label(&s), rule.label()),
                hits as f64,
                0.0,
            ));
        }
    }
    Ok(out)
}

fn hinfty() -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for s in [
        circle(0.5, 20),
        circle(1.5, 20),
        circle(2.0, 20),
        circle(3.0, 20),
        sphere(2, 14),
        sphere(3, 14),
    ] {
        let sym = MellinSymbol::laplacian(&s);
        let n = s.dim_n();
        let (mut presets_failed, mut perturbations, mut perturbations_passed) = (0, 0, 0);
        let mut rules = vec![(GammaRule::Maximal, DomainFlavor::TipAsymptotics)];
        rules.extend((0..3).map(|ell| (GammaRule::Nested { ell }, DomainFlavor::Nested)));
        for (rule, flavor) in rules {
            let win = gamma_window(&sym, rule)?;
            if flavor == DomainFlavor::TipAsymptotics && win.k == 0 {
                continue;
            }
            for iv in &win.intervals {
                for t in 1..4 {
                    let g = iv.lo + iv.length() * t as f64 / 4.0;
                    let cfg = WeightConfig::new(n, 0.0, g, 2.0, 2.0);
                    let lattice = hinfty_lattice(&sym, &cfg)?;
                    let d = build_domain(&cfg, &s, flavor.clone(), 2)?;
                    if !check_hinfty_admissible(&d, &cfg, &lattice)?.admissible {
                        presets_failed += 1;
                        continue;
                    }
                    let line = cfg.line();
                    let nf = n as f64;
                    let both = OpenInterval::new(line - 2.0, line)
                        .intersect(&OpenInterval::new(nf - 1.0 - line, nf + 1.0 - line));
                    for j in 1..s.n_modes() {
                        let q = sym.q_plus(j);
                        if !both.contains(q) || d.selects(q, j) {
                            continue;
                        }
                        let bad = d.clone().with_space(AsymptoticsSpace {
                            exponent: q,
                            mode: j,
                            log_power: 0,
                            dimension: s.multiplicities()[j],
                        })?;
                        perturbations += 1;
                        let v = check_hinfty_admissible(&bad, &cfg, &lattice)?;
                        if v.admissible || !v.failed_conditions().contains(&"i") {
                            perturbations_passed += 1;
                        }
                    }
                }
            }
        }
        let label = label(&s);
        out.push(upper(
            "hinfty",
            format!("{label}: presets rejected"),
            presets_failed as f64,
            0.0,
        ));
        out.push(upper(
            "hinfty",
            format!("{label}: of {perturbations} perturbations, accepted or not failing (i)"),
            perturbations_passed as f64,
            0.0,
        ));
    }
    Ok(out)
}

fn wavy(g: &ConeGrid) -> ConeField {
    let pts = g.spectrum().grid().points.clone();
    ConeField::from_physical(g, |x, k| {
        1.0 + 0.3 * (PI * x).cos() + 0.1 * x * x * pts[k].cos()
    })
    .expect("physical grid")
}

fn drift(g: &ConeGrid, traj: &Trajectory) -> f64 {
    let m0 = mass(g, &traj.fields[0]);
    traj.fields
        .iter()
        .map(|u| (mass(g, u) - m0).abs() / m0.abs())
        .fold(0.0, f64::max)
}

fn conservation() -> CliResult<Vec<Check>> {
    let g = ConeGrid::new(circle(2.0, 3), 1e-3, 128)?;
    let u0 = wavy(&g);
    let mut out = Vec::new();
    for (label, eq, dt) in [
        ("pme m=0.5", Equation::Pme { m: 0.5 }, 1e-4),
        ("pme m=2", Equation::Pme { m: 2.0 }, 1e-4),
        ("pme m=3", Equation::Pme { m: 3.0 }, 1e-4),
        (
            "fpme m=2 sigma=0.5",
            Equation::Fpme { m: 2.0, sigma: 0.5 },
            1e-4,
        ),
        (
            "cahn_hilliard",
            Equation::CahnHilliard { stabilization: 2.0 },
            1e-5,
        ),
    ] {
        let traj = Solver::new(&g, SolverConfig::new(eq, dt, 300.0 * dt))?.run(&u0, 1)?;
        out.push(upper(
            "conservation",
            format!("{label}: relative mass drift, 300 steps"),
            drift(&g, &traj),
            1e-9,
        ));
    }
    Ok(out)
}

fn comparison(seed: u64) -> CliResult<Vec<Check>> {
    let g = ConeGrid::new(circle(2.0, 3), 1e-3, 64)?;
    let solver = Solver::new(&g, SolverConfig::new(Equation::Pme { m: 2.0 }, 1e-4, 0.01))?;
    let pts = g.spectrum().grid().points.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for pair in 0..5 {
        let a: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
        let c = rng.gen_range(0.05..0.5);
        let x0 = rng.gen_range(0.1..0.9);
        let w = rng.gen_range(0.05..0.3);
        let base = |x: f64, th: f64| {
            1.0 + a[0] * (PI * x).cos() + a[1] * x * x * th.cos() + a[2] * x * x * th.sin()
        };
        let u0 = ConeField::from_physical(&g, |x, k| base(x, pts[k]))?;
        let v0 = ConeField::from_physical(&g, |x, k| {
            base(x, pts[k]) + c * (-((x - x0) / w).powi(2)).exp() * (1.0 + 0.5 * pts[k].cos())
        })?;
        let tu = solver.run(&u0, 1)?;
        let tv = solver.run(&v0, 1)?;
        let margin = match comparison_check(&g, &tu.fields, &tv.fields, 1e-8)? {
            ComparisonVerdict::Checked { min_margin, .. } => min_margin,
            ComparisonVerdict::PreconditionViolated { initial_margin, .. } => initial_margin,
        };
        out.push(lower(
            "comparison",
            format!("pair {pair}: min (v - u)"),
            margin,
            -1e-8,
        ));
        let mut excursion = 0.0f64;
        for (traj, init) in [(&tu, &u0), (&tv, &v0)] {
            let e = init.extremes(&g);
            excursion = excursion.max(bound_violation(&g, &traj.fields, e.min, e.max));
        }
        out.push(upper(
            "comparison",
            format!("pair {pair}: excursion beyond initial bounds"),
            excursion,
            1e-8,
        ));
    }
    Ok(out)
}

fn exponents() -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for (label, kind) in [
        ("circle 2, mode 1", CrossSectionKind::Circle { scale: 2.0 }),
        ("sphere 2, mode 1", CrossSectionKind::Sphere { dim: 2 }),
    ] {
        let g = ConeGrid::new(spectrum(kind, 3), 1e-3, 256)?;
        let e1 = g.spectrum().basis_range(1).start;
        let c0 = g.spectrum().volume().sqrt();
        let u0 = ConeField::from_modes(&g, |x, b| {
            if b == 0 {
                c0
            } else if b == e1 {
                0.1 * (-1.0 / x).exp()
            } else {
                0.0
            }
        });
        let traj = Solver::new(&g, SolverConfig::new(Equation::Pme { m: 2.0 }, 1e-4, 0.05))?
            .run(&u0, usize::MAX)?;
        let fit = fit_tip_exponent(&g, traj.last(), 1, (3e-3, 1e-1))?;
        let predicted = -g.q_minus()[1];
        out.push(upper(
            "exponents",
            format!(
                "{label}: slope {:.4} vs {predicted}, relative error",
                fit.slope
            ),
            (fit.slope - predicted).abs() / predicted,
            0.1,
        ));
    }
    Ok(out)
}

fn fractional() -> CliResult<Vec<Check>> {
    let g = ConeGrid::new(circle(1.5, 3), 1e-2, 64)?;
    let u = ConeField::from_modes(&g, |x, b| match b {
        0 => 1.0 + (PI * x).cos(),
        1 => x.powf(2.0 / 3.0) * (1.0 - x).powi(2),
        _ => 0.3 * x * x * (1.0 - x).powi(2),
    });
    let fp = FractionalPower::new(&g, InnerBc::AsymptoticRobin)?;
    let solver = Solver::new(&g, SolverConfig::new(Equation::Heat, 1e-3, 1e-3))?;
    let mut minus_l = ConeField::zeros(&g);
    for b in 0..g.basis_len() {
        let col: Vec<f64> = u.coeffs.column(b).iter().copied().collect();
        let r = solver.operators()[g.spectrum().mode_of_basis(b)].apply(&col);
        for (i, v) in r.iter().enumerate() {
            minus_l.coeffs[(i, b)] = -v;
        }
    }
    let scale = minus_l.max_abs();
    let rel = |f: &ConeField| (&f.coeffs - &minus_l.coeffs).abs().max() / scale;
    let one = fp.apply(&g, 1.0, &u)?;
    let half = fp.apply(&g, 0.5, &u)?;
    let twice = fp.apply(&g, 0.5, &half)?;
    Ok(vec![
        upper(
            "fractional",
            "(-L)^1 vs -L, relative".into(),
            rel(&one),
            1e-10,
        ),
        upper(
            "fractional",
            "(-L)^(1/2) (-L)^(1/2) vs -L, relative".into(),
            rel(&twice),
            1e-8,
        ),
    ])
}

fn weakform() -> CliResult<Vec<Check>> {
    let t_end = 0.05;
    let mut residuals = Vec::new();
    for (n_x, dt) in [(33, 5e-3), (65, 2.5e-3), (129, 1.25e-3)] {
        let g = ConeGrid::new(circle(2.0, 3), 1e-3, n_x)?;
        let solver = Solver::new(&g, SolverConfig::new(Equation::Pme { m: 2.0 }, dt, t_end))?;
        let traj = solver.run(&wavy(&g), 1)?;
        let phi = Separable {
            basis: 0,
            time: move |t: f64| t_end - t,
            space: |x: f64| (PI * x).cos(),
            space_d_tau: |x: f64| -PI * x * (PI * x).sin(),
        };
        residuals.push(
            weak_residual(&g, solver.operators(), &traj.times, &traj.fields, 2.0, &phi)?.abs(),
        );
    }
    Ok(residuals
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            lower(
                "weakform",
                format!("observed order, levels {k}-{}", k + 1),
                (w[0] / w[1]).log2(),
                1.0,
            )
        })
        .collect())
}

pub fn render(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let op = if c.lower_bound { ">=" } else { "<=" };
        s += &format!(
            "{}  {:<13} {}: {:.3e} {op} {:.1e}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.tolerance
        );
    }
    s
}
