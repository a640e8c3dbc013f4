//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conetool_core::mellin::MellinSymbol;
use conetool_core::solver::{
    bound_violation, comparison_check, energy_phi, fit_tip_exponent, mass, rate_norm,
    weak_residual, ComparisonVerdict, ConeField, ConeGrid, Equation, FractionalPower, InnerBc,
    Separable, Solver, SolverConfig, Trajectory,
};
use conetool_core::spectrum::{CrossSectionKind, CrossSectionSpectrum};
use conetool_core::weights::{
    build_domain, check_hinfty_admissible, gamma_window, hinfty_lattice, AsymptoticsSpace,
    DomainFlavor, GammaRule, OpenInterval, WeightConfig,
};

type Outcome = Result<String, String>;

fn circle(scale: f64, modes: usize) -> CrossSectionSpectrum {
    CrossSectionSpectrum::build(CrossSectionKind::Circle { scale }, modes).unwrap()
}

fn sphere(dim: usize, modes: usize) -> CrossSectionSpectrum {
    CrossSectionSpectrum::build(CrossSectionKind::Sphere { dim }, modes).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pole_algebra() -> Outcome {
    let mut worst_residual = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut worst_sphere = 0.0f64;
    let spectra: Vec<CrossSectionSpectrum> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .map(|l| circle(*l, 12))
        .chain([2, 3, 4].iter().map(|d| sphere(*d, 12)))
        .collect();
    for s in &spectra {
        let sym = MellinSymbol::laplacian(s);
        let n = s.dim_n() as f64;
        for j in 0..s.n_modes() {
            for q in [sym.q_plus(j), sym.q_minus(j)] {
                let r = sym.eval(Complex64::new(q, 0.0))[j].norm();
                worst_residual = worst_residual.max(r);
            }
            worst_sum = worst_sum.max((sym.q_plus(j) + sym.q_minus(j) - (n - 1.0)).abs());
            if matches!(s.kind(), CrossSectionKind::Sphere { .. }) {
                worst_sphere = worst_sphere.max((sym.q_minus(j) + j as f64).abs());
            }
        }
    }
    check(
        worst_residual < 1e-12 && worst_sum < 1e-12 && worst_sphere < 1e-10,
        format!(
            "residual {worst_residual:.1e}, q+ + q- - (n-1) {worst_sum:.1e}, sphere q_j^- + j {worst_sphere:.1e}"
        ),
    )
}

fn double_poles() -> Outcome {
    let mut bad = Vec::new();
    for k in 1..=20 {
        let ell = 0.25 * k as f64;
        let modes = (4.0 * ell).ceil() as usize + 3;
        let s = circle(ell, modes);
        let lattice = MellinSymbol::laplacian(&s)
            .poles_of_inverse(-3.0, 3.0)
            .unwrap();
        let doubles: Vec<f64> = lattice
            .iter()
            .filter(|p| p.order == 2)
            .map(|p| p.q)
            .collect();
        let others_simple = lattice.iter().all(|p| p.order == 1 || p.q.abs() < 1e-12);
        if doubles.len() != 1 || doubles[0].abs() > 1e-12 || !others_simple {
            bad.push(ell);
        }
    }
    check(
        bad.is_empty(),
        format!("20 circle scales, failures at {bad:?}"),
    )
}

fn weight_windows() -> Outcome {
    let s = sphere(2, 12);
    let sym = MellinSymbol::laplacian(&s);
    let w = gamma_window(&sym, GammaRule::Maximal).unwrap();
    let hull = w.hull().ok_or("empty maximal window")?;
    let ends_ok = (hull.lo - 0.5).abs() < 1e-9 && (hull.hi - 1.5).abs() < 1e-9;
    let mut samples = 0;
    let mut hits = 0;
    let spectra = [
        circle(0.5, 12),
        circle(2.0, 12),
        circle(3.0, 16),
        sphere(2, 12),
        sphere(3, 12),
    ];
    for s in &spectra {
        let sym = MellinSymbol::laplacian(s);
        let rules = [
            GammaRule::PorousMedium,
            GammaRule::Maximal,
            GammaRule::CahnHilliard,
            GammaRule::Nested { ell: 1 },
            GammaRule::Nested { ell: 2 },
        ];
        for rule in rules {
            let win = gamma_window(&sym, rule).unwrap();
            for iv in &win.intervals {
                for t in 0..1000 {
                    let g = iv.lo + iv.length() * (t as f64 + 0.5) / 1000.0;
                    samples += 1;
                    let here = sym.is_elliptic_on_line(g).unwrap().elliptic;
                    let shifted = sym.is_elliptic_on_line(g + 2.0).unwrap().elliptic;
                    if !(here && shifted) {
                        hits += 1;
                    }
                }
            }
        }
    }
    check(
        ends_ok && hits == 0 && samples > 0,
        format!(
            "sphere n=2 maximal window ({:.12}, {:.12}); {samples} samples, {hits} on a pole",
            hull.lo, hull.hi
        ),
    )
}

fn hinfty() -> Outcome {
    let spectra = [
        circle(0.5, 20),
        circle(1.0, 20),
        circle(1.5, 20),
        circle(2.0, 20),
        circle(2.5, 20),
        circle(3.0, 20),
        circle(4.0, 24),
        sphere(2, 14),
        sphere(3, 14),
        sphere(4, 14),
    ];
    let (mut presets, mut perturbed, mut failures) = (0, 0, Vec::new());
    for s in &spectra {
        let sym = MellinSymbol::laplacian(s);
        let n = s.dim_n();
        let mut rules = vec![(GammaRule::Maximal, DomainFlavor::TipAsymptotics)];
        for ell in 0..4 {
            rules.push((GammaRule::Nested { ell }, DomainFlavor::Nested));
        }
        for (rule, flavor) in rules {
            let win = gamma_window(&sym, rule).unwrap();
            if flavor == DomainFlavor::TipAsymptotics && win.k == 0 {
                continue;
            }
            for iv in &win.intervals {
                for t in 1..6 {
                    let g = iv.lo + iv.length() * t as f64 / 6.0;
                    let cfg = WeightConfig::new(n, 0.0, g, 2.0, 2.0);
                    let lattice = hinfty_lattice(&sym, &cfg).unwrap();
                    let d = build_domain(&cfg, s, flavor.clone(), 2).unwrap();
                    presets += 1;
                    let v = check_hinfty_admissible(&d, &cfg, &lattice).unwrap();
                    if !v.admissible {
                        failures.push(format!("{:?} {} gamma {g}", s.kind(), rule.label()));
                        continue;
                    }
                    let line = cfg.line();
                    let nf = n as f64;
                    let window = OpenInterval::new(line - 2.0, line)
                        .intersect(&OpenInterval::new(nf - 1.0 - line, nf + 1.0 - line));
                    for j in 1..s.n_modes() {
                        let q = sym.q_plus(j);
                        if !window.contains(q) || d.selects(q, j) {
                            continue;
                        }
                        let bad = d
                            .clone()
                            .with_space(AsymptoticsSpace {
                                exponent: q,
                                mode: j,
                                log_power: 0,
                                dimension: s.multiplicities()[j],
                            })
                            .unwrap();
                        perturbed += 1;
                        let v = check_hinfty_admissible(&bad, &cfg, &lattice).unwrap();
                        if v.admissible || !v.failed_conditions().contains(&"i") {
                            failures.push(format!("{:?} gamma {g} plus-space {q}", s.kind()));
                        }
                    }
                }
            }
        }
    }
    check(
        failures.is_empty() && perturbed > 0,
        format!("{presets} preset domains, {perturbed} perturbations, failures {failures:?}"),
    )
}

fn heat_oracle() -> Outcome {
    let g = ConeGrid::new(circle(2.0, 3), 1e-3, 64).unwrap();
    let u0 = ConeField::from_modes(&g, |x, b| match b {
        0 => 2.0 + (PI * x).cos(),
        1 => 0.3 * x.powi(2) * (1.0 - x).powi(2),
        2 => 0.2 * x.powi(3) * (1.0 - x).powi(2),
        _ => 0.1 * x.powi(2) * (1.0 - x).powi(3),
    });
    let t = 0.01;
    let traj = Solver::new(&g, SolverConfig::new(Equation::Heat, 1e-4, t))
        .unwrap()
        .run(&u0, 100)
        .unwrap();
    let solver = Solver::new(&g, SolverConfig::new(Equation::Heat, 1e-4, t)).unwrap();
    let mut reference = ConeField::zeros(&g);
    for b in 0..g.basis_len() {
        let l = solver.operators()[g.spectrum().mode_of_basis(b)].to_dense();
        reference
            .coeffs
            .set_column(b, &((l * t).exp() * u0.coeffs.column(b)));
    }
    let err = (&traj.last().coeffs - &reference.coeffs).abs().max() / reference.coeffs.abs().max();
    check(
        err < 1e-3,
        format!("max relative error {err:.2e} at t = {t}"),
    )
}

fn wavy_positive(g: &ConeGrid) -> ConeField {
    ConeField::from_physical(g, |x, k| {
        let th = g.spectrum().grid().points[k];
        1.0 + 0.3 * (PI * x).cos() + 0.1 * x * x * th.cos()
    })
    .unwrap()
}

fn max_drift(g: &ConeGrid, traj: &Trajectory) -> f64 {
    let m0 = mass(g, &traj.fields[0]);
    traj.fields
        .iter()
        .map(|u| (mass(g, u) - m0).abs() / m0.abs())
        .fold(0.0, f64::max)
}

fn conservation() -> Outcome {
    let g = ConeGrid::new(circle(2.0, 3), 1e-3, 256).unwrap();
    let u0 = wavy_positive(&g);
    let mut parts = Vec::new();
    let mut ok = true;
    for (eq, dt) in [
        (Equation::Pme { m: 0.5 }, 1e-4),
        (Equation::Pme { m: 2.0 }, 1e-4),
        (Equation::Pme { m: 3.0 }, 1e-4),
        (Equation::CahnHilliard { stabilization: 2.0 }, 1e-5),
    ] {
        let label = match &eq {
            Equation::Pme { m } => format!("pme m={m}"),
            other => other.name().to_string(),
        };
        let traj = Solver::new(&g, SolverConfig::new(eq, dt, 1000.0 * dt))
            .unwrap()
            .run(&u0, 1)
            .map_err(|e| format!("{label}: {e}"))?;
        let d = max_drift(&g, &traj);
        ok &= d < 1e-9 && traj.fields.len() == 1001;
        parts.push(format!("{label} {d:.1e}"));
    }
    check(
        ok,
        format!("1000 steps, max relative drift: {}", parts.join(", ")),
    )
}

fn comparison() -> Outcome {
    let g = ConeGrid::new(circle(2.0, 3), 1e-3, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let solver = Solver::new(&g, SolverConfig::new(Equation::Pme { m: 2.0 }, 1e-4, 0.02)).unwrap();
    let mut worst_margin = f64::INFINITY;
    let mut worst_bound = 0.0f64;
    let mut passed = 0;
    for _ in 0..20 {
        let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
        let c = rng.gen_range(0.05..0.5);
        let x0 = rng.gen_range(0.1..0.9);
        let w = rng.gen_range(0.05..0.3);
        let base = |x: f64, th: f64| {
            1.0 + a[0] * (PI * x).cos()
                + a[1] * x * x * th.cos()
                + a[2] * x * x * th.sin()
                + 0.1 * a[3] * (2.0 * PI * x).cos()
        };
        let pts = &g.spectrum().grid().points;
        let u0 = ConeField::from_physical(&g, |x, k| base(x, pts[k])).unwrap();
        let v0 = ConeField::from_physical(&g, |x, k| {
            base(x, pts[k]) + c * (-((x - x0) / w).powi(2)).exp() * (1.0 + 0.5 * pts[k].cos())
        })
        .unwrap();
        let tu = solver.run(&u0, 1).map_err(|e| e.to_string())?;
        let tv = solver.run(&v0, 1).map_err(|e| e.to_string())?;
        match comparison_check(&g, &tu.fields, &tv.fields, 1e-8).unwrap() {
            ComparisonVerdict::Checked {
                passed: p,
                min_margin,
                ..
            } => {
                worst_margin = worst_margin.min(min_margin);
                passed += p as usize;
            }
            v => return Err(format!("unordered initial pair: {v:?}")),
        }
        for (traj, init) in [(&tu, &u0), (&tv, &v0)] {
            let e = init.extremes(&g);
            worst_bound = worst_bound.max(bound_violation(&g, &traj.fields, e.min, e.max));
        }
    }
    check(
        passed == 20 && worst_bound <= 1e-8,
        format!("{passed}/20 pairs ordered, worst margin {worst_margin:.1e}, worst bound excursion {worst_bound:.1e}"),
    )
}

fn tip_slope(
    kind: CrossSectionKind,
    x_min: f64,
    n_x: usize,
    heat_oracle: bool,
) -> Result<(f64, f64), String> {
    let s = CrossSectionSpectrum::build(kind, 3).unwrap();
    let g = ConeGrid::new(s, x_min, n_x).unwrap();
    let e1 = g.spectrum().basis_range(1).start;
    let c0 = 1.0 / g.spectrum().basis_vector(0)[0];
    let (u0, eq, t_end) = if heat_oracle {
        // linearization around 1: d_t v = m Delta v, run in rescaled time
        let u0 = ConeField::from_modes(
            &g,
            |x, b| if b == e1 { 0.1 * (-1.0 / x).exp() } else { 0.0 },
        );
        (u0, Equation::Heat, 0.1)
    } else {
        let u0 = ConeField::from_modes(&g, |x, b| {
            if b == 0 {
                c0
            } else if b == e1 {
                0.1 * (-1.0 / x).exp()
            } else {
                0.0
            }
        });
        (u0, Equation::Pme { m: 2.0 }, 0.05)
    };
    let traj = Solver::new(&g, SolverConfig::new(eq, 1e-4, t_end))
        .unwrap()
        .run(&u0, 100_000)
        .map_err(|e| e.to_string())?;
    let fit = fit_tip_exponent(&g, traj.last(), 1, (3.0 * x_min, 100.0 * x_min))
        .map_err(|e| e.to_string())?;
    let predicted = -g.q_minus()[1];
    Ok((fit.slope, (fit.slope - predicted).abs() / predicted))
}

fn tip_asymptotics() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, label) in [
        (CrossSectionKind::Circle { scale: 2.0 }, "circle l=2 (0.5)"),
        (CrossSectionKind::Sphere { dim: 2 }, "sphere n=2 (1.0)"),
    ] {
        let (slope, err) = tip_slope(kind.clone(), 1e-3, 256, false)?;
        let (_, err_fine) = tip_slope(kind.clone(), 1e-4, 256, false)?;
        let (oracle, _) = tip_slope(kind, 1e-3, 256, true)?;
        ok &= err < 0.1 && err_fine < err;
        parts.push(format!(
            "{label}: slope {slope:.4} err {err:.1e} -> {err_fine:.1e} at x_min 1e-4, heat oracle {oracle:.4}"
        ));
    }
    check(ok, parts.join("; "))
}

fn cahn_hilliard() -> Outcome {
    let g = ConeGrid::new(circle(2.0, 3), 1e-2, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_rate = 0.0f64;
    let mut longest = 0.0f64;
    let pts = g.spectrum().grid().points.clone();
    let e0 = g.spectrum().basis_vector(0)[0];
    for _ in 0..5 {
        let a: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
        let mut u0 = ConeField::from_physical(&g, |x, k| {
            let th = pts[k];
            a[0] * (PI * x).cos()
                + a[1] * (2.0 * PI * x).cos()
                + a[2] * x * x * th.cos()
                + a[3] * x * x * th.sin()
                + a[4] * x * x * (2.0 * th).cos()
        })
        .unwrap();
        let shift = mass(&g, &u0) / g.volume() / e0;
        u0.coeffs.column_mut(0).add_scalar_mut(-shift);

        let solver = Solver::new(
            &g,
            SolverConfig::new(Equation::CahnHilliard { stabilization: 2.0 }, 1e-4, 0.2),
        )
        .unwrap();
        let traj = solver.run(&u0, 1).map_err(|e| e.to_string())?;
        let energies: Vec<f64> = traj
            .fields
            .iter()
            .map(|u| energy_phi(&g, u, solver.operators()).unwrap())
            .collect();
        for w in energies.windows(2) {
            worst_increase = worst_increase.max(w[1] - w[0]);
        }

        let dt = 1e-2;
        let long = Solver::new(
            &g,
            SolverConfig::new(Equation::CahnHilliard { stabilization: 2.0 }, dt, 100.0),
        )
        .unwrap();
        let mut u = traj.last().clone();
        let mut t = 0.0;
        let mut rate = f64::INFINITY;
        while t < 100.0 && rate >= 1e-6 {
            let next = long.step(&u, t).map_err(|e| e.to_string())?;
            rate = rate_norm(&g, &u, &next, dt);
            u = next;
            t += dt;
        }
        worst_rate = worst_rate.max(rate);
        longest = longest.max(t);
    }
    check(
        worst_increase <= 1e-8 && worst_rate < 1e-6,
        format!(
            "5 runs x 2000 steps, largest energy change {worst_increase:.1e}; relaxed to |u_t| {worst_rate:.1e} by t = {longest:.1}"
        ),
    )
}

fn fractional() -> Outcome {
    let g = ConeGrid::new(circle(1.5, 3), 1e-2, 64).unwrap();
    let u = ConeField::from_modes(&g, |x, b| match b {
        0 => 1.0 + (PI * x).cos(),
        1 => x.powf(2.0 / 3.0) * (1.0 - x).powi(2),
        _ => 0.3 * x * x * (1.0 - x).powi(2),
    });
    let fp = FractionalPower::new(&g, InnerBc::AsymptoticRobin).unwrap();
    let solver = Solver::new(&g, SolverConfig::new(Equation::Heat, 1e-3, 1e-3)).unwrap();
    let mut minus_l = ConeField::zeros(&g);
    for b in 0..g.basis_len() {
        let col: Vec<f64> = u.coeffs.column(b).iter().copied().collect();
        let r = solver.operators()[g.spectrum().mode_of_basis(b)].apply(&col);
        for (i, v) in r.iter().enumerate() {
            minus_l.coeffs[(i, b)] = -v;
        }
    }
    let scale = minus_l.coeffs.abs().max();
    let one = fp.apply(&g, 1.0, &u).unwrap();
    let e1 = (&one.coeffs - &minus_l.coeffs).abs().max() / scale;
    let half = fp.apply(&g, 0.5, &u).unwrap();
    let twice = fp.apply(&g, 0.5, &half).unwrap();
    let e2 = (&twice.coeffs - &minus_l.coeffs).abs().max() / scale;

    let mg = ConeGrid::new(circle(2.0, 3), 1e-3, 256).unwrap();
    let u0 = wavy_positive(&mg);
    let traj = Solver::new(
        &mg,
        SolverConfig::new(Equation::Fpme { m: 2.0, sigma: 0.5 }, 1e-4, 0.1),
    )
    .unwrap()
    .run(&u0, 1)
    .map_err(|e| e.to_string())?;
    let drift = max_drift(&mg, &traj);
    check(
        e1 < 1e-10 && e2 < 1e-8 && drift < 1e-9,
        format!("sigma=1 error {e1:.1e}, half-power composition {e2:.1e}, FPME 1000-step drift {drift:.1e}"),
    )
}

fn weak_form() -> Outcome {
    let t_end = 0.05;
    let mut residuals = Vec::new();
    for (n_x, dt) in [(33, 5e-3), (65, 2.5e-3), (129, 1.25e-3)] {
        let g = ConeGrid::new(circle(2.0, 3), 1e-3, n_x).unwrap();
        let u0 = wavy_positive(&g);
        let solver =
            Solver::new(&g, SolverConfig::new(Equation::Pme { m: 2.0 }, dt, t_end)).unwrap();
        let traj = solver.run(&u0, 1).map_err(|e| e.to_string())?;
        let phi = Separable {
            basis: 0,
            time: move |t: f64| t_end - t,
            space: |x: f64| (PI * x).cos(),
            space_d_tau: |x: f64| -PI * x * (PI * x).sin(),
        };
        let r = weak_residual(&g, solver.operators(), &traj.times, &traj.fields, 2.0, &phi)
            .map_err(|e| e.to_string())?;
        residuals.push(r.abs());
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    check(
        orders.iter().all(|o| *o >= 1.0),
        format!(
            "residuals [{}], observed orders {orders:.3?}",
            residuals
                .iter()
                .map(|r| format!("{r:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, u64); 11] = [
        ("pole algebra", pole_algebra, 1),
        ("double pole detection", double_poles, 1),
        ("weight windows", weight_windows, 1),
        ("H-infinity admissibility", hinfty, 1),
        ("heat oracle", heat_oracle, 10),
        ("conservation", conservation, 60),
        ("comparison principle", comparison, 60),
        ("tip asymptotics", tip_asymptotics, 120),
        ("Cahn-Hilliard gradient flow", cahn_hilliard, 180),
        ("fractional operator", fractional, 30),
        ("weak-form residual", weak_form, 60),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += (!ok) as usize;
        println!(
            "{} {:>2}. {name}: {detail} [{:.2}s of {budget}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
