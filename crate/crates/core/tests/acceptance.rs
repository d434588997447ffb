//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit if
//! any failed.

mod common;

use std::f64::consts::{FRAC_PI_4, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::SeedableRng;

use fluxsym::catalog::{self, closed_orbit, CatalogEntry};
use fluxsym::coords::{rectify_band, AreaAngleChart, NearAxisOptions, RectifiedBand, RectifyOptions};
use fluxsym::expr::Axis;
use fluxsym::flux::{
    blend_adapted, bundle_iso, bundle_iso_inv, conformal_identity_residual, reeb_obstruction, BlendPiece, ObstructionVerdict,
};
use fluxsym::geom::{d, grid_residual, wedge};
use fluxsym::torusdyn::solve_cohomological;
use fluxsym::trace::{integrate, poincare, probe_toroidal_region, refine_axis, rotation_number, AxisKind, ProbeOptions};
use fluxsym::{
    check_adapted, construct_symmetry, forward_noether, hamada_check, near_axis_check, rectify_torus, AdaptedForm, CoordsError,
    FluxSystem, FourierSeries2, FrequencyVector, Grid, KForm, LevelClass, ScalarField, Section, Tolerances, TorusError, TraceOptions,
    VecField,
};

type Res = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, &'static str, fn() -> Res);

fn load(id: &str) -> CatalogEntry {
    catalog::load(id).expect("catalog entry")
}

fn sup_vec_diff(a: &VecField, b: &VecField, grid: &Grid) -> f64 {
    grid.sup(a.chart(), |p| {
        let (x, y) = (a.eval(p)?, b.eval(p)?);
        Ok((0..3).map(|i| (x[i] - y[i]).abs()).fold(0.0, f64::max))
    })
    .expect("grid sweep")
    .value
}

fn duffing_seed(psi: f64) -> [f64; 3] {
    let disc = (1.0 + 4.0 * psi).sqrt();
    [((1.0 + disc) / 2.0).sqrt(), 0.0, 0.0]
}

/// duffing_t restricted to the right lobe `x > 0, ψ < 0`.
fn right_lobe(grid: &Grid) -> FluxSystem {
    let mut s = catalog::spec("duffing_t").unwrap().system;
    s.chart.axes[0] = Axis::Interval { lo: 0.0, hi: 1.5 };
    let psi = s.psi.clone().unwrap();
    s.chart = s.chart.with_region(&psi);
    s.build(grid, &Tolerances::default()).unwrap()
}

fn c1_certificates() -> Res {
    let grid = Grid::uniform(33);
    let tol = Tolerances::default();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut certify = |label: &str, fs: &FluxSystem, af: &AdaptedForm, t0: Instant| -> Result<(), Box<dyn std::error::Error>> {
        let cert = construct_symmetry(fs, af, &grid, &tol)?;
        let secs = t0.elapsed().as_secs_f64();
        let worst = cert.max_residual();
        ok &= worst < 1e-9 && secs < 30.0 && cert.residuals.len() == 5;
        parts.push(format!("{label} max {worst:.1e} in {secs:.1}s"));
        Ok(())
    };
    let t0 = Instant::now();
    let twist = load("t3_twist");
    let af = check_adapted(&twist.system, &twist.eta("contact")?, &grid, &tol)?;
    certify("t3_twist/contact", &twist.system, &af, t0)?;

    let t0 = Instant::now();
    let duff = load("duffing_t");
    let af = check_adapted(&duff.system, &duff.eta("dt")?, &grid, &tol)?;
    certify("duffing_t/dt", &duff.system, &af, t0)?;

    let t0 = Instant::now();
    let lobe = right_lobe(&grid);
    let dt = KForm::coordinate(2, lobe.chart_arc().clone());
    let pieces = [
        BlendPiece { lo: -0.3, hi: -0.1, eta: dt.clone() },
        BlendPiece { lo: -0.15, hi: 0.05, eta: dt.add(&lobe.nu) },
    ];
    let blend = blend_adapted(&lobe, &pieces, &grid, &tol)?;
    certify("right lobe/blend", &lobe, &blend.adapted, t0)?;
    Ok((ok, parts.join("; ")))
}

/// Catalog systems with a globally adapted 1-form.
const ADAPTED: [(&str, &str); 4] = [("t3_twist", "contact"), ("duffing_t", "dt"), ("liouville_torus", "dx"), ("modded_symmetry", "dx")];

fn c2_bundle_iso() -> Res {
    let grid = catalog::build_grid();
    let tol = Tolerances::default();
    let mut rng = StdRng::seed_from_u64(2);
    let (mut left, mut right, mut vs_u) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for (id, eta) in ADAPTED {
        let e = load(id);
        let fs = &e.system;
        let eta = e.eta(eta)?;
        let c = fs.chart_arc().clone();
        for _ in 0..5 {
            let x = common::vector(&c, &mut rng);
            let back = bundle_iso_inv(fs, &eta, &bundle_iso(fs, &eta, &x)?, &grid)?;
            left = left.max(sup_vec_diff(&back, &x, &grid));
            let alpha = common::one_form(&c, &mut rng);
            let fwd = bundle_iso(fs, &eta, &bundle_iso_inv(fs, &eta, &alpha, &grid)?)?;
            right = right.max(grid_residual(&fwd.sub(&alpha), &grid)?.value);
            count += 1;
        }
        let af = check_adapted(fs, &eta, &grid, &tol)?;
        let cert = construct_symmetry(fs, &af, &grid, &tol)?;
        let from_nu = bundle_iso_inv(fs, &eta, &fs.nu, &grid)?;
        vs_u = vs_u.max(sup_vec_diff(&from_nu, &cert.u, &grid));
    }
    let ok = count >= 20 && left < 1e-11 && right < 1e-11 && vs_u < 1e-11;
    Ok((ok, format!("{count} fields; inv∘iso {left:.1e}, iso∘inv {right:.1e}, inv(ν) vs u {vs_u:.1e}")))
}

/// `dH` for the Reeb Hamiltonian, written out by hand.
fn reeb_dh(p: [f64; 3]) -> [f64; 3] {
    let (x, y) = (p[0], p[1]);
    let r2 = x * x + y * y;
    let a = r2 - 1.0;
    let c = 1.0 + y * y * (r2 - 2.0);
    [2.0 * x * c + a * 2.0 * x * y * y, 2.0 * y * c + a * (2.0 * y * (r2 - 2.0) + 2.0 * y.powi(3)), 0.0]
}

fn noether_vs(entry: &CatalogEntry, u: &str, oracle: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> Result<f64, Box<dyn std::error::Error>> {
    let grid = catalog::build_grid();
    let fs = &entry.system;
    let (u, f) = entry.symmetry(u)?;
    let rep = forward_noether(&fs.mu, &fs.b, &u, &f, &grid, &Tolerances::default())?;
    Ok(grid
        .sup(fs.chart(), |p| {
            let v = rep.nu.eval3(p)?;
            let w = oracle(p);
            Ok((0..3).map(|i| (v[i] - w[i]).abs()).fold(0.0, f64::max))
        })?
        .value)
}

fn c3a_noether_reeb() -> Res {
    let err = noether_vs(&load("reeb_solid_torus"), "axial", reeb_dh)?;
    Ok((err < 1e-10, format!("reeb ∂φ: ‖ν − dH‖ = {err:.1e}")))
}

fn c3b_noether_modded() -> Res {
    let e = load("modded_symmetry");
    // d(−¼(y²+z²)⁴) = −2(y²+z²)³ (0, y, z)
    let stated = noether_vs(&e, "u", |p| {
        let s = p[1] * p[1] + p[2] * p[2];
        [0.0, -2.0 * s.powi(3) * p[1], -2.0 * s.powi(3) * p[2]]
    })?;
    // d(¼(y²+z²)²) = (y²+z²)(0, y, z)
    let actual = noether_vs(&e, "u", |p| {
        let s = p[1] * p[1] + p[2] * p[2];
        [0.0, s * p[1], s * p[2]]
    })?;
    Ok((stated < 1e-10, format!("ψ = −¼(y²+z²)⁴: {stated:.2e}; ψ = ¼(y²+z²)²: {actual:.1e}")))
}

fn c4_conformal_identity() -> Res {
    let grid = catalog::build_grid();
    let tol = Tolerances::default();
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut n = 0;
    for id in catalog::IDS {
        let e = load(id);
        let fs = &e.system;
        let c = fs.chart_arc().clone();
        let f = e
            .spec
            .eta
            .first()
            .and_then(|form| check_adapted(fs, &e.eta(&form.name).ok()?, &grid, &tol).ok())
            .map(|af| af.eta_b)
            .unwrap_or_else(|| ScalarField::constant(1.0));
        for _ in 0..10 {
            let u = common::vector(&c, &mut rng);
            worst = worst.max(conformal_identity_residual(fs, &u, &f, &grid)?.value);
            n += 1;
        }
    }
    Ok((worst < 1e-9, format!("{n} fields, max {worst:.1e}")))
}

fn c5_obstruction() -> Res {
    let reeb = load("reeb_solid_torus");
    let o0 = closed_orbit(&reeb.system, [0.0, 1.0, 0.0], 2, 128)?;
    let o1 = closed_orbit(&reeb.system, [0.0, -1.0, 0.0], 2, 128)?;
    let r = reeb_obstruction(&reeb.system, &reeb.eta("dphi")?, &o0, &o1, 1e-8)?;
    let twist = load("t3_twist");
    let t0 = closed_orbit(&twist.system, [0.0, 0.0, FRAC_PI_4], 0, 128)?;
    let t1 = closed_orbit(&twist.system, [0.0, 1.0, FRAC_PI_4], 0, 128)?;
    let t = reeb_obstruction(&twist.system, &twist.eta("contact")?, &t0, &t1, 1e-8)?;
    let ok = (r.i0 - 1.0).abs() < 1e-10
        && (r.i1 + 1.0).abs() < 1e-10
        && r.verdict == ObstructionVerdict::Obstructed
        && t.verdict == ObstructionVerdict::NoObstruction;
    Ok((ok, format!("reeb (I0, I1) = ({:.12}, {:.12}) {:?}; twist {:?}", r.i0, r.i1, r.verdict, t.verdict)))
}

fn c6_cohomological() -> Res {
    const K: usize = 64;
    let omega = [1.0, (1.0 + 5f64.sqrt()) / 2.0];
    // ĝ_k = e^{−|k|₁/2} e^{i φ_k}, Hermitian so g is real, zero mean
    let mut g_star = FourierSeries2::zeros(K);
    let kk = K as i64;
    for a in -kk..=kk {
        for b in -kk..=kk {
            if (a, b) <= (0, 0) && !(a == 0 && b == 0) {
                continue;
            }
            if a == 0 && b == 0 {
                continue;
            }
            let c = Complex64::from_polar((-0.5 * (a.abs() + b.abs()) as f64).exp(), (a as f64 + 2.0 * b as f64).sin());
            g_star.set(a, b, c);
            g_star.set(-a, -b, c.conj());
        }
    }
    // h = ω·∇g* sampled directly from the mode sum
    let n = 2 * K + 2;
    let modes: Vec<(f64, f64, Complex64)> = g_star.modes().filter(|m| m.2.norm() > 0.0).map(|(a, b, c)| (a as f64, b as f64, c)).collect();
    let mut samples = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            samples[i * n + j] = modes
                .iter()
                .map(|&(a, b, c)| (c * Complex64::new(0.0, TAU * (a * omega[0] + b * omega[1])) * Complex64::cis(TAU * (a * x + b * y))).re)
                .sum();
        }
    }
    let h = FourierSeries2::from_samples(&samples, n, K)?;
    let sol = solve_cohomological(&FrequencyVector::new(omega, K), &h, 1e-6)?;
    let mut err = 0.0f64;
    for i in 0..25 {
        for j in 0..25 {
            let (x, y) = (i as f64 / 25.0 + 0.013, j as f64 / 25.0 + 0.007);
            let exact: f64 = modes.iter().map(|&(a, b, c)| (c * Complex64::cis(TAU * (a * x + b * y))).re).sum();
            err = err.max((sol.g.eval(x, y) - exact).abs());
        }
    }
    let mut res = FourierSeries2::zeros(4);
    res.set(2, -1, Complex64::new(0.5, 0.0));
    res.set(-2, 1, Complex64::new(0.5, 0.0));
    let resonant = solve_cohomological(&FrequencyVector::new([1.0, 2.0], 4), &res, 1e-6);
    let small = matches!(resonant, Err(TorusError::SmallDivisor { .. }));
    Ok((err < 1e-10 && small, format!("golden mean K = {K}: sup error {err:.1e}; ω = (1, 2) SmallDivisor: {small}")))
}

fn c7_probe() -> Res {
    let duff = load("duffing_t");
    let levels = [-0.2, -0.1, 0.1, 0.3, 0.0];
    let r = probe_toroidal_region(&duff.system, &levels, &ProbeOptions::new(Section::new(2, 0.0)))?;
    let mut ok = levels[..4].iter().all(|&l| r.class_of(l) == Some(LevelClass::RegularTorus));
    ok &= r.class_of(0.0) == Some(LevelClass::CriticalNonaxis);
    let classes: Vec<String> = r.levels.iter().map(|l| format!("{}:{:?}", l.level, l.class)).collect();

    let reeb = load("reeb_solid_torus");
    let rr = probe_toroidal_region(&reeb.system, &[-1.0, 0.0], &ProbeOptions::new(Section::new(2, 0.0)))?;
    let axis_level = &rr.levels[0];
    ok &= axis_level.class == LevelClass::AxisCandidate && rr.levels[1].class == LevelClass::CriticalNonaxis;
    let psi = reeb.system.psi.as_ref().unwrap();
    let guess = axis_level.axes.first().map(|a| a.point).or_else(|| axis_level.seeds.first().copied()).unwrap_or([0.02, 0.01, 0.0]);
    let axis = refine_axis(&reeb.system.b, psi, guess, &Section::new(2, 0.0), &TraceOptions::tight())?;
    let pos = axis.point[0].hypot(axis.point[1]);
    ok &= pos < 1e-8;
    Ok((ok, format!("duffing [{}]; reeb −1: {:?} at |(x, y)| = {pos:.1e}, 0: {:?}", classes.join(", "), axis_level.class, rr.levels[1].class)))
}

fn c8_rectification() -> Res {
    let twist = load("t3_twist");
    let grid = catalog::build_grid();
    let tol = Tolerances::default();
    let af = check_adapted(&twist.system, &twist.eta("contact")?, &grid, &tol)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for z0 in [0.7, 1.3] {
        let c = rectify_torus(&twist.system, &af, [0.0, 0.0, z0], &RectifyOptions::new(Section::new(0, 0.0)))?;
        let [a, b] = c.frequencies();
        let ferr = (a - z0.sin()).abs().max((b - z0.cos()).abs());
        ok &= c.residual_rect < 1e-9 && ferr < 1e-9;
        parts.push(format!("z0 = {z0}: rect {:.1e}, freq {ferr:.1e}", c.residual_rect));
    }
    let duff = load("duffing_t");
    let af = check_adapted(&duff.system, &duff.eta("dt")?, &grid, &tol)?;
    let seed = duffing_seed(-0.2);
    let c = rectify_torus(&duff.system, &af, seed, &RectifyOptions::new(Section::new(2, 0.0)))?;
    // independent rotation number from raw section crossings
    let orbit = poincare(&duff.system.b, &c.section, seed, 512, &TraceOptions::tight())?;
    let rho = rotation_number(&orbit, Some(c.center))?.rho;
    let lifted = c.rho - (c.rho - rho).round();
    let rerr = (c.b / c.a - lifted).abs();
    ok &= c.residual_rect < 1e-4 && rerr < 1e-7;
    parts.push(format!("duffing ψ = −0.2: rect {:.1e}, |b/a − ρ| {rerr:.1e}", c.residual_rect));
    Ok((ok, parts.join("; ")))
}

fn c9_hamada() -> Res {
    let tol = Tolerances::default();
    let grid = catalog::build_grid();
    let h = fluxsym::coords::HamadaOptions { n_theta1: 4, n_theta2: 4, ..Default::default() };
    let mut ok = true;
    let mut parts = Vec::new();

    let twist = load("t3_twist");
    let af = check_adapted(&twist.system, &twist.eta("contact")?, &grid, &tol)?;
    let cert = construct_symmetry(&twist.system, &af, &grid, &tol)?;
    let mut opts = RectifyOptions::new(Section::new(0, 0.0));
    opts.n_crossings = 160;
    opts.k = 8;
    let seeds: Vec<[f64; 3]> = (-1..=1).map(|i| [0.0, 0.0, 0.7 + i as f64 * 1e-4]).collect();
    let charts = rectify_band(&twist.system, &af, &seeds, &opts)?;
    let n_pass = charts.iter().filter(|c| c.verdict().passed()).count();
    let band = RectifiedBand::new(&twist.system, &af, charts, TraceOptions::tight());
    let rep = hamada_check(&twist.system, &cert.u, &band, &h)?;
    ok &= n_pass == 3 && rep.identity_residual < 1e-6;
    parts.push(format!("twist band: {n_pass}/3 charts PASS, identity {:.1e}", rep.identity_residual));

    let lobe = right_lobe(&grid);
    let af = check_adapted(&lobe, &KForm::coordinate(2, lobe.chart_arc().clone()), &grid, &tol)?;
    let cert = construct_symmetry(&lobe, &af, &grid, &tol)?;
    let mut opts = RectifyOptions::new(Section::new(2, 0.0));
    opts.center = Some([0.5f64.sqrt(), 0.0]);
    let seeds: Vec<[f64; 3]> = [-0.2001, -0.2, -0.1999].iter().map(|&p| duffing_seed(p)).collect();
    let charts = rectify_band(&lobe, &af, &seeds, &opts)?;
    let n_pass = charts.iter().filter(|c| c.verdict().passed()).count();
    let band = RectifiedBand::new(&lobe, &af, charts, TraceOptions::tight());
    let rep = hamada_check(&lobe, &cert.u, &band, &h)?;
    ok &= n_pass == 3 && rep.identity_residual < 1e-6;
    parts.push(format!("duffing lobe band: {n_pass}/3 charts PASS, identity {:.1e}", rep.identity_residual));
    Ok((ok, parts.join("; ")))
}

fn c10_near_axis() -> Res {
    let reeb = load("reeb_solid_torus");
    let fs = &reeb.system;
    let psi = fs.psi.as_ref().unwrap();
    let sec = Section::new(2, 0.0);
    let opts = TraceOptions::tight();
    let centre = refine_axis(&fs.b, psi, [0.0, 0.05, 0.0], &sec, &opts)?;
    let chart = AreaAngleChart::new(fs, [0.0, 0.0], -1.0, 2.0)?;
    let na = NearAxisOptions::default();
    let rep = near_axis_check(fs, &centre, &chart, &na)?;
    let mut rejected = 0;
    let guesses = [[0.05, 0.95, 0.0], [0.05, -0.95, 0.0]];
    for g in guesses {
        let saddle = refine_axis(&fs.b, psi, g, &sec, &opts)?;
        if saddle.kind == AxisKind::Hyperbolic && matches!(near_axis_check(fs, &saddle, &chart, &na), Err(CoordsError::AxisNotElliptic(_))) {
            rejected += 1;
        }
    }
    let ok = centre.kind == AxisKind::Elliptic && na.r_max == 0.3 && rep.angular_residual < 1e-3 && rejected == guesses.len();
    Ok((ok, format!("elliptic axis residual {:.1e} at r_max {}; hyperbolic rejected {rejected}/{}", rep.angular_residual, na.r_max, guesses.len())))
}

/// AD gradient against value differences, AD Hessian against differences of
/// the AD gradient, both relative to `max(|AD|, 1)`.
fn ad_vs_fd(g: &ScalarField, p: [f64; 3]) -> f64 {
    let h = 1e-5;
    let j = g.jet(p).unwrap();
    let mut worst = 0.0f64;
    for i in 0..3 {
        let (mut pp, mut pm) = (p, p);
        pp[i] += h;
        pm[i] -= h;
        let fd = (g.value(pp).unwrap() - g.value(pm).unwrap()) / (2.0 * h);
        worst = worst.max((j.grad[i] - fd).abs() / j.grad[i].abs().max(1.0));
        let (gp, gm) = (g.grad(pp).unwrap(), g.grad(pm).unwrap());
        for k in 0..3 {
            let fd2 = (gp[k] - gm[k]) / (2.0 * h);
            worst = worst.max((j.hess(i, k) - fd2).abs() / j.hess(i, k).abs().max(1.0));
        }
    }
    worst
}

fn c11_hygiene() -> Res {
    let grid = Grid::uniform(7);
    let mut ad = 0.0f64;
    let mut n_scalars = 0;
    let mut rng = StdRng::seed_from_u64(11);
    let (mut dd, mut aa) = (0.0f64, 0.0f64);
    for id in catalog::IDS {
        let e = load(id);
        let fs = &e.system;
        let mut scalars: Vec<ScalarField> = fs.b.comps().to_vec();
        scalars.extend(fs.nu.comps().iter().cloned());
        scalars.push(fs.mu.density().clone());
        scalars.extend(fs.psi.clone());
        for f in &e.spec.eta {
            scalars.extend(e.eta(&f.name)?.comps().iter().cloned());
        }
        for s in &e.spec.symmetries {
            let (u, f) = e.symmetry(&s.name)?;
            scalars.extend(u.comps().iter().cloned());
            scalars.push(f);
        }
        n_scalars += scalars.len();
        // off the periodic seams, where coordinate functions such as ψ = z jump
        let seam = |i: usize| fs.chart().axes[i].period().map_or(0.0, |t| 0.01 * t);
        let pts: Vec<[f64; 3]> = grid.points(fs.chart())?.into_iter().map(|p| [p[0] + seam(0), p[1] + seam(1), p[2] + seam(2)]).collect();
        for g in &scalars {
            for &p in &pts {
                ad = ad.max(ad_vs_fd(g, p));
            }
        }
        let c = fs.chart_arc().clone();
        for _ in 0..4 {
            let f = KForm::scalar(common::scalar(&c, &mut rng), c.clone());
            dd = dd.max(grid_residual(&d(&d(&f)?)?, &grid)?.value);
            let a = common::one_form(&c, &mut rng);
            dd = dd.max(grid_residual(&d(&d(&a)?)?, &grid)?.value);
            aa = aa.max(grid_residual(&wedge(&a, &a)?, &grid)?.value);
        }
    }
    let opts = TraceOptions::tight();
    let mut drift = 0.0f64;
    for (id, seed) in [("duffing_t", duffing_seed(-0.2)), ("duffing_t", [1.1, 0.0, 0.0]), ("reeb_solid_torus", [0.5, 0.0, 0.0])] {
        let fs = &load(id).system;
        let tr = integrate(&fs.b, seed, 1e3, fs.psi.as_ref(), &opts)?;
        drift = drift.max(tr.psi_drift.unwrap());
    }
    let ok = ad < 1e-6 && drift < 1e-8 && dd < 1e-11 && aa < 1e-11;
    Ok((ok, format!("AD/FD {ad:.1e} over {n_scalars} scalars; ψ-drift {drift:.1e} at T = 1e3; d∘d {dd:.1e}; α∧α {aa:.1e}")))
}

fn cli_binary() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let bin = dir.join(format!("fluxsym{}", std::env::consts::EXE_SUFFIX));
    if bin.exists() {
        return Some(bin);
    }
    let cargo = std::env::var("CARGO").ok()?;
    let status = Command::new(cargo).args(["build", "-q", "-p", "fluxsym-cli", "--bin", "fluxsym"]).status().ok()?;
    (status.success() && bin.exists()).then_some(bin)
}

fn run_cli(bin: &Path, op: &str, config: &Path, out: &Path) -> Result<(i32, Vec<u8>), Box<dyn std::error::Error>> {
    let status = Command::new(bin).arg(op).arg("--config").arg(config).arg("--out").arg(out).output()?.status;
    Ok((status.code().unwrap_or(-1), std::fs::read(out.join("report.json"))?))
}

fn c12_cli_determinism() -> Res {
    let bin = cli_binary().ok_or("fluxsym binary not found")?;
    let dir = tempfile::tempdir()?;
    let configs = [
        ("verify", r#"{"schema": "fluxsym/1", "system": "t3_twist"}"#),
        ("symmetry", r#"{"schema": "fluxsym/1", "system": "duffing_t", "eta": "dt", "grid": {"counts": [17, 17, 17]}}"#),
        ("probe", r#"{"schema": "fluxsym/1", "system": "duffing_t", "levels": [-0.2, -0.1, 0.1, 0.3, 0.0], "section": {"axis": 2, "value": 0.0}}"#),
        ("coords", r#"{"schema": "fluxsym/1", "system": "t3_twist", "eta": "contact", "seeds": [[0, 0, 0.7]], "section": {"axis": 0, "value": 0.0}}"#),
        ("obstruct", r#"{"schema": "fluxsym/1", "system": "reeb_solid_torus", "eta": "dphi", "orbit_seeds": [[0, 1, 0], [0, -1, 0]]}"#),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (op, text)) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.json"));
        std::fs::write(&cfg, text)?;
        let (c1, r1) = run_cli(&bin, op, &cfg, &dir.path().join(format!("a{i}")))?;
        let (c2, r2) = run_cli(&bin, op, &cfg, &dir.path().join(format!("b{i}")))?;
        // echoed config re-runs to the same report
        let report: serde_json::Value = serde_json::from_slice(&r1)?;
        let echo = dir.path().join(format!("e{i}.json"));
        std::fs::write(&echo, serde_json::to_string(&report["config"])?)?;
        let (c3, r3) = run_cli(&bin, op, &echo, &dir.path().join(format!("e{i}")))?;
        let same = r1 == r2 && c1 == 0 && c2 == 0 && c3 == 0;
        let echo_same = serde_json::from_slice::<serde_json::Value>(&r3)?["payload"] == report["payload"];
        ok &= same && echo_same;
        parts.push(format!("{op}: {}", if same && echo_same { "identical" } else { "differs" }));
    }
    Ok((ok, parts.join(", ")))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("1", "symmetry certificates on 33³", c1_certificates),
        ("2", "bundle isomorphism round trips", c2_bundle_iso),
        ("3a", "forward Noether, reeb_solid_torus", c3a_noether_reeb),
        ("3b", "forward Noether, modded_symmetry", c3b_noether_modded),
        ("4", "conformal identity", c4_conformal_identity),
        ("5", "Reeb obstruction", c5_obstruction),
        ("6", "cohomological solver", c6_cohomological),
        ("7", "toroidal region probe", c7_probe),
        ("8", "rectification", c8_rectification),
        ("9", "Hamada identity", c9_hamada),
        ("10", "near-axis form", c10_near_axis),
        ("11", "numerics hygiene", c11_hygiene),
        ("12", "CLI determinism", c12_cli_determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(p) => (false, format!("panic: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
        };
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {id:>3}  {name}: {detail}  [{:.1}s]", t0.elapsed().as_secs_f64());
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
    println!("acceptance: all passed");
}

