use std::f64::consts::{FRAC_PI_4, PI, TAU};

use super::*;

use crate::testsys::*;


#[test]
fn valid_systems_pass() {
    let t = twist();
    assert!(t.axioms.d_nu.value < 1e-12 && t.axioms.nu_b.value < 1e-12 && t.axioms.div_b.value < 1e-12);
    assert_eq!(t.axioms.tangency, None);
    let du = duffing(duffing_chart());
    assert!(du.axioms.psi_minus_nu.unwrap().value < 1e-12);
    let r = reeb();
    assert!(r.axioms.nu_b.value < 1e-10);
}

#[test]
fn wrong_nu_is_rejected() {
    let c = torus();
    let b = VecField::parse(["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
    let err = validate_flux_system(b, KForm::coordinate(0, c.clone()), KForm::standard_volume(c), None, &grid(), &Tolerances::default())
        .unwrap_err();
    match err {
        FluxError::AxiomViolation { which, value, .. } => {
            assert_eq!(which, Axiom::NuOfB);
            // sup of |sin z| over z = 2πk/9
            assert!((value - (4.0 * PI / 9.0).sin()).abs() < 1e-12);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn adaptedness_checks() {
    let fs = twist();
    let c = fs.chart_arc().clone();
    let tol = Tolerances::default();
    let af = check_adapted(&fs, &one_form(["sin(z)", "cos(z)", "0"], &c), &grid(), &tol).unwrap();
    assert!((af.eta_b_min.value - 1.0).abs() < 1e-14);

    let err = check_adapted(&fs, &one_form(["0", "0", "1"], &c), &grid(), &tol).unwrap_err();
    assert!(matches!(err, FluxError::NotAdapted { reason: NotAdaptedReason::Nonpositive, .. }));

    // dη∧ν = 0.1 cos x: positive on B but not closed modulo ν
    let err = check_adapted(&fs, &one_form(["sin(z)", "cos(z) + 0.1*sin(x)", "0"], &c), &grid(), &tol).unwrap_err();
    match err {
        FluxError::NotAdapted { reason, value, .. } => {
            assert_eq!(reason, NotAdaptedReason::NotClosedModNu);
            assert!((value - 0.1).abs() < 1e-12);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn preadapted_checks() {
    let tol = Tolerances::default();
    let fs = twist();
    let c = fs.chart_arc().clone();
    let r = check_preadapted(&fs, &one_form(["sin(z)", "cos(z)", "0"], &c), &grid(), &tol).unwrap();
    assert!(r.verdict.passed());

    let du = duffing(duffing_chart());
    let c = du.chart_arc().clone();
    assert!(check_preadapted(&du, &KForm::coordinate(2, c.clone()), &grid(), &tol).unwrap().verdict.passed());
    // dx is not positive on B = (y, ..)
    let r = check_preadapted(&du, &KForm::coordinate(0, c), &grid(), &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.eta_b_min < 0.0);
}

#[test]
fn twist_symmetry() {
    let fs = twist();
    let c = fs.chart_arc().clone();
    let tol = Tolerances::default();
    let af = check_adapted(&fs, &one_form(["sin(z)", "cos(z)", "0"], &c), &grid(), &tol).unwrap();
    let cert = construct_symmetry(&fs, &af, &grid(), &tol).unwrap();
    assert!(cert.verdict.passed());
    assert!(cert.max_residual() < 1e-10);
    assert_eq!(cert.residuals.len(), CERTIFICATE_KEYS.len());
    for p in [[0.1, 0.2, 0.3], [1.0, -2.0, 2.5]] {
        let u = cert.u.eval(p).unwrap();
        assert!((u[0] + p[2].cos()).abs() < 1e-14 && (u[1] - p[2].sin()).abs() < 1e-14 && u[2] == 0.0);
    }
    assert!((cert.independence_margin.unwrap() - 1.0).abs() < 1e-12);
    let s = cert.summary("t3_twist");
    let js = serde_json::to_string(&s).unwrap();
    let back: CertificateSummary = serde_json::from_str(&js).unwrap();
    assert_eq!(back, s);
}

#[test]
fn bundle_iso_round_trip() {
    let fs = twist();
    let c = fs.chart_arc().clone();
    let eta = one_form(["sin(z)", "cos(z)", "0"], &c);
    let x = VecField::parse(["sin(y) + 0.5", "x*0 + cos(z)", "sin(x+y)"], c.clone(), &none()).unwrap();
    let alpha = bundle_iso(&fs, &eta, &x).unwrap();
    let back = bundle_iso_inv(&fs, &eta, &alpha, &grid()).unwrap();
    assert!(grid_residual(&back.sub(&x).as_form(), &grid()).unwrap().value < 1e-12);
    let a = one_form(["cos(x)", "z*0 + 1", "sin(y)"], &c);
    let y = bundle_iso_inv(&fs, &eta, &a, &grid()).unwrap();
    let a2 = bundle_iso(&fs, &eta, &y).unwrap();
    assert!(grid_residual(&a2.sub(&a), &grid()).unwrap().value < 1e-12);
}

#[test]
fn noether_on_reeb_and_cone() {
    let tol = Tolerances::default();
    let r = reeb();
    let c = r.chart_arc().clone();
    let rep = forward_noether(&r.mu, &r.b, &VecField::coordinate(2, c.clone()), &ScalarField::constant(1.0), &grid(), &tol).unwrap();
    assert!(grid_residual(&rep.nu.sub(&r.nu), &grid()).unwrap().value < 1e-10);
    assert!(rep.warnings.is_empty());

    let c = Arc::new(ChartDomain::cube(-1.0, 1.0));
    let s = "(y^2+z^2)";
    let u = VecField::parse([s, &format!("{s}*z"), &format!("-{s}*y")], c.clone(), &none()).unwrap();
    let rep =
        forward_noether(&KForm::standard_volume(c.clone()), &VecField::coordinate(0, c.clone()), &u, &ScalarField::constant(1.0), &grid(), &tol)
            .unwrap();
    let oracle = d(&KForm::scalar(sf("(y^2+z^2)^2/4", &c), c.clone())).unwrap();
    assert!(grid_residual(&rep.nu.sub(&oracle), &grid()).unwrap().value < 1e-12);
    assert!(rep.d_nu < 1e-12 && rep.nu_b < 1e-12 && rep.nu_u < 1e-12);

    let err = forward_noether(&KForm::standard_volume(c.clone()), &VecField::coordinate(0, c.clone()), &u, &sf("x", &c), &grid(), &tol);
    assert!(matches!(err, Err(FluxError::Refused(_))));
}

#[test]
fn conformal_identity_holds_for_generic_u() {
    let fs = twist();
    let c = fs.chart_arc().clone();
    let u = VecField::parse(["sin(y)", "cos(x)*sin(z)", "cos(x+z)"], c.clone(), &none()).unwrap();
    let f = sf("2 + sin(x)*cos(y)", &c);
    assert!(conformal_identity_residual(&fs, &u, &f, &grid()).unwrap().value < 1e-12);
}

#[test]
fn blend_right_lobe() {
    let fs = right_lobe();
    let c = fs.chart_arc().clone();
    let tol = Tolerances::default();
    let dt = KForm::coordinate(2, c.clone());
    let g = Grid::uniform(13);
    let single = blend_adapted(&fs, &[BlendPiece { lo: -0.3, hi: 0.05, eta: dt.clone() }], &g, &tol).unwrap();
    assert!(Arc::ptr_eq(single.eta.chart_arc(), dt.chart_arc()));

    let dpsi = fs.nu.clone();
    let pieces = [
        BlendPiece { lo: -0.3, hi: -0.1, eta: dt.clone() },
        BlendPiece { lo: -0.15, hi: 0.05, eta: dt.add(&dpsi) },
    ];
    let rep = blend_adapted(&fs, &pieces, &g, &tol).unwrap();
    assert!(rep.adapted.adapt_residual.value < 1e-9);
    assert!((rep.adapted.eta_b_min.value - 1.0).abs() < 1e-12);

    let gap = [BlendPiece { lo: -0.3, hi: -0.2, eta: dt.clone() }, BlendPiece { lo: -0.15, hi: 0.05, eta: dt.clone() }];
    let r = blend_adapted(&fs, &gap, &g, &tol);
    assert!(matches!(r, Err(FluxError::CoverageGap(s)) if (-0.201..=-0.15).contains(&s)), "{r:?}");

    let bad = [BlendPiece { lo: -0.3, hi: -0.1, eta: dt.clone() }, BlendPiece { lo: -0.15, hi: 0.05, eta: dt.scale_const(-1.0) }];
    assert_eq!(blend_adapted(&fs, &bad, &g, &tol).unwrap_err(), FluxError::PieceNotAdapted(1));
}

fn orbit(start: [f64; 3], vel: [f64; 3], period: f64, n: usize) -> ClosedOrbit {
    let at = |t: f64| [start[0] + vel[0] * t, start[1] + vel[1] * t, start[2] + vel[2] * t];
    ClosedOrbit { points: (0..n).map(|k| at(period * k as f64 / n as f64)).collect(), period, end: at(period) }
}

#[test]
fn reeb_orbits_obstruct_closed_eta() {
    let fs = reeb();
    let c = fs.chart_arc().clone();
    let o0 = orbit([0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 1.0, 64);
    let o1 = orbit([0.0, -1.0, 0.3], [0.0, 0.0, -1.0], 1.0, 64);
    let rep = reeb_obstruction(&fs, &KForm::coordinate(2, c.clone()), &o0, &o1, 1e-8).unwrap();
    assert!((rep.i0 - 1.0).abs() < 1e-12 && (rep.i1 + 1.0).abs() < 1e-12);
    assert_eq!(rep.verdict, ObstructionVerdict::Obstructed);
    assert_eq!(rep.d_eta_on_orbits, 0.0);
}

#[test]
fn twist_orbits_do_not_obstruct() {
    let fs = twist();
    let c = fs.chart_arc().clone();
    let v = [FRAC_PI_4.sin(), FRAC_PI_4.cos(), 0.0];
    let period = TAU * 2f64.sqrt();
    let o0 = orbit([0.0, 0.0, FRAC_PI_4], v, period, 128);
    let o1 = orbit([1.0, 2.5, FRAC_PI_4], v, period, 128);
    let eta = one_form(["sin(z)", "cos(z)", "0"], &c);
    let rep = reeb_obstruction(&fs, &eta, &o0, &o1, 1e-8).unwrap();
    assert!((rep.i0 - period).abs() < 1e-10 && (rep.i1 - period).abs() < 1e-10);
    assert_eq!(rep.verdict, ObstructionVerdict::NoObstruction);

    let rep = reeb_obstruction(&fs, &KForm::zero(1, c.clone()), &o0, &o1, 1e-8).unwrap();
    assert_eq!(rep.verdict, ObstructionVerdict::Vacuous);

    let short = orbit([0.0, 0.0, FRAC_PI_4], v, period * 0.9, 128);
    assert!(matches!(reeb_obstruction(&fs, &eta, &short, &o1, 1e-8), Err(FluxError::OrbitNotClosed(_))));
}
