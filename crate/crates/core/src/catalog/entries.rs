use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, TAU};

use super::{CatalogSpec, Check, Expected, NamedForm, NamedSymmetry, NearAxisChartSpec, SystemSpec};
use crate::expr::{Axis, ChartDomain};

pub const IDS: [&str; 5] = ["duffing_t", "liouville_torus", "t3_twist", "reeb_solid_torus", "modded_symmetry"];

/// Outer radius of the solid-torus disc, kept inside the separatrix circle
/// `r = √2` so interior grids stay off it.
pub const REEB_RADIUS: f64 = std::f64::consts::SQRT_2 - 1e-3;

pub(super) fn spec(id: &str) -> Option<CatalogSpec> {
    Some(match id {
        "duffing_t" => duffing_t(),
        "liouville_torus" => liouville_torus(),
        "t3_twist" => t3_twist(),
        "reeb_solid_torus" => reeb_solid_torus(),
        "modded_symmetry" => modded_symmetry(),
        _ => return None,
    })
}

fn s3(a: &str, b: &str, c: &str) -> [String; 3] {
    [a.to_owned(), b.to_owned(), c.to_owned()]
}

fn form(name: &str, comps: [&str; 3], note: Option<&str>) -> NamedForm {
    NamedForm { name: name.to_owned(), comps: s3(comps[0], comps[1], comps[2]), note: note.map(str::to_owned) }
}

fn symmetry(name: &str, comps: [&str; 3], f: &str, note: Option<&str>) -> NamedSymmetry {
    NamedSymmetry { name: name.to_owned(), comps: s3(comps[0], comps[1], comps[2]), f: f.to_owned(), note: note.map(str::to_owned) }
}

fn expect(check: Check, verdict: &str) -> Expected {
    Expected { check, verdict: verdict.to_owned() }
}

fn chart(names: [&str; 3], axes: [Axis; 3]) -> ChartDomain {
    ChartDomain::new(names, axes).expect("catalog chart")
}

fn duffing_t() -> CatalogSpec {
    let iv = Axis::Interval { lo: -1.5, hi: 1.5 };
    let mut expected = vec![
        expect(Check::Validate, "PASS"),
        expect(Check::CheckAdapted { eta: "dt".into() }, "PASS"),
        expect(Check::ConstructSymmetry { eta: "dt".into() }, "PASS"),
        expect(Check::CheckAdapted { eta: "dx".into() }, "FAIL"),
    ];
    for level in [-0.2, -0.1, 0.1, 0.3] {
        expected.push(expect(Check::ProbeLevel { level, section_axis: 2 }, "REGULAR_TORUS"));
    }
    expected.push(expect(Check::ProbeLevel { level: 0.0, section_axis: 2 }, "CRITICAL_NONAXIS"));
    expected.push(expect(Check::Rectify { eta: "dt".into(), seed: [(0.5 + 0.05f64.sqrt()).sqrt(), 0.0, 0.0], section_axis: 2 }, "PASS"));
    CatalogSpec {
        id: "duffing_t".into(),
        title: "Time-periodic double-well Hamiltonian flow on R² × S¹".into(),
        system: SystemSpec {
            chart: chart(["x", "y", "t"], [iv, iv, Axis::Periodic { period: 1.0 }]),
            params: BTreeMap::new(),
            b: s3("y", "2*x - 4*x^3", "1"),
            psi: Some("y^2/2 - x^2*(1-x^2)".into()),
            nu: None,
            mu: "1".into(),
        },
        eta: vec![form("dt", ["0", "0", "1"], Some("closed, η(B) = 1")), form("dx", ["1", "0", "0"], Some("η(B) = y changes sign"))],
        symmetries: vec![],
        expected,
        notes: vec![
            "ψ = 0 is the figure-eight separatrix through the saddle (0, 0); the toroidal region is its complement.".into(),
            "dt is adapted on the whole chart, including the separatrix.".into(),
        ],
    }
}

fn liouville_torus() -> CatalogSpec {
    let mut params = BTreeMap::new();
    params.insert("a".to_owned(), 1.0);
    // Σ 10^(-n!) for n = 1..4; the n = 4 term is below f64 resolution
    params.insert("b".to_owned(), 0.1 + 0.01 + 1e-6 + 1e-24);
    let f = "(1 + 0.3*cos(2*pi*x) + 0.2*sin(2*pi*(x + y)))";
    CatalogSpec {
        id: "liouville_torus".into(),
        title: "Reparametrized linear flow with Liouville slope on T² × I".into(),
        system: SystemSpec {
            chart: chart(
                ["x", "y", "z"],
                [Axis::Periodic { period: 1.0 }, Axis::Periodic { period: 1.0 }, Axis::Interval { lo: 0.0, hi: 1.0 }],
            ),
            params,
            b: s3(&format!("a*{f}"), &format!("b*{f}"), "0"),
            psi: Some("z".into()),
            nu: None,
            mu: format!("1/{f}"),
        },
        eta: vec![form("dx", ["1", "0", "0"], Some("closed, η(B) = a·F"))],
        symmetries: vec![],
        expected: vec![
            expect(Check::Validate, "PASS"),
            expect(Check::CheckAdapted { eta: "dx".into() }, "PASS"),
            expect(Check::ConstructSymmetry { eta: "dx".into() }, "PASS"),
        ],
        notes: vec![
            "F is a stand-in: a smooth positive trigonometric polynomial, not the function whose existence makes B admit only constant multiples of itself as symmetries.".into(),
            "The symmetry built from dx commutes with B/F, not with B; its existence does not contradict the nonexistence of true symmetries, which is recorded here as metadata only.".into(),
            "The slope b is a truncated Liouville number and is therefore rational in floating point.".into(),
        ],
    }
}

fn t3_twist() -> CatalogSpec {
    let p = Axis::Periodic { period: TAU };
    let t = FRAC_PI_4;
    CatalogSpec {
        id: "t3_twist".into(),
        title: "Reeb field of the twist contact form on T³".into(),
        system: SystemSpec {
            chart: chart(["x", "y", "z"], [p, p, p]),
            params: BTreeMap::new(),
            b: s3("sin(z)", "cos(z)", "0"),
            psi: Some("z".into()),
            nu: None,
            mu: "1".into(),
        },
        eta: vec![form("contact", ["sin(z)", "cos(z)", "0"], Some("contact form; η(B) = 1 and ι_B dη = 0"))],
        symmetries: vec![symmetry("constructed", ["-cos(z)", "sin(z)", "0"], "1", Some("output of the construction from the contact form"))],
        expected: vec![
            expect(Check::Validate, "PASS"),
            expect(Check::CheckAdapted { eta: "contact".into() }, "PASS"),
            expect(Check::ConstructSymmetry { eta: "contact".into() }, "PASS"),
            expect(Check::ForwardNoether { u: "constructed".into(), psi: "z".into() }, "PASS"),
            expect(Check::Obstruction { eta: "contact".into(), seeds: [[0.0, 0.0, t], [0.0, 1.0, t]], section_axis: 0 }, "NO_OBSTRUCTION"),
            expect(Check::Rectify { eta: "contact".into(), seed: [0.0, 0.0, 0.7], section_axis: 0 }, "PASS"),
            expect(Check::Rectify { eta: "contact".into(), seed: [0.0, 0.0, 3f64.atan()], section_axis: 0 }, "SmallDivisor"),
        ],
        notes: vec!["Every level z = c is an invariant torus with linear flow of slope cot c.".into()],
    }
}

fn reeb_solid_torus() -> CatalogSpec {
    let r = REEB_RADIUS;
    let iv = Axis::Interval { lo: -r, hi: r };
    let h = "(x^2+y^2-1)*(1+y^2*(x^2+y^2-2))";
    let ring = NearAxisChartSpec::AreaAngle { center: [0.0, 0.0], psi0: -1.0, slope: 2.0 };
    CatalogSpec {
        id: "reeb_solid_torus".into(),
        title: "Solid torus with Reeb cylinders around a separatrix".into(),
        system: SystemSpec {
            chart: chart(["x", "y", "phi"], [iv, iv, Axis::Periodic { period: 1.0 }]).with_region(&format!("sqrt(x^2+y^2) - {r:?}")),
            params: BTreeMap::new(),
            // planar part is the Hamiltonian field of H
            b: s3(
                "-(2*y*(1+y^2*(x^2+y^2-2)) + (x^2+y^2-1)*(2*y*(x^2+y^2-2) + 2*y^3))",
                "2*x*(1+y^2*(x^2+y^2-2)) + (x^2+y^2-1)*2*x*y^2",
                "y + x^2 + y^2 - 1",
            ),
            psi: Some(h.into()),
            nu: None,
            mu: "1".into(),
        },
        eta: vec![
            form("dphi", ["0", "0", "1"], Some("closed; η(B) = y + x² + y² − 1 changes sign")),
            form("minus_dphi", ["0", "0", "-1"], Some("positive on the tori inside r² + y < 1")),
        ],
        symmetries: vec![symmetry("axial", ["0", "0", "1"], "1", Some("∂φ; B and μ are φ-independent"))],
        expected: vec![
            expect(Check::Validate, "PASS"),
            expect(Check::ForwardNoether { u: "axial".into(), psi: h.into() }, "PASS"),
            expect(Check::CheckAdapted { eta: "dphi".into() }, "FAIL"),
            expect(Check::Obstruction { eta: "dphi".into(), seeds: [[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]], section_axis: 2 }, "OBSTRUCTED"),
            expect(Check::ProbeLevel { level: -1.0, section_axis: 2 }, "AXIS_CANDIDATE"),
            expect(Check::ProbeLevel { level: -0.5, section_axis: 2 }, "REGULAR_TORUS"),
            expect(Check::ProbeLevel { level: 0.0, section_axis: 2 }, "CRITICAL_NONAXIS"),
            expect(Check::Rectify { eta: "minus_dphi".into(), seed: [0.5f64.sqrt(), 0.0, 0.0], section_axis: 2 }, "PASS"),
            expect(Check::NearAxis { guess: [0.0, 0.05, 0.0], section_axis: 2, chart: ring.clone() }, "PASS"),
            expect(Check::NearAxis { guess: [0.0, 0.05, 0.0], section_axis: 2, chart: NearAxisChartSpec::Identity { center: [0.0, 0.0] } }, "FAIL"),
            expect(Check::NearAxis { guess: [0.05, 0.95, 0.0], section_axis: 2, chart: ring }, "AxisNotElliptic"),
        ],
        notes: vec![
            "The periodic orbits through (0, ±1) are traversed in opposite φ-directions and bound a Reeb cylinder, so no closed 1-form is positive on B.".into(),
            "The axis (0, 0) is elliptic; in Cartesian chart coordinates the flux form is not in near-axis normal form, so the area-angle chart with ψ = 2s − 1 is provided.".into(),
            "H is cubic at (0, ±1): the transverse Hessian there vanishes and the saddles are detected by the sign change of ψ − ψ(p).".into(),
        ],
    }
}

fn modded_symmetry() -> CatalogSpec {
    CatalogSpec {
        id: "modded_symmetry".into(),
        title: "Translation field with a symmetry that must be modified along B".into(),
        system: SystemSpec {
            chart: ChartDomain::cube(-1.0, 1.0),
            params: BTreeMap::new(),
            b: s3("1", "0", "0"),
            psi: Some("(y^2+z^2)^2/4".into()),
            nu: None,
            mu: "1".into(),
        },
        eta: vec![form("dx", ["1", "0", "0"], None)],
        symmetries: vec![
            symmetry("u", ["(y^2+z^2)", "(y^2+z^2)*z", "-(y^2+z^2)*y"], "1", None),
            symmetry("u_tilde", ["0", "(y^2+z^2)*z", "-(y^2+z^2)*y"], "1", Some("u − (y² + z²)B, the field built from dx")),
        ],
        expected: vec![
            expect(Check::Validate, "PASS"),
            expect(Check::CheckAdapted { eta: "dx".into() }, "PASS"),
            expect(Check::ConstructSymmetry { eta: "dx".into() }, "PASS"),
            expect(Check::ForwardNoether { u: "u".into(), psi: "(y^2+z^2)^2/4".into() }, "PASS"),
            expect(Check::ForwardNoether { u: "u_tilde".into(), psi: "(y^2+z^2)^2/4".into() }, "PASS"),
            expect(Check::ForwardNoether { u: "u".into(), psi: "-(y^2+z^2)^4/4".into() }, "FAIL"),
            expect(Check::Annihilates { eta: "dx".into(), u: "u_tilde".into() }, "PASS"),
            expect(Check::Annihilates { eta: "dx".into(), u: "u".into() }, "FAIL"),
        ],
        notes: vec![
            "ι_u ι_B μ = d((y² + z²)²/4); the first integral −(y² + z²)⁴/4 does not satisfy it and is kept as a failing check.".into(),
            "Any η' with η'(u) = 0 has η'(B) = 0 on the axis y = z = 0.".into(),
        ],
    }
}
