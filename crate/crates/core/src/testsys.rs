//! Shared systems for unit tests.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::expr::{Axis, ChartDomain, ScalarField};
use crate::flux::{validate_flux_system, FluxSystem, Tolerances};
use crate::geom::{d, Grid, KForm, VecField};

pub(crate) fn none() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

pub(crate) fn torus() -> Arc<ChartDomain> {
    Arc::new(ChartDomain::new(["x", "y", "z"], [Axis::Periodic { period: TAU }; 3]).unwrap())
}

pub(crate) fn grid() -> Grid {
    Grid::uniform(9)
}

pub(crate) fn sf(src: &str, c: &Arc<ChartDomain>) -> ScalarField {
    ScalarField::parse(src, c, &none()).unwrap()
}

pub(crate) fn one_form(srcs: [&str; 3], c: &Arc<ChartDomain>) -> KForm {
    KForm::parse(1, &srcs, c.clone(), &none()).unwrap()
}

pub(crate) fn twist() -> FluxSystem {
    let c = torus();
    let b = VecField::parse(["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
    validate_flux_system(b, KForm::coordinate(2, c.clone()), KForm::standard_volume(c.clone()), Some(sf("z", &c)), &grid(), &Tolerances::default())
        .unwrap()
}

pub(crate) const DUFFING_PSI: &str = "y^2/2 - x^2*(1-x^2)";

pub(crate) fn duffing(chart: ChartDomain) -> FluxSystem {
    let c = Arc::new(chart);
    let b = VecField::parse(["y", "2*x - 4*x^3", "1"], c.clone(), &none()).unwrap();
    let psi = sf(DUFFING_PSI, &c);
    let nu = d(&KForm::scalar(psi.clone(), c.clone())).unwrap();
    validate_flux_system(b, nu, KForm::standard_volume(c.clone()), Some(psi), &grid(), &Tolerances::default()).unwrap()
}

pub(crate) fn duffing_chart() -> ChartDomain {
    ChartDomain::new(
        ["x", "y", "t"],
        [Axis::Interval { lo: -1.5, hi: 1.5 }, Axis::Interval { lo: -1.5, hi: 1.5 }, Axis::Periodic { period: 1.0 }],
    )
    .unwrap()
}

pub(crate) fn right_lobe() -> FluxSystem {
    let mut c = duffing_chart();
    c.axes[0] = Axis::Interval { lo: 0.0, hi: 1.5 };
    duffing(c.with_region(DUFFING_PSI))
}

pub(crate) const H: &str = "(x^2+y^2-1)*(1+y^2*(x^2+y^2-2))";

pub(crate) fn reeb() -> FluxSystem {
    let r = 2f64.sqrt();
    let c = Arc::new(
        ChartDomain::new(
            ["x", "y", "phi"],
            [Axis::Interval { lo: -r, hi: r }, Axis::Interval { lo: -r, hi: r }, Axis::Periodic { period: 1.0 }],
        )
        .unwrap()
        .with_region("sqrt(x^2+y^2) - sqrt(2)"),
    );
    let h = sf(H, &c);
    let b = VecField::new([-h.partial(1), h.partial(0), sf("y + x^2 + y^2 - 1", &c)], c.clone());
    let nu = d(&KForm::scalar(h.clone(), c.clone())).unwrap();
    validate_flux_system(b, nu, KForm::standard_volume(c.clone()), Some(h), &grid(), &Tolerances::default()).unwrap()
}
