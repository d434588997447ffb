//! Fixtures shared by the pipeline benchmarks.

use fluxsym::catalog;
use fluxsym::{check_adapted, AdaptedForm, FluxSystem, FourierSeries2, Grid, Tolerances};
use num_complex::Complex64;

/// A catalog system with its first listed 1-form, checked on `grid`.
pub fn adapted(id: &str, grid: &Grid) -> (FluxSystem, AdaptedForm) {
    let e = catalog::load(id).expect("catalog id");
    let eta = e.eta(&e.spec.eta[0].name).expect("catalog eta");
    let af = check_adapted(&e.system, &eta, grid, &Tolerances::default()).expect("adapted");
    (e.system, af)
}

/// Real series with coefficients `e^{-|k|₁/2}` up to order `k`.
pub fn decaying_series(k: usize) -> FourierSeries2 {
    let mut h = FourierSeries2::zeros(k);
    let kk = k as i64;
    for a in -kk..=kk {
        for b in -kk..=kk {
            if (a, b) > (0, 0) {
                let c = Complex64::from_polar((-0.5 * (a.abs() + b.abs()) as f64).exp(), (a - b) as f64);
                h.set(a, b, c);
                h.set(-a, -b, c.conj());
            }
        }
    }
    h
}
