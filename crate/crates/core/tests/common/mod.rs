//! Random smooth fields on catalog charts, shared by integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use fluxsym::expr::{Axis, ChartDomain};
use fluxsym::{KForm, ScalarField, VecField};

/// One factor in a single coordinate: a Fourier mode on periodic axes, a
/// quadratic on intervals.
fn factor<R: Rng>(name: &str, axis: &Axis, rng: &mut R) -> String {
    match *axis {
        Axis::Periodic { period } => {
            let k = rng.gen_range(1..=2);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let trig = if rng.gen_bool(0.5) { "sin" } else { "cos" };
            format!("{trig}({k}*2*pi*{name}/{period:.17} + {phase:.6})")
        }
        Axis::Interval { .. } => {
            let a: f64 = rng.gen_range(0.5..1.5);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let c: f64 = rng.gen_range(-0.5..0.5);
            format!("({a:.6} + {b:.6}*{name} + {c:.6}*{name}^2)")
        }
    }
}

/// A sum of three random separable terms in the chart's coordinates.
pub fn scalar_src<R: Rng>(chart: &ChartDomain, rng: &mut R) -> String {
    let terms: Vec<String> = (0..3)
        .map(|_| {
            let c: f64 = rng.gen_range(-1.0..1.0);
            let f: Vec<String> = (0..3).map(|i| factor(&chart.names[i], &chart.axes[i], rng)).collect();
            format!("{c:.6}*{}*{}*{}", f[0], f[1], f[2])
        })
        .collect();
    terms.join(" + ")
}

pub fn scalar<R: Rng>(chart: &Arc<ChartDomain>, rng: &mut R) -> ScalarField {
    ScalarField::parse(&scalar_src(chart, rng), chart, &BTreeMap::new()).expect("random scalar parses")
}

pub fn vector<R: Rng>(chart: &Arc<ChartDomain>, rng: &mut R) -> VecField {
    VecField::new([scalar(chart, rng), scalar(chart, rng), scalar(chart, rng)], chart.clone())
}

pub fn one_form<R: Rng>(chart: &Arc<ChartDomain>, rng: &mut R) -> KForm {
    KForm::new(1, vec![scalar(chart, rng), scalar(chart, rng), scalar(chart, rng)], chart.clone())
}
