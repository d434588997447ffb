//! Parsed scalar expressions with exact derivatives to second order.

mod chart;
mod graph;
mod jet;
mod parse;

use std::collections::BTreeMap;

use thiserror::Error;

pub use chart::{Axis, ChartDomain};
pub use graph::{bump_derivs, JetCache, ScalarField, ScalarGraph};
pub use jet::Jet2;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: expected one of {expected:?}")]
    Syntax { position: usize, expected: Vec<String> },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("domain error: {what} at {point:?}")]
    Domain { what: String, point: [f64; 3] },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
}

pub fn parse(src: &str, chart: &ChartDomain, params: &BTreeMap<String, f64>) -> Result<ScalarGraph, ExprError> {
    ScalarGraph::parse(src, chart, params)
}

pub fn eval_jet2(g: &ScalarGraph, p: [f64; 3]) -> Result<Jet2, ExprError> {
    g.eval_jet2(p)
}

/// Largest relative deviation between the jet gradient and Hessian of `g`
/// and central differences with step `h`.
///
/// The gradient is differenced from values and the Hessian from jet
/// gradients, so both carry `O(h^2)` truncation and `O(eps/h)` round-off.
pub fn fd_check(g: &ScalarField, p: [f64; 3], h: f64) -> Result<f64, ExprError> {
    assert!(h > 0.0, "step must be positive");
    let j = g.jet(p)?;
    let mut worst: f64 = 0.0;
    let rel = |ad: f64, fd: f64| (ad - fd).abs() / ad.abs().max(1.0);
    for i in 0..3 {
        let mut pp = p;
        let mut pm = p;
        pp[i] += h;
        pm[i] -= h;
        let fd = (g.value(pp)? - g.value(pm)?) / (2.0 * h);
        worst = worst.max(rel(j.grad[i], fd));
        let gp = g.jet(pp)?.grad;
        let gm = g.jet(pm)?.grad;
        for k in 0..3 {
            let fd2 = (gp[k] - gm[k]) / (2.0 * h);
            worst = worst.max(rel(j.hess(i, k), fd2));
        }
    }
    Ok(worst)
}
