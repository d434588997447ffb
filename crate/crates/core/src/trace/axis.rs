use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::expr::{Axis, ChartDomain, ScalarField};
use crate::geom::VecField;

use super::dopri::eval;
use super::section::{poincare, Direction, Section};
use super::{integrate, split_lift, TraceError, TraceOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// `ψ` has a strict transverse extremum with definite Hessian.
    Elliptic,
    /// `ψ − ψ(axis)` changes sign arbitrarily close to the orbit.
    Hyperbolic,
    /// Extremum with a singular transverse Hessian.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    /// Fixed point of the return map, reduced into the chart.
    pub point: [f64; 3],
    pub period: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Sup of `‖dψ‖` along one period.
    pub dpsi_max: f64,
    pub hessian_eigenvalues: [f64; 2],
    pub kind: AxisKind,
    pub section: Section,
}

const FD_STEP: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-11;
const MAX_ITER: usize = 40;

/// Return-map displacement `P(q) − q` in section coordinates and the return time.
fn displacement(b: &VecField, section: &Section, q: [f64; 2], opts: &TraceOptions) -> Result<([f64; 2], f64), TraceError> {
    let p = section.embed(q);
    let v = eval(b, p)?;
    let dir = if v[section.axis] >= 0.0 { Direction::Positive } else { Direction::Negative };
    let orbit = poincare(b, &section.clone().with_direction(dir), p, 1, opts)?;
    let r = orbit.in_section(0);
    let mut g = [r[0] - q[0], r[1] - q[1]];
    for (j, &a) in section.others().iter().enumerate() {
        if let Some(t) = b.chart().axes[a].period() {
            g[j] -= t * (g[j] / t).round();
        }
    }
    Ok((g, orbit.crossings[0].t))
}

pub(crate) fn span_scale(chart: &ChartDomain) -> f64 {
    chart.axes.iter().map(Axis::span).fold(f64::INFINITY, f64::min)
}

/// Newton iteration for a fixed point of the section return map near
/// `guess`, followed by the criticality and Morse–Bott diagnostics of `ψ`.
pub fn refine_axis(
    b: &VecField,
    psi: &ScalarField,
    guess: [f64; 3],
    section: &Section,
    opts: &TraceOptions,
) -> Result<AxisReport, TraceError> {
    let [ia, ib] = section.others();
    let mut q = [guess[ia], guess[ib]];
    let max_step = 0.1 * span_scale(b.chart());
    let mut iterations = 0;
    let (mut g, mut period) = displacement(b, section, q, opts)?;
    let norm = |g: [f64; 2]| g[0].hypot(g[1]);
    while norm(g) >= NEWTON_TOL {
        if iterations == MAX_ITER {
            return Err(TraceError::NewtonDiverged { iterations, residual: norm(g) });
        }
        let mut jac = Matrix2::zeros();
        for j in 0..2 {
            let (mut qp, mut qm) = (q, q);
            qp[j] += FD_STEP;
            qm[j] -= FD_STEP;
            let gp = displacement(b, section, qp, opts)?.0;
            let gm = displacement(b, section, qm, opts)?.0;
            for i in 0..2 {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * FD_STEP);
            }
        }
        let svd = jac.svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        let mut step = -svd.solve(&Vector2::new(g[0], g[1]), tol).map_err(|_| TraceError::NewtonDiverged {
            iterations,
            residual: norm(g),
        })?;
        let len = step.norm();
        if len > max_step {
            step *= max_step / len;
        }
        if len < 1e-15 {
            return Err(TraceError::NewtonDiverged { iterations, residual: norm(g) });
        }
        q = [q[0] + step[0], q[1] + step[1]];
        iterations += 1;
        (g, period) = displacement(b, section, q, opts)?;
    }
    let p = section.embed(q);
    let traj = integrate(b, p, period, None, opts)?;
    let mut dpsi_max: f64 = 0.0;
    for x in &traj.points {
        let d = psi.grad(*x)?;
        dpsi_max = dpsi_max.max((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
    }
    let floor = 1e-7 * span_scale(b.chart());
    if dpsi_max > floor {
        return Err(TraceError::NotCritical(dpsi_max));
    }
    let hess = psi.jet(p)?.hessian();
    let (h11, h12, h22) = (hess[ia][ia], hess[ia][ib], hess[ib][ib]);
    let mid = 0.5 * (h11 + h22);
    let rad = (0.25 * (h11 - h22).powi(2) + h12 * h12).sqrt();
    let eig = [mid - rad, mid + rad];
    let big = eig[0].abs().max(eig[1].abs()).max(1.0);
    let kind = if changes_sign(psi, p, [ia, ib], span_scale(b.chart()))? {
        AxisKind::Hyperbolic
    } else if eig[0].abs().min(eig[1].abs()) < 1e-8 * big {
        AxisKind::Degenerate
    } else {
        AxisKind::Elliptic
    };
    Ok(AxisReport {
        point: split_lift(b.chart(), p).0,
        period,
        residual: norm(g),
        iterations,
        dpsi_max,
        hessian_eigenvalues: eig,
        kind,
        section: section.clone(),
    })
}

/// Whether `ψ − ψ(p)` takes both signs on a small circle around `p` in the
/// section plane. This separates saddles from extrema even when the
/// transverse Hessian is singular.
fn changes_sign(psi: &ScalarField, p: [f64; 3], axes: [usize; 2], span: f64) -> Result<bool, TraceError> {
    let r = 1e-3 * span;
    let c = psi.value(p)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..64 {
        let a = std::f64::consts::TAU * k as f64 / 64.0;
        let mut q = p;
        q[axes[0]] += r * a.cos();
        q[axes[1]] += r * a.sin();
        let v = psi.value(q)? - c;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(lo < 0.0 && hi > 0.0)
}
