//! Field-line integration, Poincaré sections, rotation numbers, axis
//! refinement and toroidal-region probing.

mod axis;
mod dopri;
mod probe;
pub(crate) mod section;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use axis::{refine_axis, AxisKind, AxisReport};
pub use probe::{probe_toroidal_region, Component, ComponentLabel, LevelClass, LevelReport, ProbeOptions, RegionReport};
pub use section::{closure_fit, poincare, rotation_number, AngleMode, ClosureFit, Crossing, Direction, RotationEstimate, Section, SectionOrbit};

use crate::expr::{ChartDomain, ExprError, ScalarField};
use crate::geom::VecField;
use dopri::Stepper;
pub(crate) use dopri::eval as eval_field;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TraceError {
    #[error("integration step failed at t = {t} near {point:?}")]
    StepFailure { t: f64, point: [f64; 3] },
    #[error("trajectory left the chart at t = {t}, {point:?}")]
    LeftDomain { t: f64, point: [f64; 3] },
    #[error("section is not transverse to B at {point:?}")]
    LostTransversality { point: [f64; 3] },
    #[error("no section crossing within time {0}")]
    MaxTimeExceeded(f64),
    #[error("{got} crossings, at least {need} required")]
    InsufficientCrossings { got: usize, need: usize },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("orbit is not critical for ψ: ‖dψ‖ = {0:e}")]
    NotCritical(f64),
    #[error("probe budget exceeded; {} levels unresolved", .0.levels.iter().filter(|l| l.class == LevelClass::Unresolved).count())]
    BudgetExceeded(Box<RegionReport>),
    #[error("the flux system has no first integral ψ")]
    MissingPsi,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to 1/20 of the smallest chart span.
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Longest time allowed between consecutive section crossings.
    pub max_return_time: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: None, max_steps: 20_000_000, max_return_time: 1e3 }
    }
}

impl TraceOptions {
    pub fn tight() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rtol: f64,
    pub atol: f64,
}

/// Accepted steps of an integral curve. Points are reduced into the chart;
/// `wraps` counts whole periods removed on each periodic axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    pub wraps: Vec<[i64; 3]>,
    pub stats: IntegratorStats,
    pub psi_drift: Option<f64>,
    periods: [Option<f64>; 3],
}

impl Trajectory {
    pub fn lifted(&self, i: usize) -> [f64; 3] {
        let mut p = self.points[i];
        for (a, per) in self.periods.iter().enumerate() {
            if let Some(t) = per {
                p[a] += self.wraps[i][a] as f64 * t;
            }
        }
        p
    }

    pub fn end(&self) -> [f64; 3] {
        self.lifted(self.points.len() - 1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,wrap_x,wrap_y,wrap_z\n");
        for (i, t) in self.times.iter().enumerate() {
            let [x, y, z] = self.points[i];
            let [a, b, c] = self.wraps[i];
            let _ = writeln!(s, "{t:.17e},{x:.17e},{y:.17e},{z:.17e},{a},{b},{c}");
        }
        s
    }
}

pub(crate) fn split_lift(chart: &ChartDomain, p: [f64; 3]) -> ([f64; 3], [i64; 3]) {
    let mut r = p;
    let mut w = [0; 3];
    for (a, per) in chart.periods().iter().enumerate() {
        if let Some(t) = per {
            let k = (p[a] / t).floor();
            r[a] = p[a] - k * t;
            w[a] = k as i64;
        }
    }
    (r, w)
}

/// Integrate `dp/dt = B(p)` from `p0` over `[0, t_end]` in lifted
/// coordinates, recording every accepted step.
pub fn integrate(
    b: &VecField,
    p0: [f64; 3],
    t_end: f64,
    psi: Option<&ScalarField>,
    opts: &TraceOptions,
) -> Result<Trajectory, TraceError> {
    assert!(t_end >= 0.0, "integration runs forward in time");
    let chart = b.chart();
    let mut st = Stepper::new(b, p0, opts)?;
    let (r, w) = split_lift(chart, p0);
    let mut times = vec![0.0];
    let mut points = vec![r];
    let mut wraps = vec![w];
    while st.t < t_end {
        let seg = st.step(t_end)?;
        let (r, w) = split_lift(chart, seg.y1);
        times.push(seg.t1());
        points.push(r);
        wraps.push(w);
    }
    let psi_drift = match psi {
        Some(g) => {
            let g0 = g.value(p0)?;
            let mut m: f64 = 0.0;
            for p in &points {
                m = m.max((g.value(*p)? - g0).abs());
            }
            Some(m)
        }
        None => None,
    };
    Ok(Trajectory {
        times,
        points,
        wraps,
        stats: IntegratorStats { steps: st.steps, rejected: st.rejected, rtol: opts.rtol, atol: opts.atol },
        psi_drift,
        periods: chart.periods(),
    })
}

/// Lifted endpoint of the time-`t` flow without recording the path.
pub fn flow_map(b: &VecField, p0: [f64; 3], t: f64, opts: &TraceOptions) -> Result<[f64; 3], TraceError> {
    let mut st = Stepper::new(b, p0, opts)?;
    while st.t < t {
        st.step(t)?;
    }
    Ok(st.y)
}
