use serde::{Deserialize, Serialize};

use crate::expr::ChartDomain;
use crate::geom::{apply, d, KForm};

use super::{dot3, FluxError, FluxSystem};

/// A periodic orbit sampled uniformly in time over one period, in lifted
/// coordinates. `end` is the flow of `start` after `period`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedOrbit {
    pub points: Vec<[f64; 3]>,
    pub period: f64,
    pub end: [f64; 3],
}

impl ClosedOrbit {
    pub fn start(&self) -> [f64; 3] {
        self.points[0]
    }

    /// Lifted displacement over one period; nonzero only along periodic axes.
    pub fn displacement(&self) -> [f64; 3] {
        let s = self.start();
        [self.end[0] - s[0], self.end[1] - s[1], self.end[2] - s[2]]
    }

    /// Closure gap measured modulo the periodic axes.
    pub fn gap(&self, chart: &ChartDomain) -> f64 {
        let disp = self.displacement();
        let mut g2 = 0.0;
        for (i, per) in chart.periods().iter().enumerate() {
            let mut v = disp[i];
            if let Some(t) = per {
                v -= t * (v / t).round();
            }
            g2 += v * v;
        }
        g2.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObstructionVerdict {
    Obstructed,
    NoObstruction,
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub i0: f64,
    pub i1: f64,
    pub displacement0: [f64; 3],
    pub displacement1: [f64; 3],
    /// Sup of `|dη|` sampled along both orbits.
    pub d_eta_on_orbits: f64,
    pub verdict: ObstructionVerdict,
}

const VACUOUS: f64 = 1e-12;

/// Circulations of `η` along two periodic orbits of `B`, oriented by `B`,
/// and the Stokes verdict on whether `η(B) > 0` is possible on both.
///
/// Orbits whose lifted displacements point in opposite directions bound a
/// cylinder on which they are oppositely oriented, so a closed `η` gives
/// `I0 = -I1` and no closed form can be positive on both.
pub fn reeb_obstruction(
    fs: &FluxSystem,
    eta: &KForm,
    orbit0: &ClosedOrbit,
    orbit1: &ClosedOrbit,
    closure_tol: f64,
) -> Result<ObstructionReport, FluxError> {
    let chart = fs.chart();
    for o in [orbit0, orbit1] {
        let gap = o.gap(chart);
        if gap > closure_tol {
            return Err(FluxError::OrbitNotClosed(gap));
        }
    }
    let eb = apply(eta, &fs.b)?;
    let de = d(eta)?;
    let mut d_eta: f64 = 0.0;
    let mut circulation = |o: &ClosedOrbit| -> Result<f64, FluxError> {
        let mut s = 0.0;
        for &p in &o.points {
            s += eb.value(p)?;
            d_eta = de.eval(p)?.into_iter().fold(d_eta, |m, v| m.max(v.abs()));
        }
        // periodic trapezoid rule
        Ok(s * o.period / o.points.len() as f64)
    };
    let i0 = circulation(orbit0)?;
    let i1 = circulation(orbit1)?;
    let (d0, d1) = (orbit0.displacement(), orbit1.displacement());
    let verdict = if i0.abs() < VACUOUS && i1.abs() < VACUOUS {
        ObstructionVerdict::Vacuous
    } else if dot3(d0, d1) < 0.0 {
        ObstructionVerdict::Obstructed
    } else if i0 > 0.0 && i1 > 0.0 {
        ObstructionVerdict::NoObstruction
    } else {
        ObstructionVerdict::Obstructed
    };
    Ok(ObstructionReport { i0, i1, displacement0: d0, displacement1: d1, d_eta_on_orbits: d_eta, verdict })
}
