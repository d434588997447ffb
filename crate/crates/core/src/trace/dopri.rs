//! Dormand–Prince 5(4) with Hairer's continuous extension.

use std::collections::BTreeMap;

use crate::expr::{Axis, ChartDomain, ScalarField};
use crate::geom::VecField;

use super::{TraceError, TraceOptions};

const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const A7: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

type V3 = [f64; 3];

fn axpy(y: V3, terms: &[(f64, &V3)]) -> V3 {
    let mut out = y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += c * k[i];
        }
    }
    out
}

/// One accepted step with its dense-output polynomial.
#[derive(Clone, Debug)]
pub(crate) struct Segment {
    pub t0: f64,
    pub h: f64,
    pub y0: V3,
    pub y1: V3,
    /// `B(y0)`.
    pub k0: V3,
    rcont: [V3; 4],
}

impl Segment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Dense output at `θ ∈ [0, 1]`.
    pub fn at(&self, theta: f64) -> V3 {
        let t1 = 1.0 - theta;
        let [r2, r3, r4, r5] = &self.rcont;
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.y0[i] + theta * (r2[i] + t1 * (r3[i] + theta * (r4[i] + t1 * r5[i])));
        }
        out
    }
}

/// Signed excess over the chart's interval bounds and region constraints;
/// points with excess `> 0` are outside.
pub(crate) struct Domain {
    bounds: Vec<(usize, f64, f64)>,
    regions: Vec<ScalarField>,
}

impl Domain {
    pub fn new(chart: &ChartDomain) -> Result<Self, TraceError> {
        let bounds = chart
            .axes
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match *a {
                Axis::Interval { lo, hi } => Some((i, lo, hi)),
                Axis::Periodic { .. } => None,
            })
            .collect();
        let regions = chart
            .regions
            .iter()
            .map(|r| ScalarField::parse(r, chart, &BTreeMap::new()))
            .collect::<Result<_, _>>()?;
        Ok(Self { bounds, regions })
    }

    pub fn excess(&self, p: V3) -> Result<f64, TraceError> {
        let mut m = f64::NEG_INFINITY;
        for &(i, lo, hi) in &self.bounds {
            m = m.max(lo - p[i]).max(p[i] - hi);
        }
        for g in &self.regions {
            m = m.max(g.value(p)?);
        }
        Ok(m)
    }
}

pub(crate) struct Stepper<'a> {
    field: &'a VecField,
    domain: Domain,
    opts: TraceOptions,
    pub t: f64,
    pub y: V3,
    k1: V3,
    h: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(field: &'a VecField, p0: V3, opts: &TraceOptions) -> Result<Self, TraceError> {
        let domain = Domain::new(field.chart())?;
        if domain.excess(p0)? > 0.0 {
            return Err(TraceError::LeftDomain { t: 0.0, point: p0 });
        }
        let k1 = eval(field, p0)?;
        let mut s = Self { field, domain, opts: opts.clone(), t: 0.0, y: p0, k1, h: 0.0, steps: 0, rejected: 0 };
        s.h = s.initial_step();
        Ok(s)
    }

    fn h_max(&self) -> f64 {
        self.opts.h_max.unwrap_or_else(|| {
            let span = self.field.chart().axes.iter().map(Axis::span).fold(f64::INFINITY, f64::min);
            0.05 * span
        })
    }

    fn scale(&self, y: &V3, i: usize) -> f64 {
        self.opts.atol + self.opts.rtol * y[i].abs()
    }

    fn initial_step(&self) -> f64 {
        let sc = |i| self.scale(&self.y, i);
        let d0 = rms(&self.y, sc);
        let d1 = rms(&self.k1, sc);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        // second-derivative estimate from one Euler step
        let h1 = match eval(self.field, axpy(self.y, &[(h0, &self.k1)])) {
            Ok(f1) => {
                let diff = [f1[0] - self.k1[0], f1[1] - self.k1[1], f1[2] - self.k1[2]];
                let d2 = rms(&diff, sc) / h0;
                if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) }
            }
            Err(_) => h0,
        };
        (100.0 * h0).min(h1).min(self.h_max())
    }

    pub fn field_at(&self, y: V3) -> Result<V3, TraceError> {
        eval(self.field, y)
    }

    /// Raw DOPRI step without error control, used for root polishing.
    pub fn single(&self, y0: V3, k1: V3, h: f64) -> Result<V3, TraceError> {
        Ok(self.stages(y0, k1, h)?.0)
    }

    fn stages(&self, y: V3, k1: V3, h: f64) -> Result<(V3, [V3; 7]), TraceError> {
        let f = |p: V3| eval(self.field, p);
        let k2 = f(axpy(y, &[(h * A21, &k1)]))?;
        let k3 = f(axpy(y, &[(h * A3[0], &k1), (h * A3[1], &k2)]))?;
        let k4 = f(axpy(y, &[(h * A4[0], &k1), (h * A4[1], &k2), (h * A4[2], &k3)]))?;
        let k5 = f(axpy(y, &[(h * A5[0], &k1), (h * A5[1], &k2), (h * A5[2], &k3), (h * A5[3], &k4)]))?;
        let k6 = f(axpy(
            y,
            &[(h * A6[0], &k1), (h * A6[1], &k2), (h * A6[2], &k3), (h * A6[3], &k4), (h * A6[4], &k5)],
        ))?;
        let y1 = axpy(
            y,
            &[(h * A7[0], &k1), (h * A7[2], &k3), (h * A7[3], &k4), (h * A7[4], &k5), (h * A7[5], &k6)],
        );
        let k7 = f(y1)?;
        Ok((y1, [k1, k2, k3, k4, k5, k6, k7]))
    }

    /// Advance by one accepted step, never past `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<Segment, TraceError> {
        let h_max = self.h_max();
        loop {
            let proposed = self.h.min(h_max);
            let h = proposed.min(t_limit - self.t);
            if !(h > 0.0) {
                return Err(TraceError::StepFailure { t: self.t, point: self.y });
            }
            let (y1, k) = self.stages(self.y, self.k1, h)?;
            let mut err = 0.0;
            for i in 0..3 {
                let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
                let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(y1[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / 3.0).sqrt();
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 0.1 };
            if !(err <= 1.0) {
                self.h = h * fac.min(1.0);
                self.rejected += 1;
                if self.h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(TraceError::StepFailure { t: self.t, point: self.y });
                }
                continue;
            }
            if self.domain.excess(y1)? > 0.0 {
                let seg = self.segment(h, y1, &k);
                let exit = self.exit_point(&seg)?;
                return Err(TraceError::LeftDomain { t: exit.0, point: exit.1 });
            }
            let seg = self.segment(h, y1, &k);
            self.t += h;
            self.y = y1;
            self.k1 = k[6];
            // a step clipped by `t_limit` does not shrink the next one
            self.h = if h < proposed { proposed.max(h * fac) } else { h * fac };
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(TraceError::StepFailure { t: self.t, point: self.y });
            }
            return Ok(seg);
        }
    }

    fn segment(&self, h: f64, y1: V3, k: &[V3; 7]) -> Segment {
        let y0 = self.y;
        let mut rcont = [[0.0; 3]; 4];
        for i in 0..3 {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            rcont[0][i] = ydiff;
            rcont[1][i] = bspl;
            rcont[2][i] = ydiff - h * k[6][i] - bspl;
            rcont[3][i] = h * (0..7).map(|s| D[s] * k[s][i]).sum::<f64>();
        }
        Segment { t0: self.t, h, y0, y1, k0: k[0], rcont }
    }

    fn exit_point(&self, seg: &Segment) -> Result<(f64, V3), TraceError> {
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if self.domain.excess(seg.at(m))? > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        Ok((seg.t0 + b * seg.h, seg.at(b)))
    }

}

pub(crate) fn eval(field: &VecField, p: V3) -> Result<V3, TraceError> {
    let v = field.eval(p)?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(TraceError::StepFailure { t: f64::NAN, point: p })
    }
}

fn rms(v: &V3, sc: impl Fn(usize) -> f64) -> f64 {
    ((0..3).map(|i| (v[i] / sc(i)).powi(2)).sum::<f64>() / 3.0).sqrt()
}
