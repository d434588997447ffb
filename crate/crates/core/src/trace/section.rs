use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::VecField;

use super::dopri::{eval, Segment, Stepper};
use super::{split_lift, IntegratorStats, TraceError, TraceOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    #[default]
    Either,
}

/// The surface `x_axis = value` (every lift of it on a periodic axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub axis: usize,
    pub value: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl Section {
    pub fn new(axis: usize, value: f64) -> Self {
        assert!(axis < 3, "section axis out of range");
        Self { axis, value, direction: Direction::Either }
    }

    pub fn with_direction(mut self, d: Direction) -> Self {
        self.direction = d;
        self
    }

    /// The two in-section axes in ascending order.
    pub fn others(&self) -> [usize; 2] {
        match self.axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn embed(&self, q: [f64; 2]) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[self.axis] = self.value;
        let [a, b] = self.others();
        p[a] = q[0];
        p[b] = q[1];
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    /// Reduced into the chart.
    pub point: [f64; 3],
    pub lifted: [f64; 3],
    /// `|x_axis − value|` after polishing, on the lifted coordinate.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionOrbit {
    pub section: Section,
    pub crossings: Vec<Crossing>,
    pub periods: [Option<f64>; 3],
    pub stats: IntegratorStats,
}

impl SectionOrbit {
    /// Lifted in-section coordinates of crossing `i`.
    pub fn in_section(&self, i: usize) -> [f64; 2] {
        let [a, b] = self.section.others();
        let p = self.crossings[i].lifted;
        [p[a], p[b]]
    }

    pub fn max_residual(&self) -> f64 {
        self.crossings.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,wrap_x,wrap_y,wrap_z\n");
        for c in &self.crossings {
            let mut w = [0i64; 3];
            for (a, per) in self.periods.iter().enumerate() {
                if let Some(t) = per {
                    w[a] = ((c.lifted[a] - c.point[a]) / t).round() as i64;
                }
            }
            let [x, y, z] = c.point;
            let _ = writeln!(s, "{:.17e},{x:.17e},{y:.17e},{z:.17e},{},{},{}", c.t, w[0], w[1], w[2]);
        }
        s
    }
}

const TRANSVERSE: f64 = 1e-9;

fn transverse(v: [f64; 3], axis: usize) -> bool {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    n > 0.0 && v[axis].abs() > TRANSVERSE * n
}

/// Successive crossings of the section by the orbit of `p0`, located by
/// root-finding on the dense output and polished with exact DOPRI steps.
pub fn poincare(b: &VecField, section: &Section, p0: [f64; 3], n: usize, opts: &TraceOptions) -> Result<SectionOrbit, TraceError> {
    let chart = b.chart();
    let period = chart.axes[section.axis].period();
    if !transverse(eval(b, p0)?, section.axis) {
        return Err(TraceError::LostTransversality { point: p0 });
    }
    let mut st = Stepper::new(b, p0, opts)?;
    let mut crossings: Vec<Crossing> = Vec::with_capacity(n);
    let mut last = 0.0;
    while crossings.len() < n {
        let limit = last + opts.max_return_time;
        if st.t >= limit {
            return Err(TraceError::MaxTimeExceeded(opts.max_return_time));
        }
        let seg = st.step(limit)?;
        let (c0, c1) = (seg.y0[section.axis], seg.y1[section.axis]);
        let mut targets = Vec::new();
        match period {
            Some(p) => {
                let (lo, hi) = (c0.min(c1), c0.max(c1));
                let k0 = ((lo - section.value) / p).floor() as i64;
                let k1 = ((hi - section.value) / p).ceil() as i64;
                for k in k0..=k1 {
                    targets.push(section.value + k as f64 * p);
                }
            }
            None => targets.push(section.value),
        }
        let mut found = Vec::new();
        for v in targets {
            let crosses = (c0 < v && v <= c1) || (c0 > v && v >= c1);
            if !crosses {
                continue;
            }
            let up = c1 > c0;
            match section.direction {
                Direction::Positive if !up => continue,
                Direction::Negative if up => continue,
                _ => {}
            }
            found.push(locate(&st, &seg, section.axis, v)?);
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, y, res) in found {
            if !transverse(eval(b, y)?, section.axis) {
                return Err(TraceError::LostTransversality { point: y });
            }
            if crossings.len() < n {
                crossings.push(Crossing { t, point: split_lift(chart, y).0, lifted: y, residual: res });
                last = t;
            }
        }
    }
    Ok(SectionOrbit {
        section: section.clone(),
        crossings,
        periods: chart.periods(),
        stats: IntegratorStats { steps: st.steps, rejected: st.rejected, rtol: opts.rtol, atol: opts.atol },
    })
}

/// Crossing time, point and residual of `x_axis = v` inside `seg`.
fn locate(st: &Stepper<'_>, seg: &Segment, axis: usize, v: f64) -> Result<(f64, [f64; 3], f64), TraceError> {
    let f = |th: f64| seg.at(th)[axis] - v;
    // Illinois false position on the dense output
    let (mut a, mut b) = (0.0, 1.0);
    let (mut fa, mut fb) = (seg.y0[axis] - v, seg.y1[axis] - v);
    let mut side = 0;
    let mut th = if fb == 0.0 { 1.0 } else { 0.5 };
    for _ in 0..100 {
        if fb == 0.0 {
            th = b;
            break;
        }
        th = (a * fb - b * fa) / (fb - fa);
        let ft = f(th);
        if ft.abs() <= 1e-16 * v.abs().max(1.0) || (b - a).abs() < 1e-15 {
            break;
        }
        if ft * fb > 0.0 {
            b = th;
            fb = ft;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = th;
            fa = ft;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    // polish with exact steps from the segment start
    let mut dt = th * seg.h;
    let mut y = st.single(seg.y0, seg.k0, dt)?;
    let scale = v.abs().max(1.0);
    for _ in 0..6 {
        let r = y[axis] - v;
        if r.abs() <= 1e-15 * scale {
            break;
        }
        let vel = st.field_at(y)?[axis];
        if vel == 0.0 {
            break;
        }
        dt -= r / vel;
        y = st.single(seg.y0, seg.k0, dt)?;
    }
    Ok((seg.t0 + dt, y, (y[axis] - v).abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// Polar angle about a center in the section plane.
    Polar,
    /// Lifted periodic in-section coordinate.
    Periodic(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    /// Signed, in turns per return.
    pub rho: f64,
    pub error: f64,
    pub crossings: usize,
    pub center: Option<[f64; 2]>,
}

pub const MIN_CROSSINGS: usize = 64;

pub(crate) fn angle_mode(orbit: &SectionOrbit) -> AngleMode {
    let n = orbit.crossings.len();
    let mut best: Option<(usize, f64)> = None;
    for (j, &a) in orbit.section.others().iter().enumerate() {
        if orbit.periods[a].is_some() {
            let drift = (orbit.in_section(n - 1)[j] - orbit.in_section(0)[j]).abs();
            if best.is_none_or(|(_, d)| drift > d) {
                best = Some((j, drift));
            }
        }
    }
    match best {
        Some((j, _)) => AngleMode::Periodic(j),
        None => AngleMode::Polar,
    }
}

pub(crate) fn centroid(orbit: &SectionOrbit) -> [f64; 2] {
    let n = orbit.crossings.len() as f64;
    let mut c = [0.0; 2];
    for i in 0..orbit.crossings.len() {
        let q = orbit.in_section(i);
        c[0] += q[0] / n;
        c[1] += q[1] / n;
    }
    c
}

/// Angle of each crossing in turns: lifted for the periodic mode, in
/// `(-1/2, 1/2]` about `center` for the polar mode.
fn angles(orbit: &SectionOrbit, mode: AngleMode, center: [f64; 2]) -> Vec<Option<f64>> {
    (0..orbit.crossings.len())
        .map(|i| {
            let q = orbit.in_section(i);
            match mode {
                AngleMode::Periodic(j) => {
                    let a = orbit.section.others()[j];
                    Some(q[j] / orbit.periods[a].unwrap())
                }
                AngleMode::Polar => {
                    let (dx, dy) = (q[0] - center[0], q[1] - center[1]);
                    (dx.hypot(dy) > 1e-12).then(|| dy.atan2(dx) / TAU)
                }
            }
        })
        .collect()
}

pub(crate) fn birkhoff(incs: &[f64]) -> f64 {
    let n = incs.len();
    let (mut s, mut ws) = (0.0, 0.0);
    for (i, d) in incs.iter().enumerate() {
        let t = (i + 1) as f64 / (n + 1) as f64;
        let w = (-1.0 / (t * (1.0 - t))).exp();
        s += w * d;
        ws += w;
    }
    s / ws
}

/// Angle advance per return. Polar increments are only known mod 1; they are
/// lifted consistently by cutting the circle in the widest gap between them,
/// which a circle homeomorphism always leaves open.
pub(crate) fn increments(orbit: &SectionOrbit, mode: AngleMode, center: [f64; 2]) -> Vec<f64> {
    let ang = angles(orbit, mode, center);
    let raw: Vec<Option<f64>> = ang.windows(2).map(|w| Some(w[1]? - w[0]?)).collect();
    if let AngleMode::Periodic(_) = mode {
        return raw.into_iter().map(|d| d.unwrap_or(0.0)).collect();
    }
    let frac: Vec<Option<f64>> = raw.iter().map(|d| d.map(|d| d.rem_euclid(1.0))).collect();
    let mut sorted: Vec<f64> = frac.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return vec![0.0; raw.len()];
    }
    sorted.sort_by(f64::total_cmp);
    let (mut cut, mut gap) = ((sorted[0] + sorted[sorted.len() - 1] + 1.0) / 2.0, sorted[0] + 1.0 - sorted[sorted.len() - 1]);
    for w in sorted.windows(2) {
        if w[1] - w[0] > gap {
            gap = w[1] - w[0];
            cut = 0.5 * (w[0] + w[1]);
        }
    }
    let cut = cut.rem_euclid(1.0);
    frac.into_iter().map(|d| d.map_or(0.0, |d| if d > cut { d - 1.0 } else { d })).collect()
}

/// Weighted Birkhoff average of angle increments between returns. The error
/// is the larger disagreement with either half of the sequence.
pub fn rotation_number(orbit: &SectionOrbit, center: Option<[f64; 2]>) -> Result<RotationEstimate, TraceError> {
    let n = orbit.crossings.len();
    if n < MIN_CROSSINGS {
        return Err(TraceError::InsufficientCrossings { got: n, need: MIN_CROSSINGS });
    }
    let mode = angle_mode(orbit);
    let c = center.unwrap_or_else(|| centroid(orbit));
    let incs = increments(orbit, mode, c);
    let rho = birkhoff(&incs);
    let h = incs.len() / 2;
    let error = (rho - birkhoff(&incs[..h])).abs().max((rho - birkhoff(&incs[h..])).abs());
    // a polar lift is fixed only up to whole turns
    let rho = match mode {
        AngleMode::Polar => rho - (rho - 0.5).ceil(),
        AngleMode::Periodic(_) => rho,
    };
    Ok(RotationEstimate { rho, error, crossings: n, center: matches!(mode, AngleMode::Polar).then_some(c) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureFit {
    pub order: usize,
    /// RMS misfit over the curve's scale.
    pub residual: f64,
}

/// Fit the crossings as a closed curve with a Fourier series of the given
/// order in the dynamical angle `iρ`, where crossing `i` sits on an invariant
/// circle rotated by `ρ` per return.
pub fn closure_fit(orbit: &SectionOrbit, order: usize) -> Result<ClosureFit, TraceError> {
    let n = orbit.crossings.len();
    let need = 2 * order + 2;
    if n < need {
        return Err(TraceError::InsufficientCrossings { got: n, need });
    }
    let mode = angle_mode(orbit);
    let c = centroid(orbit);
    let rho = birkhoff(&increments(orbit, mode, c));
    let m = DMatrix::from_fn(n, 2 * order + 1, |i, j| {
        if j == 0 {
            return 1.0;
        }
        let w = TAU * j.div_ceil(2) as f64 * rho * i as f64;
        if j % 2 == 1 { w.cos() } else { w.sin() }
    });
    let svd = m.clone().svd(true, true);
    let fit = |vals: DVector<f64>| -> f64 {
        let coef = svd.solve(&vals, 1e-12).expect("SVD solve");
        (&m * coef - vals).norm_squared()
    };
    let pts: Vec<[f64; 2]> = (0..n).map(|i| orbit.in_section(i)).collect();
    let (sq, scale) = match mode {
        AngleMode::Periodic(j) => {
            // both coordinates in units of their period, the winding one detrended
            let per = |k: usize| orbit.periods[orbit.section.others()[k]].unwrap_or(1.0);
            let (pj, po) = (per(j), per(1 - j));
            let sa = fit(DVector::from_fn(n, |i, _| pts[i][j] / pj - rho * i as f64));
            let so = fit(DVector::from_fn(n, |i, _| pts[i][1 - j] / po));
            (sa + so, 1.0)
        }
        AngleMode::Polar => {
            let sx = fit(DVector::from_fn(n, |i, _| pts[i][0]));
            let sy = fit(DVector::from_fn(n, |i, _| pts[i][1]));
            let r2: f64 = pts.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>() / n as f64;
            (sx + sy, r2.sqrt())
        }
    };
    let rms = (sq / n as f64).sqrt();
    Ok(ClosureFit { order, residual: if scale > 0.0 { rms / scale } else { rms } })
}
