//! Straight-field-line coordinates on regular tori and Hamada-form checks
//! across tori and near elliptic axes.

mod hamada;
mod near_axis;

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hamada::{hamada_check, GaugeShift, HamadaOptions, HamadaProfiles, RectifiedBand, SurfaceChart};
pub use near_axis::{near_axis_check, AreaAngleChart, IdentityChart, NearAxisChart, NearAxisOptions, NearAxisReport};

use crate::expr::{ExprError, ScalarField};
use crate::flux::{AdaptedForm, FluxSystem, Verdict};
use crate::geom::{GeomError, VecField};
use crate::torusdyn::{conjugate_circle_map, CircleConjugacy, TorusError, DEFAULT_DELTA, DEFAULT_K};
use crate::trace::section::{angle_mode, birkhoff, centroid, increments};
use crate::trace::{eval_field, flow_map, poincare, AngleMode, AxisKind, Direction, Section, TraceError, TraceOptions};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CoordsError {
    #[error("small divisor at k = {k}: |e^(2πikρ) − 1| = {value:e}")]
    SmallDivisor { k: i64, value: f64 },
    #[error("section is not transverse to B at {point:?}")]
    LostTransversality { point: [f64; 3] },
    #[error("invalid chart: {0}")]
    ChartInvalid(String),
    #[error("axis is {0:?}, not elliptic")]
    AxisNotElliptic(AxisKind),
    #[error("the flux system has no first integral ψ")]
    MissingPsi,
    #[error(transparent)]
    Trace(TraceError),
    #[error(transparent)]
    Torus(TorusError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl From<TraceError> for CoordsError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::LostTransversality { point } => Self::LostTransversality { point },
            TraceError::MissingPsi => Self::MissingPsi,
            e => Self::Trace(e),
        }
    }
}

impl From<TorusError> for CoordsError {
    fn from(e: TorusError) -> Self {
        match e {
            TorusError::SmallDivisor { k, value } => Self::SmallDivisor { k: k[0], value },
            e => Self::Torus(e),
        }
    }
}

/// Real trigonometric polynomial in an angle measured in turns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn eval(&self, t: f64) -> f64 {
        self.mean + trig(&self.cos, &self.sin, t)
    }

    /// Least-squares fit of `values` at angles `t`.
    pub fn fit(t: &[f64], values: &[f64], order: usize) -> Self {
        let m = DMatrix::from_fn(t.len(), 2 * order + 1, |i, j| basis(t[i], j));
        let coef = m.svd(true, true).solve(&DVector::from_column_slice(values), 1e-13).expect("SVD solve");
        Self { mean: coef[0], cos: (0..order).map(|i| coef[1 + 2 * i]).collect(), sin: (0..order).map(|i| coef[2 + 2 * i]).collect() }
    }
}

fn basis(t: f64, j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let w = TAU * j.div_ceil(2) as f64 * t;
    if j % 2 == 1 { w.cos() } else { w.sin() }
}

fn trig(a: &[f64], b: &[f64], t: f64) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (ca, sb))| {
            let w = TAU * (i + 1) as f64 * t;
            ca * w.cos() + sb * w.sin()
        })
        .sum()
}

fn trig_deriv(a: &[f64], b: &[f64], t: f64) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (ca, sb))| {
            let m = TAU * (i + 1) as f64;
            m * (sb * (m * t).cos() - ca * (m * t).sin())
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectifyOptions {
    pub section: Section,
    #[serde(default = "d_crossings")]
    pub n_crossings: usize,
    #[serde(default = "d_k", rename = "K")]
    pub k: usize,
    #[serde(default = "d_delta")]
    pub delta: f64,
    /// Center of the polar section angle; defaults to the crossings' centroid.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default = "TraceOptions::tight")]
    pub trace: TraceOptions,
}

fn d_crossings() -> usize {
    512
}
fn d_k() -> usize {
    DEFAULT_K
}
fn d_delta() -> f64 {
    DEFAULT_DELTA
}

impl RectifyOptions {
    pub fn new(section: Section) -> Self {
        Self { section, n_crossings: d_crossings(), k: d_k(), delta: d_delta(), center: None, trace: TraceOptions::tight() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshPoint {
    pub theta1: f64,
    pub theta2: f64,
    pub point: [f64; 3],
}

/// Angle coordinates on one invariant torus in which `B̃ = B/η(B)` reads
/// `a ∂θ1 + b ∂θ2`. `θ1` is the normalized transit phase between section
/// crossings and `θ2` the straightened section angle; both in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxChart {
    pub surface_psi: f64,
    pub section: Section,
    pub mode: AngleMode,
    pub center: [f64; 2],
    /// Section-angle advance per return, in turns, lifted.
    pub rho: f64,
    pub rho_error: f64,
    /// Mean return time of `B̃`.
    pub t_bar: f64,
    pub conjugacy: CircleConjugacy,
    /// Return-time correction `g` with `T = T̄ + g∘P − g` in the straight angle.
    pub return_time: TrigSeries,
    /// Radius (polar) or transverse coordinate (periodic) of the section
    /// curve against the section angle; a starting guess for projections.
    pub curve: TrigSeries,
    pub a: f64,
    pub b: f64,
    pub residual_rect: f64,
    pub mesh: Vec<MeshPoint>,
}

pub const RECTIFY_TOL: f64 = 1e-4;

impl FluxChart {
    pub fn frequencies(&self) -> [f64; 2] {
        [self.a, self.b]
    }

    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(self.residual_rect < RECTIFY_TOL)
    }

    /// Mesh as CSV `(θ1, θ2, x, y, z)` under a JSON header line.
    pub fn to_csv(&self) -> String {
        let header = serde_json::json!({
            "surface_psi": self.surface_psi,
            "a": self.a,
            "b": self.b,
            "rho": self.rho,
            "residual_rect": self.residual_rect,
            "conjugacy_residual": self.conjugacy.residual,
        });
        let mut s = format!("# {header}\ntheta1,theta2,x,y,z\n");
        for m in &self.mesh {
            let [x, y, z] = m.point;
            let _ = writeln!(s, "{:.17e},{:.17e},{x:.17e},{y:.17e},{z:.17e}", m.theta1, m.theta2);
        }
        s
    }

    /// Section angle (turns) of the point with straightened angle `target`.
    fn unstraighten(&self, target: f64) -> f64 {
        let (c, s) = (&self.conjugacy.cos, &self.conjugacy.sin);
        let mut t = target;
        for _ in 0..50 {
            let r = t + trig(c, s, t) - target;
            t -= r / (1.0 + trig_deriv(c, s, t));
            if r.abs() < 1e-15 {
                break;
            }
        }
        t
    }
}

/// Geometry of a section of one torus, used to move between section points
/// and section angles.
struct SectionGeometry<'a> {
    psi: &'a ScalarField,
    section: &'a Section,
    mode: AngleMode,
    center: [f64; 2],
    periods: [Option<f64>; 3],
}

impl SectionGeometry<'_> {
    /// Point of the section with section angle `t` (turns) on the level
    /// `ψ = level`, by Newton along the ray or transverse coordinate.
    fn point(&self, t: f64, level: f64, guess: f64) -> Result<[f64; 3], CoordsError> {
        let [ia, ib] = self.section.others();
        let (dir, base, mut r) = match self.mode {
            AngleMode::Periodic(j) => {
                let (aj, ao) = if j == 0 { (ia, ib) } else { (ib, ia) };
                let mut base = [0.0; 3];
                base[self.section.axis] = self.section.value;
                base[aj] = t * self.periods[aj].unwrap();
                let mut dir = [0.0; 3];
                dir[ao] = 1.0;
                (dir, base, guess)
            }
            AngleMode::Polar => {
                let w = TAU * t;
                let mut base = [0.0; 3];
                base[self.section.axis] = self.section.value;
                base[ia] = self.center[0];
                base[ib] = self.center[1];
                let mut dir = [0.0; 3];
                dir[ia] = w.cos();
                dir[ib] = w.sin();
                (dir, base, guess)
            }
        };
        let at = |r: f64| [base[0] + r * dir[0], base[1] + r * dir[1], base[2] + r * dir[2]];
        for _ in 0..60 {
            let j = self.psi.jet(at(r))?;
            let slope = j.grad[0] * dir[0] + j.grad[1] * dir[1] + j.grad[2] * dir[2];
            if slope == 0.0 {
                return Err(CoordsError::ChartInvalid(format!("ψ is stationary along the section at {:?}", at(r))));
            }
            let step = (j.value - level) / slope;
            r -= step;
            if step.abs() <= 1e-15 * r.abs().max(1.0) {
                return Ok(at(r));
            }
        }
        let p = at(r);
        let miss = (self.psi.value(p)? - level).abs();
        if miss < 1e-12 {
            Ok(p)
        } else {
            Err(CoordsError::ChartInvalid(format!("section point at angle {t} misses the level by {miss:e}")))
        }
    }

    fn curve_value(&self, q: [f64; 2]) -> f64 {
        match self.mode {
            AngleMode::Periodic(j) => q[1 - j],
            AngleMode::Polar => (q[0] - self.center[0]).hypot(q[1] - self.center[1]),
        }
    }
}

/// Build straight angles on the torus through `seed`: section return map,
/// rotation number, circle-map conjugacy for the section angle, and the
/// normalized transit phase of `B̃` between crossings. `residual_rect` is the
/// sup-variation over return segments of `B̃`'s components in the new angles.
pub fn rectify_torus(fs: &FluxSystem, af: &AdaptedForm, seed: [f64; 3], opts: &RectifyOptions) -> Result<FluxChart, CoordsError> {
    let psi = fs.psi.as_ref().ok_or(CoordsError::MissingPsi)?;
    let level = psi.value(seed)?;
    let b_tilde = fs.b.div(&af.eta_b);
    let v = eval_field(&b_tilde, seed)?;
    let axis = opts.section.axis;
    let mut section = opts.section.clone();
    if section.direction == Direction::Either {
        section.direction = if v[axis] > 0.0 { Direction::Positive } else { Direction::Negative };
    }
    let orbit = poincare(&b_tilde, &section, seed, opts.n_crossings, &opts.trace)?;
    let n = orbit.crossings.len();
    if n < 2 * opts.k + 2 {
        return Err(CoordsError::ChartInvalid(format!("{n} crossings cannot resolve K = {}", opts.k)));
    }
    let mode = angle_mode(&orbit);
    let center = opts.center.unwrap_or_else(|| centroid(&orbit));
    let geo = SectionGeometry { psi, section: &section, mode, center, periods: fs.chart().periods() };

    // lifted section angles in turns
    let incs = increments(&orbit, mode, center);
    let q0 = orbit.in_section(0);
    let theta0 = match mode {
        AngleMode::Periodic(j) => q0[j] / geo.periods[section.others()[j]].unwrap(),
        AngleMode::Polar => (q0[1] - center[1]).atan2(q0[0] - center[0]) / TAU,
    };
    let mut theta = Vec::with_capacity(n);
    theta.push(theta0);
    for d in &incs {
        theta.push(theta.last().unwrap() + d);
    }
    let rho = birkhoff(&incs);
    let h = incs.len() / 2;
    let rho_error = (rho - birkhoff(&incs[..h])).abs().max((rho - birkhoff(&incs[h..])).abs());

    let pairs: Vec<[f64; 2]> = theta.windows(2).map(|w| [w[0], w[1]]).collect();
    let conjugacy = conjugate_circle_map(&pairs, rho, opts.k, opts.delta)?;
    let star: Vec<f64> = theta.iter().map(|&t| conjugacy.straighten(t)).collect();

    // T_k = T̄ + g(θ*_{k+1}) − g(θ*_k), linear in T̄ and the coefficients of g
    let times: Vec<f64> = orbit.crossings.windows(2).map(|w| w[1].t - w[0].t).collect();
    let k = opts.k;
    let m = DMatrix::from_fn(n - 1, 2 * k + 1, |i, j| {
        if j == 0 { 1.0 } else { basis(star[i + 1], j) - basis(star[i], j) }
    });
    let coef = m
        .svd(true, true)
        .solve(&DVector::from_column_slice(&times), 1e-12)
        .map_err(|e| CoordsError::ChartInvalid(e.to_owned()))?;
    let t_bar = coef[0];
    let return_time = TrigSeries {
        mean: 0.0,
        cos: (0..k).map(|i| coef[1 + 2 * i]).collect(),
        sin: (0..k).map(|i| coef[2 + 2 * i]).collect(),
    };
    if !(t_bar > 0.0) {
        return Err(CoordsError::ChartInvalid(format!("mean return time {t_bar}")));
    }

    let g: Vec<f64> = star.iter().map(|&s| return_time.eval(s)).collect();
    let mut seg = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let dg = (g[i + 1] - g[i]) / t_bar;
        seg.push([TAU * (1.0 + dg) / times[i], TAU * (star[i + 1] - star[i] + rho * dg) / times[i]]);
    }
    let mean = |c: usize| seg.iter().map(|s| s[c]).sum::<f64>() / seg.len() as f64;
    let (a, b) = (mean(0), mean(1));
    let residual_rect = seg.iter().map(|s| (s[0] - a).abs().max((s[1] - b).abs())).fold(0.0, f64::max);

    let reduced: Vec<f64> = theta.iter().map(|t| t.rem_euclid(1.0)).collect();
    let values: Vec<f64> = (0..n).map(|i| geo.curve_value(orbit.in_section(i))).collect();
    let curve = TrigSeries::fit(&reduced, &values, 16.min((n - 1) / 2));

    let mesh = (0..n)
        .map(|i| {
            let t1 = g[i] / t_bar;
            MeshPoint {
                theta1: (TAU * t1).rem_euclid(TAU),
                theta2: (TAU * (star[i] + rho * t1)).rem_euclid(TAU),
                point: orbit.crossings[i].point,
            }
        })
        .collect();

    Ok(FluxChart {
        surface_psi: level,
        section,
        mode,
        center,
        rho,
        rho_error,
        t_bar,
        conjugacy,
        return_time,
        curve,
        a,
        b,
        residual_rect,
        mesh,
    })
}

/// Rectify several tori with one common section center, so that the angle
/// gauges vary smoothly across the band. The first seed fixes the center.
pub fn rectify_band(fs: &FluxSystem, af: &AdaptedForm, seeds: &[[f64; 3]], opts: &RectifyOptions) -> Result<Vec<FluxChart>, CoordsError> {
    let Some((&first, rest)) = seeds.split_first() else {
        return Ok(Vec::new());
    };
    let c0 = rectify_torus(fs, af, first, opts)?;
    let shared = RectifyOptions { center: Some(c0.center), ..opts.clone() };
    let mut out = vec![c0];
    out.extend(rest.par_iter().map(|&s| rectify_torus(fs, af, s, &shared)).collect::<Result<Vec<_>, _>>()?);
    Ok(out)
}

/// Physical point (lifted) with angles `(θ1, θ2)` in radians on the torus of
/// `chart`: undo the straightening on the section, then flow along `B̃`.
pub fn chart_point(
    fs: &FluxSystem,
    b_tilde: &VecField,
    chart: &FluxChart,
    theta: [f64; 2],
    opts: &TraceOptions,
) -> Result<[f64; 3], CoordsError> {
    let psi = fs.psi.as_ref().ok_or(CoordsError::MissingPsi)?;
    let (t1, t2) = (theta[0] / TAU, theta[1] / TAU);
    let sigma = t1 * chart.t_bar;
    let star = t2 - chart.rho * t1;
    // (θ*, σ) ~ (θ* + ρ, σ − T̄); pick the copy with the smallest τ ≥ 0
    let tau_of = |m: f64| sigma - m * chart.t_bar - chart.return_time.eval(star + m * chart.rho);
    let mut m = (sigma / chart.t_bar).floor();
    while tau_of(m) < 0.0 {
        m -= 1.0;
    }
    while tau_of(m + 1.0) >= 0.0 {
        m += 1.0;
    }
    let tau = tau_of(m);
    let t = chart.unstraighten(star + m * chart.rho);
    let geo = SectionGeometry { psi, section: &chart.section, mode: chart.mode, center: chart.center, periods: fs.chart().periods() };
    let q = geo.point(t, chart.surface_psi, chart.curve.eval(t.rem_euclid(1.0)))?;
    Ok(flow_map(b_tilde, q, tau, opts)?)
}

/// Regular `n1 × n2` mesh of chart angles with their physical points.
pub fn chart_mesh(fs: &FluxSystem, af: &AdaptedForm, chart: &FluxChart, n1: usize, n2: usize, opts: &TraceOptions) -> Result<Vec<MeshPoint>, CoordsError> {
    let b_tilde = fs.b.div(&af.eta_b);
    let cells: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let theta = [TAU * i as f64 / n1 as f64, TAU * j as f64 / n2 as f64];
            let p = chart_point(fs, &b_tilde, chart, theta, opts)?;
            Ok(MeshPoint { theta1: theta[0], theta2: theta[1], point: fs.chart().reduce(p) })
        })
        .collect()
}
