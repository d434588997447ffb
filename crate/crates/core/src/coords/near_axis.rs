use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::ScalarField;
use crate::flux::{FluxSystem, Verdict};
use crate::trace::{AxisKind, AxisReport};

use super::CoordsError;

/// A chart `(x', y', φ)` around an axis at `x' = y' = 0`, given by its map
/// to physical coordinates.
pub trait NearAxisChart: Sync {
    fn to_physical(&self, q: [f64; 3]) -> Result<[f64; 3], CoordsError>;
}

/// Physical coordinates shifted so the axis sits at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityChart {
    pub center: [f64; 2],
}

impl NearAxisChart for IdentityChart {
    fn to_physical(&self, q: [f64; 3]) -> Result<[f64; 3], CoordsError> {
        Ok([q[0] + self.center[0], q[1] + self.center[1], q[2]])
    }
}

/// Near-axis chart for a field whose planar part is tangent to the level
/// curves of `ψ(x, y)`, with `ψ` elliptic at `center`. The radius is fixed by
/// `ψ = psi0 + slope·s` with `s = ½(x'² + y'²)`, and the angle is the
/// fraction of `w dx∧dy`-area swept from the ray `θ = 0`, where `w` is the
/// `dx∧dy` component of `ι_B μ`. In these coordinates that component is a
/// function of `s` alone.
#[derive(Clone, Debug)]
pub struct AreaAngleChart {
    psi: ScalarField,
    weight: ScalarField,
    center: [f64; 2],
    psi0: f64,
    slope: f64,
    n_quad: usize,
}

impl AreaAngleChart {
    pub fn new(fs: &FluxSystem, center: [f64; 2], psi0: f64, slope: f64) -> Result<Self, CoordsError> {
        let psi = fs.psi.clone().ok_or(CoordsError::MissingPsi)?;
        let weight = fs.beta().comps()[2].clone();
        Ok(Self { psi, weight, center, psi0, slope, n_quad: 128 })
    }

    fn ray(&self, theta: f64, r: f64, phi: f64) -> [f64; 3] {
        [self.center[0] + r * theta.cos(), self.center[1] + r * theta.sin(), phi]
    }

    /// Radius along the ray at angle `theta` where `ψ` reaches `target`, and
    /// the radial derivative of `ψ` there.
    fn radius(&self, theta: f64, target: f64, phi: f64) -> Result<(f64, f64), CoordsError> {
        let c = self.ray(theta, 0.0, phi);
        let j = self.psi.jet(c)?;
        let (e0, e1) = (theta.cos(), theta.sin());
        let curv = j.hess(0, 0) * e0 * e0 + 2.0 * j.hess(0, 1) * e0 * e1 + j.hess(1, 1) * e1 * e1;
        let mut r = (2.0 * (target - j.value) / curv).max(0.0).sqrt();
        for _ in 0..60 {
            let j = self.psi.jet(self.ray(theta, r, phi))?;
            let dr = j.grad[0] * e0 + j.grad[1] * e1;
            let step = (j.value - target) / dr;
            r -= step;
            if step.abs() < 1e-14 * r.abs() {
                break;
            }
        }
        let j = self.psi.jet(self.ray(theta, r, phi))?;
        if (j.value - target).abs() < 1e-13 {
            return Ok((r, j.grad[0] * e0 + j.grad[1] * e1));
        }
        Err(CoordsError::ChartInvalid(format!("level {target} not reached along the ray at angle {theta}")))
    }
}

impl NearAxisChart for AreaAngleChart {
    fn to_physical(&self, q: [f64; 3]) -> Result<[f64; 3], CoordsError> {
        let s = 0.5 * (q[0] * q[0] + q[1] * q[1]);
        let phi = q[2];
        if s == 0.0 {
            return Ok(self.ray(0.0, 0.0, phi));
        }
        let target = self.psi0 + self.slope * s;
        let n = self.n_quad;
        // ∂/∂s of the swept weighted area, per unit angle
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let th = TAU * i as f64 / n as f64;
            let (r, dr) = self.radius(th, target, phi)?;
            w.push(self.weight.value(self.ray(th, r, phi))? * r * self.slope / dr);
        }
        let c0 = w.iter().sum::<f64>() / n as f64;
        let modes: Vec<(f64, f64)> = (1..n / 2)
            .map(|m| {
                let (mut a, mut b) = (0.0, 0.0);
                for (i, wi) in w.iter().enumerate() {
                    let t = TAU * (m * i) as f64 / n as f64;
                    a += wi * t.cos();
                    b += wi * t.sin();
                }
                (2.0 * a / n as f64, 2.0 * b / n as f64)
            })
            .collect();
        let area = |th: f64| -> f64 {
            c0 * th + modes.iter().enumerate().map(|(i, (a, b))| {
                let m = (i + 1) as f64;
                (a * (m * th).sin() + b * (1.0 - (m * th).cos())) / m
            }).sum::<f64>()
        };
        let density = |th: f64| -> f64 {
            c0 + modes.iter().enumerate().map(|(i, (a, b))| {
                let m = (i + 1) as f64;
                a * (m * th).cos() + b * (m * th).sin()
            }).sum::<f64>()
        };
        let alpha = q[1].atan2(q[0]).rem_euclid(TAU);
        let mut th = alpha;
        for _ in 0..60 {
            let step = (area(th) / c0 - alpha) / (density(th) / c0);
            th -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (r, _) = self.radius(th, target, phi)?;
        Ok(self.ray(th, r, phi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NearAxisOptions {
    pub r_max: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    pub fd_step: f64,
    /// Degree of the polynomial fits in `s`.
    pub degree: usize,
    pub tol: f64,
}

impl Default for NearAxisOptions {
    fn default() -> Self {
        Self { r_max: 0.3, n_radii: 8, n_angles: 16, fd_step: 1e-5, degree: 4, tol: 1e-3 }
    }
}

/// Fits in `s = ½(x'² + y'²)`, coefficients from the constant term up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearAxisReport {
    pub axis_point: [f64; 3],
    pub r_max: f64,
    pub s_samples: Vec<f64>,
    /// `dx'∧dy'` component of `ι_B μ`.
    pub f_fit: Vec<f64>,
    /// `G'(s)` from the `dy'∧dφ` and `dφ∧dx'` components.
    pub g_prime_fit: Vec<f64>,
    pub psi_fit: Vec<f64>,
    /// Density of `μ` in the chart.
    pub rho_fit: Vec<f64>,
    /// Sup deviation of the sampled components and `ψ` from their `s`-only fits.
    pub angular_residual: f64,
    /// Axis period implied by `F(0)/ρ(0)`.
    pub transit_time: f64,
    pub transit_rel_err: f64,
    pub verdict: Verdict,
}

fn poly(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * s + a)
}

fn poly_fit(s: &[f64], v: &[f64], degree: usize) -> Vec<f64> {
    let m = DMatrix::from_fn(s.len(), degree + 1, |i, j| s[i].powi(j as i32));
    m.svd(true, true).solve(&DVector::from_column_slice(v), 1e-14).expect("SVD solve").iter().copied().collect()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Sample `ι_B μ` in a near-axis chart and test the form
/// `F(s) dx'∧dy' + dG(s)∧dφ` with `ψ = ψ(s)`.
pub fn near_axis_check(fs: &FluxSystem, axis: &AxisReport, chart: &dyn NearAxisChart, opts: &NearAxisOptions) -> Result<NearAxisReport, CoordsError> {
    if axis.kind != AxisKind::Elliptic {
        return Err(CoordsError::AxisNotElliptic(axis.kind));
    }
    let psi = fs.psi.as_ref().ok_or(CoordsError::MissingPsi)?;
    let along = axis.section.axis;
    let phi0 = axis.point[along];
    let periods = fs.chart().periods();
    let diff = |a: [f64; 3], b: [f64; 3]| -> [f64; 3] {
        std::array::from_fn(|i| match periods[i] {
            Some(p) => {
                let d = a[i] - b[i];
                d - p * (d / p).round()
            }
            None => a[i] - b[i],
        })
    };
    let origin = chart.to_physical([0.0, 0.0, phi0])?;
    let miss = diff(origin, axis.point);
    if dot(miss, miss).sqrt() > 1e-6 {
        return Err(CoordsError::ChartInvalid(format!("chart origin {origin:?} is off the axis {:?}", axis.point)));
    }
    let beta = fs.beta();
    let h = opts.fd_step;
    let samples: Vec<[f64; 3]> = (0..opts.n_radii)
        .flat_map(|i| {
            let r = opts.r_max * (i + 1) as f64 / opts.n_radii as f64;
            (0..opts.n_angles).map(move |j| {
                let a = TAU * j as f64 / opts.n_angles as f64;
                [r * a.cos(), r * a.sin(), phi0]
            })
        })
        .collect();
    // per sample: s, β'_{x'y'}, β'_{y'φ}, β'_{φx'}, ψ, ρ'
    let rows: Vec<[f64; 6]> = samples
        .par_iter()
        .map(|&q| -> Result<[f64; 6], CoordsError> {
            let p = chart.to_physical(q)?;
            let col = |k: usize| -> Result<[f64; 3], CoordsError> {
                let (mut a, mut b) = (q, q);
                a[k] += h;
                b[k] -= h;
                Ok(diff(chart.to_physical(a)?, chart.to_physical(b)?).map(|v| v / (2.0 * h)))
            };
            let (px, py, pf) = (col(0)?, col(1)?, col(2)?);
            let w = beta.eval3(p)?;
            let jac = Matrix3::from_columns(&[Vector3::from(px), Vector3::from(py), Vector3::from(pf)]).determinant();
            Ok([
                0.5 * (q[0] * q[0] + q[1] * q[1]),
                dot(w, cross(px, py)),
                dot(w, cross(py, pf)),
                dot(w, cross(pf, px)),
                psi.value(p)?,
                fs.mu.density().value(p)? * jac,
            ])
        })
        .collect::<Result<_, _>>()?;

    let s: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let gp: Vec<f64> = rows
        .iter()
        .zip(&samples)
        .map(|(r, q)| (q[1] * r[2] - q[0] * r[3]) / (q[0] * q[0] + q[1] * q[1]))
        .collect();
    let d = opts.degree;
    let f_fit = poly_fit(&s, &col(1), d);
    let g_prime_fit = poly_fit(&s, &gp, d);
    let psi_fit = poly_fit(&s, &col(4), d);
    let rho_fit = poly_fit(&s, &col(5), d);
    let mut angular_residual: f64 = 0.0;
    for (r, q) in rows.iter().zip(&samples) {
        let g = poly(&g_prime_fit, r[0]);
        angular_residual = angular_residual
            .max((r[1] - poly(&f_fit, r[0])).abs())
            .max((r[2] - g * q[1]).abs())
            .max((r[3] + g * q[0]).abs())
            .max((r[4] - poly(&psi_fit, r[0])).abs());
    }
    let span = periods[along].unwrap_or(1.0);
    let speed = f_fit[0] / rho_fit[0];
    let transit_time = span / speed.abs();
    let mut s_samples: Vec<f64> = s.clone();
    s_samples.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    Ok(NearAxisReport {
        axis_point: axis.point,
        r_max: opts.r_max,
        s_samples,
        f_fit,
        g_prime_fit,
        psi_fit,
        rho_fit,
        angular_residual,
        transit_time,
        transit_rel_err: (transit_time - axis.period).abs() / axis.period,
        verdict: Verdict::from_bool(angular_residual < opts.tol),
    })
}
