use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flux::{AdaptedForm, FluxSystem, Verdict};
use crate::geom::VecField;
use crate::trace::TraceOptions;

use super::{chart_point, CoordsError, FluxChart};

/// A family of tori labelled by `z = ψ`, each with angle coordinates.
pub trait SurfaceChart: Sync {
    /// Surface labels, increasing.
    fn labels(&self) -> Vec<f64>;
    /// Lifted physical point with angles `θ` (radians) on surface `i`.
    fn position(&self, surface: usize, theta: [f64; 2]) -> Result<[f64; 3], CoordsError>;
}

/// Rectified tori sorted by level, evaluated through [`chart_point`].
pub struct RectifiedBand<'a> {
    fs: &'a FluxSystem,
    b_tilde: VecField,
    charts: Vec<FluxChart>,
    trace: TraceOptions,
}

impl<'a> RectifiedBand<'a> {
    pub fn new(fs: &'a FluxSystem, af: &AdaptedForm, mut charts: Vec<FluxChart>, trace: TraceOptions) -> Self {
        charts.sort_by(|a, b| a.surface_psi.total_cmp(&b.surface_psi));
        Self { fs, b_tilde: fs.b.div(&af.eta_b), charts, trace }
    }

    pub fn charts(&self) -> &[FluxChart] {
        &self.charts
    }
}

impl SurfaceChart for RectifiedBand<'_> {
    fn labels(&self) -> Vec<f64> {
        self.charts.iter().map(|c| c.surface_psi).collect()
    }

    fn position(&self, surface: usize, theta: [f64; 2]) -> Result<[f64; 3], CoordsError> {
        chart_point(self.fs, &self.b_tilde, &self.charts[surface], theta, &self.trace)
    }
}

/// The chart with `θ1` replaced by `θ1 + amplitude·sin θ2`.
pub struct GaugeShift<'a, C: ?Sized> {
    pub inner: &'a C,
    pub amplitude: f64,
}

impl<C: SurfaceChart + ?Sized> SurfaceChart for GaugeShift<'_, C> {
    fn labels(&self) -> Vec<f64> {
        self.inner.labels()
    }

    fn position(&self, surface: usize, theta: [f64; 2]) -> Result<[f64; 3], CoordsError> {
        self.inner.position(surface, [theta[0] - self.amplitude * theta[1].sin(), theta[1]])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamadaOptions {
    pub n_theta1: usize,
    pub n_theta2: usize,
    /// Central-difference step in the angles, radians.
    pub theta_step: f64,
    pub variation_tol: f64,
    pub identity_tol: f64,
}

impl Default for HamadaOptions {
    fn default() -> Self {
        Self { n_theta1: 8, n_theta2: 8, theta_step: 1e-4, variation_tol: 1e-4, identity_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstSample {
    pub z: f64,
    pub theta: [f64; 2],
    /// One of `rho_b1`, `rho_b2`, `rho_u1`, `rho_u2`.
    pub quantity: String,
    pub deviation: f64,
}

/// Profiles on the interior surfaces of a band. `F' = ρB²`, `G' = ρB¹`,
/// `K' = ρu²`, `L' = ρu¹` are surface means; `F, G, K, L` vanish on the
/// first interior surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamadaProfiles {
    pub z: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub g_prime: Vec<f64>,
    pub k_prime: Vec<f64>,
    pub l_prime: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    /// Sup deviation from the surface mean of `(ρB¹, ρB², ρu¹, ρu²)`.
    pub angular_variation: f64,
    /// Sup of `|ρ(B¹u² − B²u¹) − ψ'(z)|`.
    pub identity_residual: f64,
    pub worst: Option<WorstSample>,
    pub verdict: Verdict,
}

impl HamadaProfiles {
    /// Profiles as CSV `(z, F, G, K, L)` under a JSON header line.
    pub fn to_csv(&self) -> String {
        let header = serde_json::json!({
            "angular_variation": self.angular_variation,
            "identity_residual": self.identity_residual,
            "verdict": self.verdict,
        });
        let mut s = format!("# {header}\nz,F,G,K,L\n");
        for i in 0..self.z.len() {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", self.z[i], self.f[i], self.g[i], self.k[i], self.l[i]);
        }
        s
    }
}

const NAMES: [&str; 4] = ["rho_b1", "rho_b2", "rho_u1", "rho_u2"];

/// Express `B` and `u` in the coordinates `(θ1, θ2, z)` of `chart` and check
/// that `ρB^i` and `ρu^i` depend on `z` alone, where `μ = ρ dθ1∧dθ2∧dz`.
/// Labels are ψ-values, so `ψ'(z) = 1` in the identity
/// `ρ(B¹u² − B²u¹) = ψ'(z)`. Derivatives are central differences: in the
/// angles with `theta_step`, across surfaces with the label spacing.
pub fn hamada_check(fs: &FluxSystem, u: &VecField, chart: &dyn SurfaceChart, opts: &HamadaOptions) -> Result<HamadaProfiles, CoordsError> {
    let z = chart.labels();
    if z.len() < 3 {
        return Err(CoordsError::ChartInvalid(format!("{} surfaces; at least 3 are needed for ∂z", z.len())));
    }
    if z.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoordsError::ChartInvalid("surface labels must be strictly increasing".into()));
    }
    let periods = fs.chart().periods();
    let diff = |a: [f64; 3], b: [f64; 3]| -> [f64; 3] {
        let mut d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        for (i, p) in periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    };
    let eps = opts.theta_step;
    let mesh: Vec<[f64; 2]> = (0..opts.n_theta1)
        .flat_map(|i| {
            (0..opts.n_theta2).map(move |j| {
                [std::f64::consts::TAU * (i as f64 + 0.5) / opts.n_theta1 as f64, std::f64::consts::TAU * (j as f64 + 0.5) / opts.n_theta2 as f64]
            })
        })
        .collect();

    let mut out = HamadaProfiles {
        z: Vec::new(),
        f_prime: Vec::new(),
        g_prime: Vec::new(),
        k_prime: Vec::new(),
        l_prime: Vec::new(),
        f: Vec::new(),
        g: Vec::new(),
        k: Vec::new(),
        l: Vec::new(),
        angular_variation: 0.0,
        identity_residual: 0.0,
        worst: None,
        verdict: Verdict::Pass,
    };
    for s in 1..z.len() - 1 {
        let (hm, hp) = (z[s] - z[s - 1], z[s + 1] - z[s]);
        let samples: Vec<([f64; 4], f64)> = mesh
            .par_iter()
            .map(|&th| -> Result<([f64; 4], f64), CoordsError> {
                let x0 = chart.position(s, th)?;
                let fd = |d: [f64; 2]| -> Result<[f64; 3], CoordsError> {
                    let p = chart.position(s, [th[0] + eps * d[0], th[1] + eps * d[1]])?;
                    let m = chart.position(s, [th[0] - eps * d[0], th[1] - eps * d[1]])?;
                    Ok(diff(p, m).map(|v| v / (2.0 * eps)))
                };
                let e1 = fd([1.0, 0.0])?;
                let e2 = fd([0.0, 1.0])?;
                let up = diff(chart.position(s + 1, th)?, x0);
                let dn = diff(chart.position(s - 1, th)?, x0);
                // three-point derivative on a possibly uneven stencil
                let ez: [f64; 3] = std::array::from_fn(|i| (hm * hm * up[i] - hp * hp * dn[i]) / (hm * hp * (hm + hp)));
                let e = Matrix3::from_columns(&[Vector3::from(e1), Vector3::from(e2), Vector3::from(ez)]);
                let det = e.determinant();
                if !det.is_finite() || det.abs() < 1e-14 {
                    return Err(CoordsError::ChartInvalid(format!("degenerate chart Jacobian at θ = {th:?}")));
                }
                let rho = fs.mu.density().value(x0)? * det;
                let lu = e.lu();
                let solve = |v: [f64; 3]| lu.solve(&Vector3::from(v)).expect("nonsingular");
                let cb = solve(fs.b.eval(x0)?);
                let cu = solve(u.eval(x0)?);
                let id = rho * (cb[0] * cu[1] - cb[1] * cu[0]);
                Ok(([rho * cb[0], rho * cb[1], rho * cu[0], rho * cu[1]], id))
            })
            .collect::<Result<_, _>>()?;
        let n = samples.len() as f64;
        let means: [f64; 4] = std::array::from_fn(|q| samples.iter().map(|s| s.0[q]).sum::<f64>() / n);
        for (i, (vals, id)) in samples.iter().enumerate() {
            for q in 0..4 {
                let dev = (vals[q] - means[q]).abs();
                if dev > out.angular_variation {
                    out.angular_variation = dev;
                    out.worst = Some(WorstSample { z: z[s], theta: mesh[i], quantity: NAMES[q].into(), deviation: dev });
                }
            }
            out.identity_residual = out.identity_residual.max((id - 1.0).abs());
        }
        out.z.push(z[s]);
        out.g_prime.push(means[0]);
        out.f_prime.push(means[1]);
        out.l_prime.push(means[2]);
        out.k_prime.push(means[3]);
    }
    let integrate = |d: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0];
        for i in 1..d.len() {
            acc.push(acc[i - 1] + 0.5 * (d[i] + d[i - 1]) * (out.z[i] - out.z[i - 1]));
        }
        acc
    };
    out.f = integrate(&out.f_prime);
    out.g = integrate(&out.g_prime);
    out.k = integrate(&out.k_prime);
    out.l = integrate(&out.l_prime);
    out.verdict = Verdict::from_bool(out.angular_variation < opts.variation_tol && out.identity_residual < opts.identity_tol);
    Ok(out)
}
