//! Flux systems, adapted 1-forms and the symmetry construction.

mod blend;
mod obstruction;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blend::{blend_adapted, BlendPiece, BlendReport};
pub use obstruction::{reeb_obstruction, ClosedOrbit, ObstructionReport, ObstructionVerdict};

use crate::expr::{Axis, ChartDomain, ScalarField};
use crate::geom::{
    apply, bracket, check_density, d, divergence, grid_residual, interior, lie_derivative, vector_from_two_form,
    wedge, Extremum, GeomError, Grid, KForm, VecField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    NuClosed,
    NuOfB,
    DivB,
    PsiMatchesNu,
}

impl Axiom {
    /// Key used in residual maps and reports.
    pub fn key(self) -> &'static str {
        match self {
            Axiom::NuClosed => "d_nu",
            Axiom::NuOfB => "nu_of_B",
            Axiom::DivB => "div_mu_B",
            Axiom::PsiMatchesNu => "dpsi_minus_nu",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotAdaptedReason {
    Nonpositive,
    NotClosedModNu,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FluxError {
    #[error("axiom {which:?} violated: {value:e} at {worst_point:?}")]
    AxiomViolation { which: Axiom, worst_point: [f64; 3], value: f64 },
    #[error("1-form not adapted ({reason:?}): {value:e} at {worst_point:?}")]
    NotAdapted { reason: NotAdaptedReason, worst_point: [f64; 3], value: f64 },
    #[error("construction refused: {0}")]
    Refused(String),
    #[error("the flux system has no first integral ψ")]
    MissingPsi,
    #[error("ψ = {0} is not covered by any blend interval")]
    CoverageGap(f64),
    #[error("blend piece {0} is not adapted on its interval")]
    PieceNotAdapted(usize),
    #[error("orbit does not close: gap {0:e}")]
    OrbitNotClosed(f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

impl From<crate::expr::ExprError> for FluxError {
    fn from(e: crate::expr::ExprError) -> Self {
        FluxError::Geom(GeomError::Expr(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Flux-system axiom residuals.
    pub axiom: f64,
    /// Symmetry-certificate residuals.
    pub certificate: f64,
    /// `‖ν‖` threshold above which the independence margin is measured.
    pub nu_floor: f64,
    /// Extrapolated boundary residual for the tangency flag.
    pub tangency: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { axiom: 1e-9, certificate: 1e-9, nu_floor: 1e-6, tangency: 1e-5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Axiom residuals of a candidate flux system, with worst points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub d_nu: Extremum,
    pub nu_b: Extremum,
    pub div_b: Extremum,
    pub psi_minus_nu: Option<Extremum>,
    pub density_min: Extremum,
    pub tangency: Option<f64>,
    pub tangential: bool,
}

impl AxiomReport {
    pub fn first_violation(&self, tol: f64) -> Option<(Axiom, Extremum)> {
        [
            (Axiom::NuClosed, Some(self.d_nu)),
            (Axiom::NuOfB, Some(self.nu_b)),
            (Axiom::DivB, Some(self.div_b)),
            (Axiom::PsiMatchesNu, self.psi_minus_nu),
        ]
        .into_iter()
        .find_map(|(a, e)| e.filter(|e| e.value >= tol).map(|e| (a, e)))
    }

    pub fn residual_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert(Axiom::NuClosed.key().to_owned(), self.d_nu.value);
        m.insert(Axiom::NuOfB.key().to_owned(), self.nu_b.value);
        m.insert(Axiom::DivB.key().to_owned(), self.div_b.value);
        if let Some(e) = self.psi_minus_nu {
            m.insert(Axiom::PsiMatchesNu.key().to_owned(), e.value);
        }
        m
    }
}

/// A validated triple `(B, ν, μ)`.
#[derive(Clone, Debug)]
pub struct FluxSystem {
    pub b: VecField,
    pub nu: KForm,
    pub mu: KForm,
    pub psi: Option<ScalarField>,
    pub tangential: bool,
    pub axioms: AxiomReport,
}

impl FluxSystem {
    pub fn chart(&self) -> &ChartDomain {
        self.b.chart()
    }

    pub fn chart_arc(&self) -> &Arc<ChartDomain> {
        self.b.chart_arc()
    }

    /// The flux form `ι_B μ`.
    pub fn beta(&self) -> KForm {
        interior(&self.b, &self.mu).expect("μ is a 3-form")
    }
}

pub fn axiom_report(
    b: &VecField,
    nu: &KForm,
    mu: &KForm,
    psi: Option<&ScalarField>,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<AxiomReport, FluxError> {
    let density_min = check_density(mu, grid)?;
    let d_nu = grid_residual(&d(nu)?, grid)?;
    let nu_b = grid_residual(&interior(b, nu)?, grid)?;
    let div = divergence(b, mu)?;
    let div_b = grid_residual(&KForm::scalar(div, b.chart_arc().clone()), grid)?;
    let psi_minus_nu = match psi {
        Some(p) => {
            let dpsi = d(&KForm::scalar(p.clone(), b.chart_arc().clone()))?;
            Some(grid_residual(&dpsi.sub(nu), grid)?)
        }
        None => None,
    };
    let tangency = tangency_residual(b, nu)?;
    Ok(AxiomReport {
        d_nu,
        nu_b,
        div_b,
        psi_minus_nu,
        density_min,
        tangency,
        tangential: tangency.is_none_or(|t| t < tol.tangency),
    })
}

pub fn validate_flux_system(
    b: VecField,
    nu: KForm,
    mu: KForm,
    psi: Option<ScalarField>,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<FluxSystem, FluxError> {
    assert_eq!(nu.degree(), 1, "ν must be a 1-form");
    assert_eq!(mu.degree(), 3, "μ must be a 3-form");
    let axioms = axiom_report(&b, &nu, &mu, psi.as_ref(), grid, tol)?;
    if let Some((which, e)) = axioms.first_violation(tol.axiom) {
        return Err(FluxError::AxiomViolation { which, worst_point: e.point, value: e.value });
    }
    Ok(FluxSystem { b, nu, mu, psi, tangential: axioms.tangential, axioms })
}

const SHELLS: [f64; 2] = [1e-3, 1e-4];

/// Boundary tangency residual, linearly extrapolated to the boundary from two
/// interior shells. `None` when the chart has no boundary.
fn tangency_residual(b: &VecField, nu: &KForm) -> Result<Option<f64>, FluxError> {
    let chart = b.chart();
    let mut worst: Option<f64> = None;
    let mut bump = |v: f64| worst = Some(worst.map_or(v, |w: f64| w.max(v)));
    let n = 13;
    let extrapolate = |v1: f64, v2: f64| v2 - (v1 - v2) * SHELLS[1] / (SHELLS[0] - SHELLS[1]);
    if chart.faces_are_boundary {
        for i in 0..3 {
            let Axis::Interval { lo, hi } = chart.axes[i] else { continue };
            let span = hi - lo;
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            for (face, sign) in [(lo, 1.0), (hi, -1.0)] {
                for a in 0..n {
                    for c in 0..n {
                        let mut vals = [[0.0; 2]; 2];
                        for (s, delta) in SHELLS.iter().enumerate() {
                            let mut p = [0.0; 3];
                            p[i] = face + sign * delta * span;
                            p[j] = sample_axis(&chart.axes[j], a, n);
                            p[k] = sample_axis(&chart.axes[k], c, n);
                            let bv = b.eval(p)?;
                            let nv = nu.eval3(p)?;
                            vals[0][s] = bv[i];
                            vals[1][s] = nv[j].abs().max(nv[k].abs());
                        }
                        bump(extrapolate(vals[0][0], vals[0][1]).abs());
                        bump(extrapolate(vals[1][0], vals[1][1]).abs());
                    }
                }
            }
        }
    }
    for src in &chart.regions {
        let g = ScalarField::parse(src, chart, &BTreeMap::new())?;
        let seeds = Grid::uniform(n).points(&ChartDomain { regions: Vec::new(), ..chart.clone() })?;
        for seed in seeds.into_iter().step_by(7) {
            let mut vals = [[0.0; 2]; 2];
            let mut ok = true;
            for (s, delta) in SHELLS.iter().enumerate() {
                let level = -delta * typical_span(chart);
                let Some(p) = project_to_level(&g, seed, level) else {
                    ok = false;
                    break;
                };
                if !chart.in_box(p, 0.0) {
                    ok = false;
                    break;
                }
                let gr = g.grad(p)?;
                let gn = norm(gr);
                let nrm = [gr[0] / gn, gr[1] / gn, gr[2] / gn];
                let bv = b.eval(p)?;
                let nv = nu.eval3(p)?;
                let nn = dot3(nv, nrm);
                vals[0][s] = dot3(bv, nrm);
                vals[1][s] = norm([nv[0] - nn * nrm[0], nv[1] - nn * nrm[1], nv[2] - nn * nrm[2]]);
            }
            if ok {
                bump(extrapolate(vals[0][0], vals[0][1]).abs());
                bump(extrapolate(vals[1][0], vals[1][1]).abs());
            }
        }
    }
    Ok(worst)
}

fn typical_span(chart: &ChartDomain) -> f64 {
    chart.axes.iter().map(Axis::span).fold(f64::INFINITY, f64::min)
}

fn sample_axis(axis: &Axis, j: usize, n: usize) -> f64 {
    match *axis {
        Axis::Periodic { period } => period * j as f64 / n as f64,
        Axis::Interval { lo, hi } => {
            let m = 1e-3 * (hi - lo);
            lo + m + (hi - lo - 2.0 * m) * j as f64 / (n - 1) as f64
        }
    }
}

fn project_to_level(g: &ScalarField, mut p: [f64; 3], level: f64) -> Option<[f64; 3]> {
    for _ in 0..60 {
        let j = g.jet(p).ok()?;
        let r = j.value - level;
        let g2 = dot3(j.grad, j.grad);
        if g2 < 1e-24 {
            return None;
        }
        for i in 0..3 {
            p[i] -= r * j.grad[i] / g2;
        }
        if r.abs() < 1e-14 {
            return Some(p);
        }
    }
    None
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// A 1-form that passed [`check_adapted`].
#[derive(Clone, Debug)]
pub struct AdaptedForm {
    pub eta: KForm,
    /// `η(B)` as a field.
    pub eta_b: ScalarField,
    pub eta_b_min: Extremum,
    pub adapt_residual: Extremum,
}

impl AdaptedForm {
    /// Wrap `η` without the grid checks, for uses that only need `η(B) > 0`
    /// near a single torus. The recorded extrema are zero.
    pub fn unchecked(fs: &FluxSystem, eta: KForm) -> Result<Self, FluxError> {
        let eta_b = apply(&eta, &fs.b)?;
        let zero = Extremum { value: 0.0, point: [0.0; 3] };
        Ok(Self { eta, eta_b, eta_b_min: zero, adapt_residual: zero })
    }
}

pub fn check_adapted(fs: &FluxSystem, eta: &KForm, grid: &Grid, tol: &Tolerances) -> Result<AdaptedForm, FluxError> {
    let eta_b = apply(eta, &fs.b)?;
    let chart = fs.chart();
    let eta_b_min = grid.inf(chart, |p| Ok(eta_b.value(p)?))?;
    if eta_b_min.value <= 0.0 {
        return Err(FluxError::NotAdapted {
            reason: NotAdaptedReason::Nonpositive,
            worst_point: eta_b_min.point,
            value: eta_b_min.value,
        });
    }
    let adapt_residual = grid_residual(&wedge(&d(eta)?, &fs.nu)?, grid)?;
    if adapt_residual.value >= tol.axiom {
        return Err(FluxError::NotAdapted {
            reason: NotAdaptedReason::NotClosedModNu,
            worst_point: adapt_residual.point,
            value: adapt_residual.value,
        });
    }
    Ok(AdaptedForm { eta: eta.clone(), eta_b, eta_b_min, adapt_residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreadaptedReport {
    pub iota_b_deta: f64,
    pub eta_b_min: f64,
    pub verdict: Verdict,
}

/// Sufficient condition `ι_B dη = 0, η(B) > 0`. A pass implies adaptedness
/// (`ν ∧ dη` vanishes because `ι_B` of it does and `ν(B) = 0`).
pub fn check_preadapted(fs: &FluxSystem, eta: &KForm, grid: &Grid, tol: &Tolerances) -> Result<PreadaptedReport, FluxError> {
    let ib = grid_residual(&interior(&fs.b, &d(eta)?)?, grid)?;
    let eta_b = apply(eta, &fs.b)?;
    let lo = grid.inf(fs.chart(), |p| Ok(eta_b.value(p)?))?;
    let ok = ib.value < tol.axiom && lo.value > 0.0;
    if ok {
        debug_assert!(check_adapted(fs, eta, grid, tol).is_ok(), "pre-adapted form failed adaptedness");
    }
    Ok(PreadaptedReport { iota_b_deta: ib.value, eta_b_min: lo.value, verdict: Verdict::from_bool(ok) })
}

pub const CERTIFICATE_KEYS: [&str; 5] = ["iu_iB_mu_minus_nu", "eta_u", "bracket_u_Btilde", "lie_u_mutilde", "div_mutilde_u"];

/// Output of the symmetry construction with its residual certificate.
#[derive(Clone, Debug)]
pub struct SymmetryCertificate {
    pub u: VecField,
    pub b_tilde: VecField,
    pub mu_tilde: KForm,
    pub residuals: BTreeMap<String, Extremum>,
    /// Min of `‖u × B̃‖` where `‖ν‖ > ν_floor`; `None` if `ν` is below the
    /// floor everywhere on the grid.
    pub independence_margin: Option<f64>,
    pub grid: Grid,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub system_id: String,
    pub grid: Grid,
    pub residuals: BTreeMap<String, f64>,
    pub worst_points: BTreeMap<String, [f64; 3]>,
    pub independence_margin: Option<f64>,
    pub verdict: Verdict,
    pub tolerances: Tolerances,
}

impl SymmetryCertificate {
    pub fn residual(&self, key: &str) -> f64 {
        self.residuals[key].value
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().map(|e| e.value).fold(0.0, f64::max)
    }

    pub fn summary(&self, system_id: &str) -> CertificateSummary {
        CertificateSummary {
            system_id: system_id.to_owned(),
            grid: self.grid.clone(),
            residuals: self.residuals.iter().map(|(k, e)| (k.clone(), e.value)).collect(),
            worst_points: self.residuals.iter().map(|(k, e)| (k.clone(), e.point)).collect(),
            independence_margin: self.independence_margin,
            verdict: self.verdict,
            tolerances: self.tolerances,
        }
    }
}

/// `u` with `ι_u μ = ν∧η / η(B)`, plus the residuals of every property the
/// construction guarantees.
pub fn construct_symmetry(
    fs: &FluxSystem,
    af: &AdaptedForm,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<SymmetryCertificate, FluxError> {
    let chart = fs.chart_arc().clone();
    let lo = grid.inf(&chart, |p| Ok(af.eta_b.value(p)?))?;
    if lo.value <= 0.0 {
        return Err(FluxError::Refused(format!("η(B) = {:e} at {:?}", lo.value, lo.point)));
    }
    let eta_b = &af.eta_b;
    let omega = wedge(&fs.nu, &af.eta)?.div(eta_b);
    let u = vector_from_two_form(&omega, &fs.mu, grid)?;
    let b_tilde = fs.b.div(eta_b);
    let mu_tilde = KForm::volume(fs.mu.density() * eta_b, chart.clone());

    let beta = fs.beta();
    let mut residuals = BTreeMap::new();
    let iuib = interior(&u, &beta)?;
    residuals.insert(CERTIFICATE_KEYS[0].to_owned(), grid_residual(&iuib.sub(&fs.nu), grid)?);
    let eta_u = KForm::scalar(apply(&af.eta, &u)?, chart.clone());
    residuals.insert(CERTIFICATE_KEYS[1].to_owned(), grid_residual(&eta_u, grid)?);
    residuals.insert(CERTIFICATE_KEYS[2].to_owned(), grid_residual(&bracket(&u, &b_tilde).as_form(), grid)?);
    residuals.insert(CERTIFICATE_KEYS[3].to_owned(), grid_residual(&lie_derivative(&u, &mu_tilde)?, grid)?);
    let div = KForm::scalar(divergence(&u, &mu_tilde)?, chart.clone());
    residuals.insert(CERTIFICATE_KEYS[4].to_owned(), grid_residual(&div, grid)?);

    let independence_margin = independence_margin(&u, &b_tilde, &fs.nu, grid, tol.nu_floor)?;
    let ok = residuals.values().all(|e| e.value < tol.certificate);
    Ok(SymmetryCertificate {
        u,
        b_tilde,
        mu_tilde,
        residuals,
        independence_margin,
        grid: grid.clone(),
        tolerances: *tol,
        verdict: Verdict::from_bool(ok),
    })
}

fn independence_margin(u: &VecField, bt: &VecField, nu: &KForm, grid: &Grid, floor: f64) -> Result<Option<f64>, FluxError> {
    let vals = grid.sweep(u.chart(), |p| {
        let n = nu.eval3(p)?;
        if norm(n) <= floor {
            return Ok(None);
        }
        let a = u.eval(p)?;
        let b = bt.eval(p)?;
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        Ok(Some(norm(c)))
    })?;
    Ok(vals.into_iter().filter_map(|(_, v)| v).reduce(f64::min))
}

/// `b̂(X) = ι_X ι_B μ + η(X) η`.
pub fn bundle_iso(fs: &FluxSystem, eta: &KForm, x: &VecField) -> Result<KForm, FluxError> {
    let a = interior(x, &fs.beta())?;
    let ex = apply(eta, x)?;
    Ok(a.add(&eta.scale(&ex)))
}

/// Inverse of [`bundle_iso`]: `ι_X μ = α∧η/η(B) + (α(B)/η(B)²) ι_B μ`.
pub fn bundle_iso_inv(fs: &FluxSystem, eta: &KForm, alpha: &KForm, grid: &Grid) -> Result<VecField, FluxError> {
    let eb = apply(eta, &fs.b)?;
    let ab = apply(alpha, &fs.b)?;
    let omega = wedge(alpha, eta)?.div(&eb).add(&fs.beta().scale(&(&ab / &(&eb * &eb))));
    Ok(vector_from_two_form(&omega, &fs.mu, grid)?)
}

#[derive(Clone, Debug)]
pub struct NoetherReport {
    pub nu: KForm,
    pub d_nu: f64,
    pub nu_b: f64,
    pub nu_u: f64,
    pub bracket_u_btilde: f64,
    pub div_fmu_u: f64,
    /// Set when the hypotheses `[u, B/f] = 0`, `div_{fμ} u = 0` fail to
    /// tolerance; `ν` is still returned.
    pub warnings: Vec<String>,
}

/// `ν := ι_u ι_B μ` with the closedness and hypothesis residuals.
pub fn forward_noether(
    mu: &KForm,
    b: &VecField,
    u: &VecField,
    f: &ScalarField,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<NoetherReport, FluxError> {
    let chart = b.chart_arc().clone();
    let fmin = grid.inf(&chart, |p| Ok(f.value(p)?))?;
    if fmin.value <= 0.0 {
        return Err(FluxError::Refused(format!("f = {:e} at {:?}", fmin.value, fmin.point)));
    }
    let nu = interior(u, &interior(b, mu)?)?;
    let d_nu = grid_residual(&d(&nu)?, grid)?.value;
    let nu_b = grid_residual(&interior(b, &nu)?, grid)?.value;
    let nu_u = grid_residual(&interior(u, &nu)?, grid)?.value;
    let bt = b.div(f);
    let bracket_u_btilde = grid_residual(&bracket(u, &bt).as_form(), grid)?.value;
    let fmu = KForm::volume(mu.density() * f, chart.clone());
    let div_fmu_u = grid_residual(&KForm::scalar(divergence(u, &fmu)?, chart), grid)?.value;
    let mut warnings = Vec::new();
    if bracket_u_btilde >= tol.certificate {
        warnings.push(format!("[u, B/f] residual {bracket_u_btilde:e}"));
    }
    if div_fmu_u >= tol.certificate {
        warnings.push(format!("div_fμ u residual {div_fmu_u:e}"));
    }
    Ok(NoetherReport { nu, d_nu, nu_b, nu_u, bracket_u_btilde, div_fmu_u, warnings })
}

/// Residual of `ι_{[u,B̃]} μ̃ + (div_μ̃ u) ι_B μ − d ι_u ι_B μ`, which vanishes
/// for any `u` and positive `f` once `L_B μ = 0`.
pub fn conformal_identity_residual(fs: &FluxSystem, u: &VecField, f: &ScalarField, grid: &Grid) -> Result<Extremum, FluxError> {
    let chart = fs.chart_arc().clone();
    let bt = fs.b.div(f);
    let mu_t = KForm::volume(fs.mu.density() * f, chart.clone());
    let beta = fs.beta();
    let lhs = interior(&bracket(u, &bt), &mu_t)?;
    let div = divergence(u, &mu_t)?;
    let dnu = d(&interior(u, &beta)?)?;
    let r = lhs.add(&beta.scale(&div)).sub(&dnu);
    Ok(grid_residual(&r, grid)?)
}

#[cfg(test)]
mod tests;
