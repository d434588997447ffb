use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{Axis, ChartDomain, ScalarField};
use crate::flux::FluxSystem;

use super::axis::span_scale;
use super::dopri::{eval, Domain};
use super::section::{closure_fit, poincare, rotation_number, Section};
use super::{refine_axis, split_lift, AxisKind, AxisReport, TraceError, TraceOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LevelClass {
    RegularTorus,
    AxisCandidate,
    CriticalNonaxis,
    Boundary,
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentLabel {
    #[serde(rename = "T2xI")]
    T2xI,
    #[serde(rename = "SOLID_TORUS")]
    SolidTorus,
    #[serde(rename = "OPEN_SOLID_TORUS")]
    OpenSolidTorus,
    #[serde(rename = "S2xS1")]
    S2xS1,
    #[serde(rename = "COMPACT_NO_BOUNDARY")]
    CompactNoBoundary,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeOptions {
    pub section: Section,
    #[serde(default = "d_seeds")]
    pub seeds_per_level: usize,
    #[serde(default = "d_crossings")]
    pub n_crossings: usize,
    /// Total section crossings allowed across all levels.
    #[serde(default = "d_budget")]
    pub budget: usize,
    #[serde(default = "d_closure")]
    pub closure_tol: f64,
    #[serde(default = "d_order")]
    pub fourier_order: usize,
    #[serde(default = "d_level_tol")]
    pub level_tol: f64,
    /// Seeds per in-section axis for level and critical-point searches.
    #[serde(default = "d_grid")]
    pub seed_grid: usize,
    #[serde(default)]
    pub trace: TraceOptions,
}

fn d_seeds() -> usize {
    2
}
fn d_crossings() -> usize {
    64
}
fn d_budget() -> usize {
    100_000
}
fn d_closure() -> f64 {
    1e-3
}
fn d_order() -> usize {
    16
}
fn d_level_tol() -> f64 {
    1e-9
}
fn d_grid() -> usize {
    12
}

impl ProbeOptions {
    pub fn new(section: Section) -> Self {
        Self {
            section,
            seeds_per_level: d_seeds(),
            n_crossings: d_crossings(),
            budget: d_budget(),
            closure_tol: d_closure(),
            fourier_order: d_order(),
            level_tol: d_level_tol(),
            seed_grid: d_grid(),
            trace: TraceOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: [f64; 3],
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub class: LevelClass,
    pub seeds: Vec<[f64; 3]>,
    pub closure_residual: Option<f64>,
    pub rotation: Option<f64>,
    pub axes: Vec<AxisReport>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub levels: Vec<f64>,
    pub axes: usize,
    pub touches_boundary: bool,
    pub label: ComponentLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub section: Section,
    pub critical_points: Vec<CriticalPoint>,
    pub levels: Vec<LevelReport>,
    pub components: Vec<Component>,
    pub notes: Vec<String>,
}

impl RegionReport {
    pub fn class_of(&self, level: f64) -> Option<LevelClass> {
        self.levels.iter().find(|l| l.level == level).map(|l| l.class)
    }
}

/// Classify each ψ-level as a regular torus, an axis, a critical non-axis
/// level, boundary contact or unresolved, and group regular bands into
/// components. Levels fan out in parallel and are reported in input order.
pub fn probe_toroidal_region(fs: &FluxSystem, levels: &[f64], opts: &ProbeOptions) -> Result<RegionReport, TraceError> {
    let psi = fs.psi.as_ref().ok_or(TraceError::MissingPsi)?;
    let chart = fs.chart();
    let domain = Domain::new(chart)?;
    let critical = critical_points(psi, chart, &domain, opts)?;

    let mut spent = 0usize;
    let mut affordable = Vec::with_capacity(levels.len());
    for &l in levels {
        let is_crit = critical.iter().any(|c| (c.psi - l).abs() < opts.level_tol);
        let cost = if is_crit { 0 } else { opts.seeds_per_level * opts.n_crossings };
        spent += cost;
        affordable.push(spent <= opts.budget);
    }

    let reports: Vec<LevelReport> = levels
        .par_iter()
        .zip(affordable.par_iter())
        .map(|(&l, &ok)| {
            if !ok {
                return Ok(level_report(l, LevelClass::Unresolved, Some("probe budget exhausted".into())));
            }
            probe_level(fs, psi, &domain, &critical, l, opts)
        })
        .collect::<Result<_, TraceError>>()?;

    let components = components(&reports, chart);
    let mut notes = Vec::new();
    for r in &reports {
        if r.class == LevelClass::CriticalNonaxis {
            notes.push(format!("level ψ = {} is critical and not an axis; it lies outside the toroidal region", r.level));
        }
    }
    let report = RegionReport { section: opts.section.clone(), critical_points: critical, levels: reports, components, notes };
    if affordable.iter().any(|ok| !ok) {
        return Err(TraceError::BudgetExceeded(Box::new(report)));
    }
    Ok(report)
}

fn level_report(level: f64, class: LevelClass, note: Option<String>) -> LevelReport {
    LevelReport { level, class, seeds: Vec::new(), closure_residual: None, rotation: None, axes: Vec::new(), note }
}

fn section_grid(chart: &ChartDomain, section: &Section, n: usize) -> Vec<[f64; 2]> {
    let samples = |a: usize| -> Vec<f64> {
        match chart.axes[a] {
            Axis::Periodic { period } => (0..n).map(|j| period * j as f64 / n as f64).collect(),
            Axis::Interval { lo, hi } => (0..n).map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n as f64).collect(),
        }
    };
    let [a, b] = section.others();
    let (xs, ys) = (samples(a), samples(b));
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect()
}

fn inside(domain: &Domain, p: [f64; 3], margin: f64) -> Result<bool, TraceError> {
    Ok(domain.excess(p)? < -margin)
}

/// Zeros of `dψ` found by pseudo-inverse Newton from a grid on the section.
fn critical_points(psi: &ScalarField, chart: &ChartDomain, domain: &Domain, opts: &ProbeOptions) -> Result<Vec<CriticalPoint>, TraceError> {
    let mut found: Vec<CriticalPoint> = Vec::new();
    for q in section_grid(chart, &opts.section, opts.seed_grid) {
        let mut p = opts.section.embed(q);
        if !inside(domain, p, 0.0)? {
            continue;
        }
        let mut converged = false;
        for _ in 0..60 {
            let j = psi.jet(p)?;
            let g = Vector3::from(j.grad);
            if g.norm() < 1e-13 {
                converged = true;
                break;
            }
            let h = Matrix3::from_fn(|r, c| j.hess(r, c));
            let Ok(step) = h.svd(true, true).solve(&g, 1e-8 * h.norm().max(1e-300)) else { break };
            if !step.iter().all(|v| v.is_finite()) || step.norm() < 1e-300 {
                break;
            }
            for i in 0..3 {
                p[i] -= step[i];
            }
            if !inside(domain, p, 0.0)? {
                break;
            }
        }
        if !converged {
            let g = psi.grad(p)?;
            converged = inside(domain, p, 0.0)? && (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() < 1e-10;
        }
        if !converged {
            continue;
        }
        let r = split_lift(chart, p).0;
        let [a, b] = opts.section.others();
        let dup = found.iter().any(|c| {
            let d = |i: usize| {
                let mut v = c.point[i] - r[i];
                if let Some(t) = chart.axes[i].period() {
                    v -= t * (v / t).round();
                }
                v
            };
            d(a).hypot(d(b)) < 1e-6
        });
        if !dup {
            found.push(CriticalPoint { point: r, psi: psi.value(r)? });
        }
    }
    Ok(found)
}

/// Section points on `ψ = level`, by Newton along the in-section gradient.
fn level_seeds(psi: &ScalarField, domain: &Domain, chart: &ChartDomain, level: f64, opts: &ProbeOptions) -> Result<Vec<[f64; 3]>, TraceError> {
    let [a, b] = opts.section.others();
    let mut out: Vec<[f64; 3]> = Vec::new();
    for q in section_grid(chart, &opts.section, opts.seed_grid) {
        let mut p = opts.section.embed(q);
        let mut ok = false;
        for _ in 0..40 {
            let j = match psi.jet(p) {
                Ok(j) => j,
                Err(_) => break,
            };
            let r = j.value - level;
            if r.abs() < 1e-13 {
                ok = true;
                break;
            }
            let (ga, gb) = (j.grad[a], j.grad[b]);
            let g2 = ga * ga + gb * gb;
            if g2 < 1e-20 {
                break;
            }
            let mut s = r / g2;
            let (len, cap) = (s.abs() * g2.sqrt(), 0.25 * span_scale(chart));
            if len > cap {
                s *= cap / len;
            }
            p[a] -= s * ga;
            p[b] -= s * gb;
        }
        if !ok || !inside(domain, p, 1e-6)? {
            continue;
        }
        if out.iter().all(|o| (o[a] - p[a]).hypot(o[b] - p[b]) > 1e-3) {
            out.push(p);
        }
    }
    Ok(out)
}

fn probe_level(
    fs: &FluxSystem,
    psi: &ScalarField,
    domain: &Domain,
    critical: &[CriticalPoint],
    level: f64,
    opts: &ProbeOptions,
) -> Result<LevelReport, TraceError> {
    let crit: Vec<&CriticalPoint> = critical.iter().filter(|c| (c.psi - level).abs() < opts.level_tol).collect();
    if !crit.is_empty() {
        let mut axes = Vec::new();
        let mut all_elliptic = true;
        let mut notes = Vec::new();
        for c in crit {
            match refine_axis(&fs.b, psi, c.point, &opts.section, &TraceOptions::tight()) {
                Ok(ax) => {
                    all_elliptic &= ax.kind == AxisKind::Elliptic;
                    axes.push(ax);
                }
                Err(e) => {
                    all_elliptic = false;
                    notes.push(format!("critical point {:?}: {e}", c.point));
                }
            }
        }
        let class = if all_elliptic { LevelClass::AxisCandidate } else { LevelClass::CriticalNonaxis };
        let mut r = level_report(level, class, (!notes.is_empty()).then(|| notes.join("; ")));
        r.axes = axes;
        return Ok(r);
    }

    let chart = fs.chart();
    let all = level_seeds(psi, domain, chart, level, opts)?;
    if all.is_empty() {
        return Ok(level_report(level, LevelClass::Unresolved, Some("no points of the level found on the section".into())));
    }
    let k = opts.seeds_per_level.min(all.len()).max(1);
    let seeds: Vec<[f64; 3]> = (0..k).map(|i| all[i * all.len() / k]).collect();
    let floor = 1e-7 * span_scale(chart);
    let mut worst: f64 = 0.0;
    let mut rotation = None;
    for &s in &seeds {
        let g = psi.grad(s)?;
        let bv = eval(&fs.b, s)?;
        let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm(g) <= floor || norm(bv) <= 1e-9 {
            let mut r = level_report(level, LevelClass::CriticalNonaxis, Some(format!("degenerate seed {s:?}")));
            r.seeds = seeds;
            return Ok(r);
        }
        let orbit = match section_orbit(fs, s, opts) {
            Ok(o) => o,
            Err(TraceError::LeftDomain { point, .. }) => {
                let mut r = level_report(level, LevelClass::Boundary, Some(format!("orbit reaches the boundary at {point:?}")));
                r.seeds = seeds;
                return Ok(r);
            }
            Err(e) => {
                let mut r = level_report(level, LevelClass::Unresolved, Some(e.to_string()));
                r.seeds = seeds;
                return Ok(r);
            }
        };
        let fit = closure_fit(&orbit, opts.fourier_order)?;
        worst = worst.max(fit.residual);
        if rotation.is_none() {
            rotation = rotation_number(&orbit, None).ok().map(|e| e.rho);
        }
    }
    let class = if worst < opts.closure_tol { LevelClass::RegularTorus } else { LevelClass::Unresolved };
    let note = (class == LevelClass::Unresolved).then(|| format!("crossings do not close: residual {worst:e}"));
    Ok(LevelReport { level, class, seeds, closure_residual: Some(worst), rotation, axes: Vec::new(), note })
}

/// Poincaré orbit of `seed` on the configured section, falling back to the
/// sections through `seed` along the other axes when transversality fails.
fn section_orbit(fs: &FluxSystem, seed: [f64; 3], opts: &ProbeOptions) -> Result<super::SectionOrbit, TraceError> {
    let first = poincare(&fs.b, &opts.section, seed, opts.n_crossings, &opts.trace);
    let Err(TraceError::LostTransversality { .. }) = first else { return first };
    for axis in (0..3).filter(|&a| a != opts.section.axis) {
        let sec = Section::new(axis, seed[axis]);
        match poincare(&fs.b, &sec, seed, opts.n_crossings, &opts.trace) {
            Err(TraceError::LostTransversality { .. }) => continue,
            other => return other,
        }
    }
    first
}

fn components(levels: &[LevelReport], chart: &ChartDomain) -> Vec<Component> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].level.total_cmp(&levels[b].level));
    let all_periodic = chart.axes.iter().all(|a| matches!(a, Axis::Periodic { .. })) && chart.regions.is_empty();
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        if levels[order[i]].class != LevelClass::RegularTorus {
            i += 1;
            continue;
        }
        let start = i;
        while i < order.len() && levels[order[i]].class == LevelClass::RegularTorus {
            i += 1;
        }
        let neighbors: Vec<LevelClass> =
            [start.checked_sub(1), (i < order.len()).then_some(i)].into_iter().flatten().map(|j| levels[order[j]].class).collect();
        let axes = neighbors.iter().filter(|c| **c == LevelClass::AxisCandidate).count();
        let touches_boundary = neighbors.contains(&LevelClass::Boundary);
        let whole = start == 0 && i == order.len();
        let label = match axes {
            0 if whole && all_periodic => ComponentLabel::CompactNoBoundary,
            0 => ComponentLabel::T2xI,
            1 if touches_boundary => ComponentLabel::SolidTorus,
            1 => ComponentLabel::OpenSolidTorus,
            2 => ComponentLabel::S2xS1,
            _ => ComponentLabel::Unknown,
        };
        out.push(Component { levels: order[start..i].iter().map(|&j| levels[j].level).collect(), axes, touches_boundary, label });
    }
    out
}
