//! Worked flux systems with their known adapted forms, symmetries and the
//! verdicts each check is expected to return.

mod entries;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coords::{near_axis_check, rectify_torus, AreaAngleChart, CoordsError, IdentityChart, NearAxisChart, NearAxisOptions, RectifyOptions};
use crate::expr::{ChartDomain, ExprError, ScalarField};
use crate::flux::{
    check_adapted, AdaptedForm, construct_symmetry, forward_noether, reeb_obstruction, validate_flux_system, ClosedOrbit, FluxError, FluxSystem, Tolerances,
    Verdict,
};
use crate::geom::{apply, d, grid_residual, Grid, KForm, VecField};
use crate::trace::{flow_map, poincare, probe_toroidal_region, refine_axis, ProbeOptions, Section, TraceError, TraceOptions};

pub use entries::IDS;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown catalog id {0:?}")]
    UnknownId(String),
    #[error("entry has no {kind} named {name:?}")]
    UnknownName { kind: &'static str, name: String },
    #[error("invalid system spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Coords(#[from] CoordsError),
}

impl From<crate::geom::GeomError> for CatalogError {
    fn from(e: crate::geom::GeomError) -> Self {
        CatalogError::Flux(FluxError::Geom(e))
    }
}

fn one() -> String {
    "1".to_owned()
}

/// A flux system written as expressions. `ν` is either `dψ` (give `psi`) or
/// an explicit 1-form `nu`; when both are given they must agree. `mu` is the
/// density of `μ` against the coordinate volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub chart: ChartDomain,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "B")]
    pub b: [String; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<[String; 3]>,
    #[serde(default = "one")]
    pub mu: String,
}

impl SystemSpec {
    pub fn scalar(&self, src: &str) -> Result<ScalarField, CatalogError> {
        Ok(ScalarField::parse(src, &self.chart, &self.params)?)
    }

    pub fn vector(&self, srcs: &[String; 3]) -> Result<VecField, CatalogError> {
        let [a, b, c] = srcs;
        Ok(VecField::parse([a.as_str(), b.as_str(), c.as_str()], self.chart_arc(), &self.params)?)
    }

    pub fn one_form(&self, srcs: &[String; 3]) -> Result<KForm, CatalogError> {
        let refs: Vec<&str> = srcs.iter().map(String::as_str).collect();
        Ok(KForm::parse(1, &refs, self.chart_arc(), &self.params)?)
    }

    fn chart_arc(&self) -> std::sync::Arc<ChartDomain> {
        std::sync::Arc::new(self.chart.clone())
    }

    /// Parsed `(B, ν, μ, ψ)` without validation.
    pub fn parts(&self) -> Result<(VecField, KForm, KForm, Option<ScalarField>), CatalogError> {
        self.chart.check()?;
        let b = self.vector(&self.b)?;
        let chart = b.chart_arc().clone();
        let psi = self.psi.as_deref().map(|s| self.scalar(s)).transpose()?;
        let nu = match (&self.nu, &psi) {
            (Some(n), _) => self.one_form(n)?,
            (None, Some(p)) => d(&KForm::scalar(p.clone(), chart.clone()))?,
            (None, None) => return Err(CatalogError::Spec("one of psi or nu is required".into())),
        };
        let mu = KForm::volume(self.scalar(&self.mu)?, chart);
        Ok((b, nu, mu, psi))
    }

    /// Parse and validate on `grid`.
    pub fn build(&self, grid: &Grid, tol: &Tolerances) -> Result<FluxSystem, CatalogError> {
        let (b, nu, mu, psi) = self.parts()?;
        Ok(validate_flux_system(b, nu, mu, psi, grid, tol)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedForm {
    pub name: String,
    pub comps: [String; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A known (conformal) symmetry `u` of `B/f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSymmetry {
    pub name: String,
    pub comps: [String; 3],
    #[serde(default = "one")]
    pub f: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NearAxisChartSpec {
    Identity { center: [f64; 2] },
    AreaAngle { center: [f64; 2], psi0: f64, slope: f64 },
}

/// One reproducible check. Outcomes are verdict strings: `PASS`/`FAIL`,
/// an obstruction verdict, a level class, or the name of the error raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Validate,
    CheckAdapted { eta: String },
    ConstructSymmetry { eta: String },
    /// `ι_u ι_B μ` against `dψ` for the given `ψ`, to `1e-10`.
    ForwardNoether { u: String, psi: String },
    /// `sup |η(u)| < 1e-12`.
    Annihilates { eta: String, u: String },
    /// Periodic orbits through the seeds, closed by one return to the
    /// section `x_axis = seed[axis]`.
    Obstruction { eta: String, seeds: [[f64; 3]; 2], section_axis: usize },
    ProbeLevel { level: f64, section_axis: usize },
    Rectify { eta: String, seed: [f64; 3], section_axis: usize },
    NearAxis { guess: [f64; 3], section_axis: usize, chart: NearAxisChartSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub check: Check,
    pub verdict: String,
}

/// Serializable part of an entry; round-trips through JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    pub id: String,
    pub title: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub eta: Vec<NamedForm>,
    #[serde(default)]
    pub symmetries: Vec<NamedSymmetry>,
    #[serde(default)]
    pub expected: Vec<Expected>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// A catalog spec with its validated system.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub spec: CatalogSpec,
    pub system: FluxSystem,
}

/// Grid used to validate entries on load.
pub fn build_grid() -> Grid {
    Grid::uniform(17)
}

pub fn spec(id: &str) -> Result<CatalogSpec, CatalogError> {
    entries::spec(id).ok_or_else(|| CatalogError::UnknownId(id.to_owned()))
}

pub fn load(id: &str) -> Result<CatalogEntry, CatalogError> {
    CatalogEntry::from_spec(spec(id)?)
}

pub fn expected_verdicts(id: &str) -> Result<Vec<Expected>, CatalogError> {
    Ok(spec(id)?.expected)
}

impl CatalogEntry {
    pub fn from_spec(spec: CatalogSpec) -> Result<Self, CatalogError> {
        let system = spec.system.build(&build_grid(), &Tolerances::default())?;
        Ok(Self { spec, system })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn eta(&self, name: &str) -> Result<KForm, CatalogError> {
        let f = self.spec.eta.iter().find(|e| e.name == name).ok_or_else(|| CatalogError::UnknownName { kind: "eta", name: name.to_owned() })?;
        self.spec.system.one_form(&f.comps)
    }

    /// The symmetry `u` and its conformal factor `f`.
    pub fn symmetry(&self, name: &str) -> Result<(VecField, ScalarField), CatalogError> {
        let s = self
            .spec
            .symmetries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CatalogError::UnknownName { kind: "symmetry", name: name.to_owned() })?;
        Ok((self.spec.system.vector(&s.comps)?, self.spec.system.scalar(&s.f)?))
    }

    /// Run one check on `grid` and return its outcome string.
    pub fn evaluate(&self, check: &Check, grid: &Grid) -> Result<String, CatalogError> {
        let fs = &self.system;
        let tol = Tolerances::default();
        let pass = |ok: bool| verdict_str(Verdict::from_bool(ok));
        Ok(match check {
            Check::Validate => match self.spec.system.build(grid, &tol) {
                Ok(_) => pass(true),
                Err(CatalogError::Flux(FluxError::AxiomViolation { .. })) => pass(false),
                Err(e) => return Err(e),
            },
            Check::CheckAdapted { eta } => match check_adapted(fs, &self.eta(eta)?, grid, &tol) {
                Ok(_) => pass(true),
                Err(FluxError::NotAdapted { .. }) => pass(false),
                Err(e) => return Err(e.into()),
            },
            Check::ConstructSymmetry { eta } => {
                let af = check_adapted(fs, &self.eta(eta)?, grid, &tol)?;
                verdict_str(construct_symmetry(fs, &af, grid, &tol)?.verdict)
            }
            Check::ForwardNoether { u, psi } => {
                let (u, f) = self.symmetry(u)?;
                let rep = forward_noether(&fs.mu, &fs.b, &u, &f, grid, &tol)?;
                let dpsi = d(&KForm::scalar(self.spec.system.scalar(psi)?, fs.chart_arc().clone()))?;
                pass(grid_residual(&rep.nu.sub(&dpsi), grid)?.value < 1e-10)
            }
            Check::Annihilates { eta, u } => {
                let (u, _) = self.symmetry(u)?;
                let eu = apply(&self.eta(eta)?, &u)?;
                pass(grid.sup(fs.chart(), |p| Ok(eu.value(p)?.abs()))?.value < 1e-12)
            }
            Check::Obstruction { eta, seeds, section_axis } => {
                let o0 = closed_orbit(fs, seeds[0], *section_axis, 128)?;
                let o1 = closed_orbit(fs, seeds[1], *section_axis, 128)?;
                let rep = reeb_obstruction(fs, &self.eta(eta)?, &o0, &o1, 1e-8)?;
                serde_json::to_value(rep.verdict).expect("enum").as_str().expect("string").to_owned()
            }
            Check::ProbeLevel { level, section_axis } => {
                let mut opts = ProbeOptions::new(Section::new(*section_axis, 0.0));
                opts.seeds_per_level = 1;
                let r = probe_toroidal_region(fs, &[*level], &opts)?;
                serde_json::to_value(r.levels[0].class).expect("enum").as_str().expect("string").to_owned()
            }
            Check::Rectify { eta, seed, section_axis } => {
                // η(B) > 0 is only needed near the torus
                let af = AdaptedForm::unchecked(fs, self.eta(eta)?)?;
                match rectify_torus(fs, &af, *seed, &RectifyOptions::new(Section::new(*section_axis, seed[*section_axis]))) {
                    Ok(c) => verdict_str(c.verdict()),
                    Err(CoordsError::SmallDivisor { .. }) => "SmallDivisor".to_owned(),
                    Err(e) => return Err(e.into()),
                }
            }
            Check::NearAxis { guess, section_axis, chart } => {
                let psi = fs.psi.as_ref().ok_or(FluxError::MissingPsi)?;
                let axis = refine_axis(&fs.b, psi, *guess, &Section::new(*section_axis, guess[*section_axis]), &TraceOptions::tight())?;
                let chart: Box<dyn NearAxisChart> = match chart {
                    NearAxisChartSpec::Identity { center } => Box::new(IdentityChart { center: *center }),
                    NearAxisChartSpec::AreaAngle { center, psi0, slope } => Box::new(AreaAngleChart::new(fs, *center, *psi0, *slope)?),
                };
                match near_axis_check(fs, &axis, chart.as_ref(), &NearAxisOptions::default()) {
                    Ok(r) => verdict_str(r.verdict),
                    Err(CoordsError::AxisNotElliptic(_)) => "AxisNotElliptic".to_owned(),
                    Err(e) => return Err(e.into()),
                }
            }
        })
    }
}

fn verdict_str(v: Verdict) -> String {
    serde_json::to_value(v).expect("enum").as_str().expect("string").to_owned()
}

/// The periodic orbit through `seed`, sampled uniformly in time over one
/// return to the section through `seed`.
pub fn closed_orbit(fs: &FluxSystem, seed: [f64; 3], section_axis: usize, n: usize) -> Result<ClosedOrbit, CatalogError> {
    let opts = TraceOptions::tight();
    let orbit = poincare(&fs.b, &Section::new(section_axis, seed[section_axis]), seed, 1, &opts)?;
    let period = orbit.crossings[0].t;
    let points = (0..n).map(|k| flow_map(&fs.b, seed, period * k as f64 / n as f64, &opts)).collect::<Result<Vec<_>, _>>()?;
    let end = flow_map(&fs.b, seed, period, &opts)?;
    Ok(ClosedOrbit { points, period, end })
}
