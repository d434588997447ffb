use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use fluxsym::catalog::{self, closed_orbit, CatalogEntry, CatalogError, NearAxisChartSpec};
use fluxsym::coords::{
    hamada_check, near_axis_check, rectify_band, AreaAngleChart, CoordsError, IdentityChart, NearAxisChart, RectifiedBand, RectifyOptions,
};
use fluxsym::flux::{axiom_report, reeb_obstruction, FluxError};
use fluxsym::torusdyn::{solve_cohomological, DEFAULT_DELTA};
use fluxsym::trace::{closure_fit, integrate, poincare, probe_toroidal_region, refine_axis, rotation_number, ProbeOptions};
use fluxsym::{check_adapted, construct_symmetry, AdaptedForm, FluxSystem, FrequencyVector, KForm, Section, TorusError, TraceError, Verdict};

use crate::config::{EtaRef, RunConfig, SystemRef};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Verdict(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verdict(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Verdict(_) => "verdict",
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Flux(f) => f.into(),
            CatalogError::Trace(t) => t.into(),
            CatalogError::Coords(c) => c.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<FluxError> for CliError {
    fn from(e: FluxError) -> Self {
        match e {
            FluxError::AxiomViolation { .. } | FluxError::NotAdapted { .. } | FluxError::Refused(_) => CliError::Verdict(e.to_string()),
            FluxError::MissingPsi | FluxError::Geom(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::MissingPsi | TraceError::Expr(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CoordsError> for CliError {
    fn from(e: CoordsError) -> Self {
        match e {
            CoordsError::MissingPsi | CoordsError::Expr(_) | CoordsError::Geom(_) => CliError::Config(e.to_string()),
            CoordsError::AxisNotElliptic(_) => CliError::Verdict(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TorusError> for CliError {
    fn from(e: TorusError) -> Self {
        match e {
            TorusError::InvalidInput(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

/// Result of one subcommand: verdict, JSON payload and CSV files.
pub struct Outcome {
    pub verdict: Verdict,
    pub payload: Value,
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn new(verdict: Verdict, payload: Value) -> Self {
        Self { verdict, payload, files: Vec::new() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// A resolved system: catalog entry (if any) and the validated triple.
struct Resolved {
    id: String,
    entry: Option<CatalogEntry>,
    fs: FluxSystem,
}

fn system_ref(cfg: &RunConfig) -> Result<&SystemRef, CliError> {
    cfg.system.as_ref().ok_or_else(|| CliError::Config("no system given".into()))
}

fn resolve(cfg: &RunConfig) -> Result<Resolved, CliError> {
    match system_ref(cfg)? {
        SystemRef::Id(id) => {
            let entry = catalog::load(id)?;
            Ok(Resolved { id: id.clone(), fs: entry.system.clone(), entry: Some(entry) })
        }
        SystemRef::Inline(spec) => {
            let fs = spec.build(&cfg.grid(), &cfg.tolerances())?;
            Ok(Resolved { id: "inline".into(), entry: None, fs })
        }
    }
}

fn eta(cfg: &RunConfig, r: &Resolved) -> Result<KForm, CliError> {
    let eref = cfg.eta.as_ref().ok_or_else(|| CliError::Config("no eta given".into()))?;
    match (eref, &r.entry) {
        (EtaRef::Comps(c), Some(e)) => Ok(e.spec.system.one_form(c)?),
        (EtaRef::Comps(c), None) => match system_ref(cfg)? {
            SystemRef::Inline(s) => Ok(s.one_form(c)?),
            SystemRef::Id(_) => unreachable!("catalog ids resolve to entries"),
        },
        (EtaRef::Name(n), Some(e)) => {
            let name = if n == "builtin" {
                e.spec.eta.first().map(|f| f.name.clone()).ok_or_else(|| CliError::Config(format!("{} has no builtin eta", e.id())))?
            } else {
                n.clone()
            };
            Ok(e.eta(&name)?)
        }
        (EtaRef::Name(n), None) => Err(CliError::Config(format!("eta {n:?} names a catalog form, but the system is inline"))),
    }
}

fn section(cfg: &RunConfig, default_axis: usize) -> Section {
    cfg.section.clone().unwrap_or_else(|| Section::new(default_axis, 0.0))
}

fn need_seeds(cfg: &RunConfig) -> Result<&[[f64; 3]], CliError> {
    if cfg.seeds.is_empty() {
        Err(CliError::Config("no seeds given".into()))
    } else {
        Ok(&cfg.seeds)
    }
}

pub fn run(op: &str, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match op {
        "catalog" => run_catalog(cfg),
        "verify" => run_verify(cfg),
        "symmetry" => run_symmetry(cfg),
        "trace" => run_trace(cfg),
        "section" => run_section(cfg),
        "rotation" => run_rotation(cfg),
        "probe" => run_probe(cfg),
        "coords" => run_coords(cfg),
        "axis" => run_axis(cfg),
        "obstruct" => run_obstruct(cfg),
        "cohomology" => run_cohomology(cfg),
        _ => Err(CliError::Config(format!("unknown subcommand {op:?}"))),
    }
}

fn run_catalog(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let id = match &cfg.system {
        None => {
            let list: Vec<Value> = catalog::IDS
                .iter()
                .map(|id| catalog::spec(id).map(|s| json!({"id": s.id, "title": s.title})))
                .collect::<Result<_, _>>()?;
            return Ok(Outcome::new(Verdict::Pass, json!({ "entries": list })));
        }
        Some(SystemRef::Id(id)) => id,
        Some(SystemRef::Inline(_)) => return Err(CliError::Config("catalog takes a catalog id".into())),
    };
    let entry = catalog::load(id)?;
    let mut payload = json!({ "entry": to_value(&entry.spec) });
    let mut verdict = Verdict::Pass;
    if cfg.check {
        let grid = cfg.grid.clone().unwrap_or_else(|| fluxsym::Grid::uniform(9));
        let mut rows = Vec::new();
        for e in &entry.spec.expected {
            let got = entry.evaluate(&e.check, &grid)?;
            let ok = got == e.verdict;
            if !ok {
                verdict = Verdict::Fail;
            }
            rows.push(json!({"check": to_value(&e.check), "expected": e.verdict, "got": got, "verdict": Verdict::from_bool(ok)}));
        }
        payload["checks"] = Value::Array(rows);
    }
    Ok(Outcome::new(verdict, payload))
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = match system_ref(cfg)? {
        SystemRef::Id(id) => catalog::spec(id)?.system,
        SystemRef::Inline(s) => (**s).clone(),
    };
    let (b, nu, mu, psi) = spec.parts()?;
    let tol = cfg.tolerances();
    let rep = axiom_report(&b, &nu, &mu, psi.as_ref(), &cfg.grid(), &tol)?;
    let violation = rep.first_violation(tol.axiom);
    let mut payload = json!({
        "residuals": rep.residual_map(),
        "density_min": rep.density_min.value,
        "tangency": rep.tangency,
        "tangential": rep.tangential,
    });
    if rep.density_min.value <= 0.0 {
        payload["violation"] = json!({"axiom": "mu_positive", "value": rep.density_min.value, "worst_point": rep.density_min.point});
        return Ok(Outcome::new(Verdict::Fail, payload));
    }
    if let Some((which, e)) = violation {
        payload["violation"] = json!({"axiom": which.key(), "value": e.value, "worst_point": e.point});
    }
    Ok(Outcome::new(Verdict::from_bool(violation.is_none()), payload))
}

fn run_symmetry(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let eta = eta(cfg, &r)?;
    let grid = cfg.grid();
    let tol = cfg.tolerances();
    let af = match check_adapted(&r.fs, &eta, &grid, &tol) {
        Ok(af) => af,
        Err(e @ FluxError::NotAdapted { .. }) => {
            return Ok(Outcome::new(Verdict::Fail, json!({"not_adapted": e.to_string()})));
        }
        Err(e) => return Err(e.into()),
    };
    let cert = construct_symmetry(&r.fs, &af, &grid, &tol)?;
    let mut payload = to_value(&cert.summary(&r.id));
    payload["eta_b_min"] = json!(af.eta_b_min.value);
    payload["adapt_residual"] = json!(af.adapt_residual.value);
    Ok(Outcome::new(cert.verdict, payload))
}

fn run_trace(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let t = cfg.t_final.unwrap_or(10.0);
    let opts = cfg.trace_options();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (i, &seed) in need_seeds(cfg)?.iter().enumerate() {
        let tr = integrate(&r.fs.b, seed, t, r.fs.psi.as_ref(), &opts)?;
        rows.push(json!({"seed": seed, "end": tr.end(), "stats": to_value(&tr.stats), "psi_drift": tr.psi_drift}));
        files.push((format!("trajectory_{i}.csv"), tr.to_csv()));
    }
    Ok(Outcome { verdict: Verdict::Pass, payload: json!({"t_final": t, "trajectories": rows}), files })
}

fn run_section(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let sec = section(cfg, 2);
    let n = cfg.n_crossings.unwrap_or(256);
    let opts = cfg.trace_options();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (i, &seed) in need_seeds(cfg)?.iter().enumerate() {
        let orbit = poincare(&r.fs.b, &sec, seed, n, &opts)?;
        let fit = closure_fit(&orbit, 16).ok();
        rows.push(json!({"seed": seed, "crossings": orbit.crossings.len(), "max_residual": orbit.max_residual(), "closure": to_value(&fit)}));
        files.push((format!("section_{i}.csv"), orbit.to_csv()));
    }
    Ok(Outcome { verdict: Verdict::Pass, payload: json!({"section": to_value(&sec), "orbits": rows}), files })
}

fn run_rotation(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let sec = section(cfg, 2);
    let n = cfg.n_crossings.unwrap_or(512);
    let opts = cfg.trace_options();
    let mut rows = Vec::new();
    for &seed in need_seeds(cfg)? {
        let orbit = poincare(&r.fs.b, &sec, seed, n, &opts)?;
        let est = rotation_number(&orbit, cfg.center)?;
        rows.push(json!({"seed": seed, "rotation": to_value(&est)}));
    }
    Ok(Outcome::new(Verdict::Pass, json!({"section": to_value(&sec), "rotations": rows})))
}

fn run_probe(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    if cfg.levels.is_empty() {
        return Err(CliError::Config("no levels given".into()));
    }
    let mut opts = ProbeOptions::new(section(cfg, 2));
    if let Some(t) = &cfg.trace {
        opts.trace = t.clone();
    }
    if let Some(n) = cfg.n_crossings {
        opts.n_crossings = n;
    }
    let report = probe_toroidal_region(&r.fs, &cfg.levels, &opts)?;
    Ok(Outcome::new(Verdict::Pass, to_value(&report)))
}

fn run_coords(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let eta = eta(cfg, &r)?;
    let seeds = need_seeds(cfg)?;
    let mut opts = RectifyOptions::new(section(cfg, 2));
    opts.center = cfg.center;
    if let Some(n) = cfg.n_crossings {
        opts.n_crossings = n;
    }
    if let Some(k) = cfg.k {
        opts.k = k;
    }
    if let Some(t) = &cfg.trace {
        opts.trace = t.clone();
    }
    let grid = cfg.grid();
    let tol = cfg.tolerances();
    // the symmetry needs η adapted on the whole grid; rectification only near each torus
    let adapted = check_adapted(&r.fs, &eta, &grid, &tol).ok();
    let af = match &adapted {
        Some(a) => a.clone(),
        None => AdaptedForm::unchecked(&r.fs, eta)?,
    };
    let charts = rectify_band(&r.fs, &af, seeds, &opts)?;
    let mut verdict = Verdict::Pass;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (i, c) in charts.iter().enumerate() {
        if !c.verdict().passed() {
            verdict = Verdict::Fail;
        }
        rows.push(json!({
            "surface_psi": c.surface_psi, "rho": c.rho, "rho_error": c.rho_error, "t_bar": c.t_bar,
            "frequencies": c.frequencies(), "residual_rect": c.residual_rect,
            "conjugacy_residual": c.conjugacy.residual, "verdict": c.verdict(),
        }));
        files.push((format!("chart_{i}.csv"), c.to_csv()));
    }
    let mut payload = json!({"charts": rows});
    if charts.len() >= 3 {
        match adapted {
            Some(af) => {
                let cert = construct_symmetry(&r.fs, &af, &grid, &tol)?;
                let band = RectifiedBand::new(&r.fs, &af, charts, opts.trace.clone());
                let h = hamada_check(&r.fs, &cert.u, &band, &cfg.hamada.clone().unwrap_or_default())?;
                if !h.verdict.passed() {
                    verdict = Verdict::Fail;
                }
                files.push(("profiles.csv".into(), h.to_csv()));
                payload["hamada"] = to_value(&h);
            }
            None => payload["hamada_skipped"] = json!("eta is not adapted on the grid, so no symmetry u is available"),
        }
    }
    Ok(Outcome { verdict, payload, files })
}

fn run_axis(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let guess = cfg.axis_guess.ok_or_else(|| CliError::Config("no axis_guess given".into()))?;
    let psi = r.fs.psi.as_ref().ok_or_else(|| CliError::Config("the system has no psi".into()))?;
    let mut sec = section(cfg, 2);
    sec.value = guess[sec.axis];
    let axis = refine_axis(&r.fs.b, psi, guess, &sec, &cfg.trace_options())?;
    let mut payload = json!({"axis": to_value(&axis)});
    let mut verdict = Verdict::Pass;
    if let Some(block) = &cfg.near_axis {
        let chart: Box<dyn NearAxisChart> = match &block.chart {
            NearAxisChartSpec::Identity { center } => Box::new(IdentityChart { center: *center }),
            NearAxisChartSpec::AreaAngle { center, psi0, slope } => Box::new(AreaAngleChart::new(&r.fs, *center, *psi0, *slope)?),
        };
        match near_axis_check(&r.fs, &axis, chart.as_ref(), &block.options) {
            Ok(rep) => {
                verdict = rep.verdict;
                payload["near_axis"] = to_value(&rep);
            }
            Err(e @ CoordsError::AxisNotElliptic(_)) => {
                verdict = Verdict::Fail;
                payload["near_axis_error"] = json!(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Outcome::new(verdict, payload))
}

fn run_obstruct(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = resolve(cfg)?;
    let eta = eta(cfg, &r)?;
    let seeds = cfg.orbit_seeds.ok_or_else(|| CliError::Config("no orbit_seeds given".into()))?;
    let axis = section(cfg, 2).axis;
    let o0 = closed_orbit(&r.fs, seeds[0], axis, 128)?;
    let o1 = closed_orbit(&r.fs, seeds[1], axis, 128)?;
    let rep = reeb_obstruction(&r.fs, &eta, &o0, &o1, 1e-8)?;
    let payload = json!({"obstruction": to_value(&rep), "periods": [o0.period, o1.period]});
    Ok(Outcome::new(Verdict::Pass, payload))
}

fn run_cohomology(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let block = cfg.cohomology.as_ref().ok_or_else(|| CliError::Config("no cohomology block given".into()))?;
    let h = &block.h;
    let n = (2 * h.k + 1) * (2 * h.k + 1);
    if h.re.len() != n || h.im.len() != n {
        return Err(CliError::Config(format!("h must have {n} coefficients for K = {}", h.k)));
    }
    let omega = FrequencyVector::new(block.omega, h.k.max(1));
    let sol = solve_cohomological(&omega, h, block.delta.unwrap_or(DEFAULT_DELTA))?;
    let payload = json!({"frequency": to_value(&omega), "c": sol.c, "residual": sol.residual, "g": to_value(&sol.g)});
    Ok(Outcome::new(Verdict::from_bool(sol.residual < 1e-9), payload))
}
