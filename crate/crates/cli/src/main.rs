//! Command-line front end for fluxsym.
//!
//! Every subcommand reads an optional JSON config, applies flag overrides and
//! writes `report.json` (plus CSVs) to the output directory. Exit codes: 0 on
//! PASS, 2 on a FAIL verdict, 3 on configuration errors, 4 on numerical errors.

mod config;
mod ops;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{EtaRef, RunConfig, SystemRef};
use fluxsym::{Grid, Section, SystemSpec, Verdict};
use ops::CliError;

#[derive(Parser)]
#[command(name = "fluxsym", version, about = "Conformal symmetries of flux systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List catalog entries, export one, or check its expected verdicts.
    Catalog(Common),
    /// Check the flux-system axioms on a grid.
    Verify(Common),
    /// Build the symmetry u from an adapted 1-form and certify it.
    Symmetry(Common),
    /// Integrate field lines from each seed.
    Trace(Common),
    /// Record Poincaré section crossings.
    Section(Common),
    /// Estimate rotation numbers of section maps.
    Rotation(Common),
    /// Classify levels of the first integral.
    Probe(Common),
    /// Build flux coordinates on invariant tori.
    Coords(Common),
    /// Locate a magnetic axis and optionally check near-axis coordinates.
    Axis(Common),
    /// Compare η-integrals over two closed orbits.
    Obstruct(Common),
    /// Solve the cohomological equation on T².
    Cohomology(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Catalog(c) => ("catalog", c),
            Command::Verify(c) => ("verify", c),
            Command::Symmetry(c) => ("symmetry", c),
            Command::Trace(c) => ("trace", c),
            Command::Section(c) => ("section", c),
            Command::Rotation(c) => ("rotation", c),
            Command::Probe(c) => ("probe", c),
            Command::Coords(c) => ("coords", c),
            Command::Axis(c) => ("axis", c),
            Command::Obstruct(c) => ("obstruct", c),
            Command::Cohomology(c) => ("cohomology", c),
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog id or inline system JSON.
    #[arg(long)]
    system: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "fluxsym-out")]
    out: PathBuf,
    /// Catalog 1-form name, `builtin`, or three comma-separated components.
    #[arg(long)]
    eta: Option<String>,
    /// Uniform grid resolution per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed point `x,y,z` (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<String>,
    /// Level of the first integral (repeatable).
    #[arg(long = "level", allow_negative_numbers = true)]
    levels: Vec<f64>,
    /// Section plane `AXIS=VALUE`.
    #[arg(long)]
    section: Option<String>,
    #[arg(long)]
    crossings: Option<usize>,
    /// Integration time for `trace`.
    #[arg(long)]
    time: Option<f64>,
    /// Axis guess `x,y,z`.
    #[arg(long)]
    guess: Option<String>,
    /// Evaluate expected verdicts (`catalog`).
    #[arg(long)]
    check: bool,
}

fn triple(s: &str) -> Result<[f64; 3], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("point {s:?}: {e}")))?;
    v.try_into().map_err(|_| CliError::Config(format!("point {s:?} needs three components")))
}

fn apply_flags(cfg: &mut RunConfig, c: &Common) -> Result<(), CliError> {
    if let Some(s) = &c.system {
        let t = s.trim_start();
        cfg.system = Some(if t.starts_with('{') {
            let spec: SystemSpec = serde_json::from_str(t).map_err(|e| CliError::Config(format!("--system: {e}")))?;
            SystemRef::Inline(Box::new(spec))
        } else {
            SystemRef::Id(s.clone())
        });
    }
    if let Some(e) = &c.eta {
        let parts: Vec<String> = e.split(',').map(|t| t.trim().to_owned()).collect();
        cfg.eta = Some(match <[String; 3]>::try_from(parts) {
            Ok(comps) => EtaRef::Comps(comps),
            Err(_) => EtaRef::Name(e.clone()),
        });
    }
    if let Some(n) = c.grid {
        if n < 2 {
            return Err(CliError::Config("--grid needs at least 2 points".into()));
        }
        cfg.grid = Some(Grid::uniform(n));
    }
    if !c.seeds.is_empty() {
        cfg.seeds = c.seeds.iter().map(|s| triple(s)).collect::<Result<_, _>>()?;
    }
    if !c.levels.is_empty() {
        cfg.levels = c.levels.clone();
    }
    if let Some(s) = &c.section {
        let (a, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--section {s:?}: expected AXIS=VALUE")))?;
        let axis = a.trim().parse::<usize>().map_err(|e| CliError::Config(format!("--section axis: {e}")))?;
        let value = v.trim().parse::<f64>().map_err(|e| CliError::Config(format!("--section value: {e}")))?;
        if axis > 2 {
            return Err(CliError::Config("--section axis must be 0, 1 or 2".into()));
        }
        cfg.section = Some(Section::new(axis, value));
    }
    if let Some(n) = c.crossings {
        cfg.n_crossings = Some(n);
    }
    if let Some(t) = c.time {
        cfg.t_final = Some(t);
    }
    if let Some(g) = &c.guess {
        cfg.axis_guess = Some(triple(g)?);
    }
    cfg.check |= c.check;
    Ok(())
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(CliError::Config)?
        }
        None => RunConfig::empty(),
    };
    apply_flags(&mut cfg, c)?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Numerical(format!("{}: {e}", path.display())))
}

fn report(op: &str, cfg: &Value, verdict: &str, payload: Value, files: &[String], error: Option<&CliError>) -> Value {
    let mut r = json!({
        "schema": config::SCHEMA,
        "tool": {"name": "fluxsym", "version": env!("CARGO_PKG_VERSION")},
        "operation": op,
        "verdict": verdict,
        "config": cfg,
        "payload": payload,
        "files": files,
    });
    if let Some(e) = error {
        r["error"] = json!({"kind": e.kind(), "message": e.to_string()});
    }
    r
}

fn execute(op: &str, c: &Common) -> Result<i32, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let cfg = load_config(c)?;
    let out = cfg.output.as_ref().map(PathBuf::from).unwrap_or_else(|| c.out.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let echo = serde_json::to_value(&cfg).expect("config serializes");

    let (verdict, payload, names, err) = match ops::run(op, &cfg) {
        Ok(o) => {
            let mut names = Vec::new();
            for (name, text) in &o.files {
                write(&out.join(name), text)?;
                names.push(name.clone());
            }
            (o.verdict, o.payload, names, None)
        }
        Err(e) => (Verdict::Fail, Value::Null, Vec::new(), Some(e)),
    };
    let label = match &err {
        Some(CliError::Verdict(_)) | None => if verdict.passed() { "PASS" } else { "FAIL" },
        Some(_) => "ERROR",
    };
    let r = report(op, &echo, label, payload, &names, err.as_ref());
    let text = serde_json::to_string_pretty(&r).expect("report serializes") + "\n";
    write(&out.join("report.json"), &text)?;
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = json!({
        "started_unix": secs(started),
        "elapsed_s": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    write(&out.join("report.meta.json"), &(serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n"))?;

    match err {
        Some(e) => {
            eprintln!("fluxsym {op}: {e}");
            Ok(e.exit_code())
        }
        None => {
            println!("{op}: {label}  ({})", out.join("report.json").display());
            Ok(if verdict.passed() { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("FLUXSYM_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("fluxsym: FLUXSYM_THREADS must be a positive integer");
                return ExitCode::from(3);
            }
        }
    }
    let (op, common) = cli.command.parts();
    let code = execute(op, common).unwrap_or_else(|e| {
        eprintln!("fluxsym {op}: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
