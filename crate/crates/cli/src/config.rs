use serde::{Deserialize, Serialize};

use fluxsym::catalog::NearAxisChartSpec;
use fluxsym::coords::{HamadaOptions, NearAxisOptions};
use fluxsym::{FourierSeries2, Grid, Section, SystemSpec, Tolerances, TraceOptions};

pub const SCHEMA: &str = "fluxsym/1";

/// A catalog id or an inline system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Id(String),
    Inline(Box<SystemSpec>),
}

/// A named catalog 1-form (`builtin` picks the entry's first), or explicit
/// components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaRef {
    Name(String),
    Comps([String; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearAxisBlock {
    pub chart: NearAxisChartSpec,
    #[serde(default)]
    pub options: NearAxisOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohomologyBlock {
    pub omega: [f64; 2],
    pub h: FourierSeries2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Everything a run needs. Blocks not used by the chosen subcommand are
/// ignored but still echoed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_crossings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceOptions>,
    /// Section-angle center for rotation numbers and rectification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Conjugacy truncation for rectification.
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_seeds: Option<[[f64; 3]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_guess: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_axis: Option<NearAxisBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamada: Option<HamadaOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohomology: Option<CohomologyBlock>,
    /// `catalog`: evaluate the entry's expected verdicts.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub check: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RunConfig {
    pub fn empty() -> Self {
        Self {
            schema: SCHEMA.to_owned(),
            system: None,
            grid: None,
            tolerances: None,
            eta: None,
            seeds: Vec::new(),
            levels: Vec::new(),
            section: None,
            n_crossings: None,
            t_final: None,
            trace: None,
            center: None,
            k: None,
            orbit_seeds: None,
            axis_guess: None,
            near_axis: None,
            hamada: None,
            cohomology: None,
            check: false,
            output: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        if cfg.schema != SCHEMA {
            return Err(format!("config: schema {:?}, expected {SCHEMA:?}", cfg.schema));
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Grid {
        self.grid.clone().unwrap_or_default()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_default()
    }

    pub fn trace_options(&self) -> TraceOptions {
        self.trace.clone().unwrap_or_else(TraceOptions::tight)
    }
}
