//! Run manifests and per-stage result records.

use std::collections::BTreeMap;
use std::path::Path;

use curlground::nehari::{GroundStartReport, IterRecord};
use curlground::sobolev::{DecayFit, StartReport};
use curlground::threshold::{ScalingReport, ThresholdLadder};
use curlground::vectorfield::CurlCurlReport;
use curlground::Error;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, GridSpec, RunConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOutput {
    /// Eigenvalues nearest 0, ascending.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub dim_minus: Option<usize>,
    pub gap: Option<f64>,
    pub zero_tol: f64,
    #[serde(rename = "condition_V")]
    pub condition_v: bool,
    pub norm_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevOutput {
    pub grid: GridSpec,
    #[serde(rename = "S_hat")]
    pub s_hat: f64,
    pub identity_gap: f64,
    pub decay_exponent_fit: f64,
    pub iterations: usize,
    pub rayleigh_residual: f64,
    pub pde_residual: f64,
    pub scale_multiplier: f64,
    pub half_mass_radius: f64,
    pub decay: DecayFit,
    pub starts: Vec<StartReport>,
    pub field_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundOutput {
    pub p: f64,
    pub c: f64,
    pub nehari_residual: f64,
    pub pde_residual: f64,
    pub threshold_margin: Option<f64>,
    pub energy_identity_gap: f64,
    pub norm_floor: f64,
    /// `ε` of the concentration start, when one was resolvable.
    pub phi_eps_start: Option<f64>,
    pub iterations: usize,
    pub starts: Vec<GroundStartReport>,
    pub flags: Vec<String>,
    pub history: Vec<IterRecord>,
    pub field_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportRow {
    pub q: f64,
    pub vector: f64,
    pub scalar: f64,
    pub rel_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftOutput {
    pub probes: usize,
    pub step: f64,
    /// Max `|∇·U|` by central differences.
    pub divergence: f64,
    pub curlcurl: CurlCurlReport,
    /// Nodal scalar residual of the same field.
    pub pde_residual: f64,
    pub curlcurl_ratio: f64,
    pub energy_vector: f64,
    pub energy_scalar: f64,
    pub energy_rel_gap: f64,
    pub norm_transport: Vec<TransportRow>,
    pub csv_file: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutputs {
    pub spectrum: Option<SpectrumOutput>,
    pub sobolev: Option<SobolevOutput>,
    pub ground: Option<GroundOutput>,
    pub lemma22: Option<ScalingReport>,
    pub threshold: Option<ThresholdLadder>,
    pub lift: Option<LiftOutput>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    ConditionViolated,
    RegimeGate,
    NumericFailure,
    Resolution,
    NoFiberMax,
    InvalidArgument,
    Format,
    Io,
    Config,
}

impl ErrorKind {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::ConditionViolated { .. } => Self::ConditionViolated,
            Error::RegimeGate { .. } => Self::RegimeGate,
            Error::NumericFailure { .. } => Self::NumericFailure,
            Error::Resolution(_) => Self::Resolution,
            Error::NoFiberMax(_) => Self::NoFiberMax,
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::Format(_) => Self::Format,
            Error::Io(_) => Self::Io,
        }
    }

    /// 1 for hypothesis violations, 2 for numeric trouble, 3 for bad input.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::ConditionViolated | Self::RegimeGate => 1,
            Self::NumericFailure | Self::Resolution | Self::NoFiberMax => 2,
            Self::InvalidArgument | Self::Format | Self::Io | Self::Config => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
    /// JSON pointer for config errors.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pointer: Option<String>,
}

impl StageError {
    pub fn from_core(stage: &str, e: &Error) -> Self {
        Self { stage: stage.into(), kind: ErrorKind::of(e), message: e.to_string(), pointer: None }
    }

    pub fn from_config(stage: &str, e: &ConfigError) -> Self {
        Self { stage: stage.into(), kind: ErrorKind::Config, message: e.message.clone(), pointer: Some(e.pointer.clone()) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub exit_code: i32,
    /// Report checks that ran but did not hold.
    pub failures: Vec<String>,
    pub error: Option<StageError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub stages: StageOutputs,
    /// Seconds per stage.
    pub wall_times: BTreeMap<String, f64>,
    pub summary: Summary,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.base_dir = None;
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            stages: StageOutputs::default(),
            wall_times: BTreeMap::new(),
            summary: Summary { pass: true, exit_code: 0, failures: Vec::new(), error: None },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn write_manifest(m: &RunManifest, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, m.to_json() + "\n")
}

pub fn read_manifest(path: &Path) -> std::io::Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    RunManifest::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
