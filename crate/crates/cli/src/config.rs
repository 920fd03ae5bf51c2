//! Run configuration: strict JSON, defaults filled, errors located by JSON
//! pointer.

use std::fmt;
use std::path::{Path, PathBuf};

use curlground::threshold::DEFAULT_LADDER;
use curlground::{Potential, PotentialSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub z_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Eigenpair residual.
    pub eigen: f64,
    /// Relative projected gradient of the Rayleigh quotient.
    pub sobolev: f64,
    /// Nehari-Pankov conditions on each fiber.
    pub fiber: f64,
    /// PDE residual of the ground state.
    pub ground: f64,
    /// Spectral gap gate; `null` means `1e-8·‖L‖_est`.
    pub zero_tol: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eigen: 1e-9, sobolev: 1e-8, fiber: 1e-8, ground: 1e-6, zero_tol: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolevConfig {
    pub grid: GridSpec,
    /// RMS radius pinning the dilation of the minimizer.
    pub scale: f64,
    pub random_starts: usize,
    pub max_iter: usize,
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self { grid: GridSpec { n_r: 128, n_z: 257, r_max: 8.0, z_max: 8.0 }, scale: 1.5, random_starts: 0, max_iter: 3000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftConfig {
    pub probes_r: usize,
    pub probes_theta: usize,
    pub probes_z: usize,
    /// Difference step; `null` means two cells.
    pub step: Option<f64>,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self { probes_r: 6, probes_theta: 5, probes_z: 7, step: None }
    }
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}
fn default_multistart() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("curlground-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    /// Nonlinearity exponent in (2, 6); needed by every stage after `spectrum`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_ladder")]
    pub eps_ladder: Vec<f64>,
    /// Seeded random starts added to the deterministic ones.
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub lift: LiftConfig,
    /// Directory against which relative `tabulated` paths resolve.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

pub const DEFAULTS_HELP: &str = "\
Config file (strict JSON, unknown keys rejected). Required: grid, potential.
  grid        {n_r, n_z, r_max, z_max}
  potential   {\"kind\": \"constant\", \"value\": v}
              {\"kind\": \"analytic-periodic\", \"expr\": \"cos2pi_z\" | \"well_r\", \"amplitude\": a}
              {\"kind\": \"sum\", \"terms\": [...]}
              {\"kind\": \"tabulated\", \"path\": \"file.axifield\"}
  p           exponent in (2,6); required by ground, threshold, lift, pipeline
Defaults:
  tolerances  {eigen: 1e-9, sobolev: 1e-8, fiber: 1e-8, ground: 1e-6, zero_tol: null (1e-8*|L|_est)}
  eps_ladder  [0.5, 0.35, 0.25, 0.18, 0.125, 0.09]
  multistart  1
  out         \"curlground-out\"
  seed        0
  sobolev     {grid: {n_r: 128, n_z: 257, r_max: 8, z_max: 8}, scale: 1.5, random_starts: 0, max_iter: 3000}
  lift        {probes_r: 6, probes_theta: 5, probes_z: 7, step: null (two cells)}
Environment: CURLGROUND_THREADS caps the worker pool.";

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// JSON pointer to the offending key (`""` for the document).
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.into(), message: message.into() }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses and validates a config document.
pub fn parse_value(value: Value, base_dir: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = pointer_of(e.path());
        err(&pointer, e.into_inner().to_string())
    })?;
    cfg.base_dir = base_dir.map(Path::to_path_buf);
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse_str(text: &str, base_dir: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    parse_value(value, base_dir)
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text, path.parent())
}

fn positive(pointer: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(err(pointer, format!("must be positive and finite (got {v})")))
    }
}

fn check_grid(prefix: &str, g: &GridSpec) -> Result<(), ConfigError> {
    if g.n_r < 8 {
        return Err(err(&format!("{prefix}/n_r"), "must be at least 8"));
    }
    if g.n_z < 8 {
        return Err(err(&format!("{prefix}/n_z"), "must be at least 8"));
    }
    positive(&format!("{prefix}/r_max"), g.r_max)?;
    positive(&format!("{prefix}/z_max"), g.z_max)
}

pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    check_grid("/grid", &cfg.grid)?;
    if let Some(p) = cfg.p {
        if !(p > 2.0 && p < 6.0) {
            return Err(err("/p", format!("p = {p} must lie in the open interval (2,6)")));
        }
    }
    let t = &cfg.tolerances;
    positive("/tolerances/eigen", t.eigen)?;
    positive("/tolerances/sobolev", t.sobolev)?;
    positive("/tolerances/fiber", t.fiber)?;
    positive("/tolerances/ground", t.ground)?;
    if let Some(z) = t.zero_tol {
        if !(z >= 0.0 && z.is_finite()) {
            return Err(err("/tolerances/zero_tol", "must be non-negative"));
        }
    }
    for (i, e) in cfg.eps_ladder.iter().enumerate() {
        if !(*e > 0.0 && *e <= 1.0) {
            return Err(err(&format!("/eps_ladder/{i}"), format!("{e} is outside (0, 1]")));
        }
    }
    if cfg.eps_ladder.is_empty() {
        return Err(err("/eps_ladder", "must not be empty"));
    }
    check_grid("/sobolev/grid", &cfg.sobolev.grid)?;
    positive("/sobolev/scale", cfg.sobolev.scale)?;
    if cfg.sobolev.max_iter == 0 {
        return Err(err("/sobolev/max_iter", "must be positive"));
    }
    let l = &cfg.lift;
    if l.probes_r == 0 || l.probes_theta == 0 || l.probes_z == 0 {
        return Err(err("/lift", "probe counts must be positive"));
    }
    if let Some(h) = l.step {
        positive("/lift/step", h)?;
    }
    cfg.build_potential()?;
    Ok(())
}

impl RunConfig {
    pub fn build_potential(&self) -> Result<Potential<f64>, ConfigError> {
        Potential::from_spec(&self.potential, self.base_dir.as_deref()).map_err(|e| err("/potential", e.to_string()))
    }

    /// The `p` required by a stage.
    pub fn require_p(&self) -> Result<f64, ConfigError> {
        self.p.ok_or_else(|| err("/p", "required by this command"))
    }
}
