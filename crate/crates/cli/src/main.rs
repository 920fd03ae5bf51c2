use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curlground_cli::config::{self, ConfigError, DEFAULTS_HELP};
use curlground_cli::{run, Command, Inputs};
use serde_json::{json, Value};

/// Axisymmetric ground states of the critical curl-curl equation.
///
/// Exit codes: 0 pass, 1 hypothesis violated (condition (V) or regime gate),
/// 2 numeric failure or failing report check, 3 configuration or input error.
#[derive(Parser)]
#[command(name = "curlground", version, after_long_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalues near 0, dim E-, spectral gap and condition (V).
    Spectrum(Opts),
    /// Critical Sobolev constant and its minimizer Φ.
    Sobolev(Opts),
    /// Ground state by minimization over the Nehari-Pankov manifold.
    Ground(Opts),
    /// Scaling rates of the concentrating profiles φ_ε.
    Lemma22(Opts),
    /// Fiber maxima of J against the level Ŝ^{3/2}/3.
    Threshold(Opts),
    /// Lift a ground state to the vector field and check the curl-curl form.
    Lift(Opts),
    /// spectrum, regime gate, sobolev, ground, lemma22, threshold, lift.
    Pipeline(Opts),
}

#[derive(Args, Clone)]
#[command(after_long_help = DEFAULTS_HELP, allow_negative_numbers = true)]
struct Opts {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exponent in (2,6).
    #[arg(long)]
    p: Option<f64>,
    /// Potential as inline JSON or @file.
    #[arg(long)]
    potential: Option<String>,
    /// n_r,n_z,r_max,z_max (the Sobolev grid for `sobolev`).
    #[arg(long)]
    grid: Option<String>,
    /// Main tolerance of the stage (eigen, sobolev, ground or fiber).
    #[arg(long)]
    tol: Option<f64>,
    /// Seeded random starts.
    #[arg(long)]
    starts: Option<usize>,
    /// Precomputed Φ (AXIFIELD); needs --s-hat.
    #[arg(long)]
    phi: Option<PathBuf>,
    #[arg(long = "s-hat")]
    s_hat: Option<f64>,
    /// Precomputed ground state (AXIFIELD) for `lift`.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Comma-separated ε ladder.
    #[arg(long)]
    eps: Option<String>,
}

fn cerr(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.into(), message: message.into() }
}

fn parse_grid(s: &str) -> Result<Value, ConfigError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || cerr("/grid", format!("--grid expects n_r,n_z,r_max,z_max (got {s:?})"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let n_r: usize = parts[0].parse().map_err(|_| bad())?;
    let n_z: usize = parts[1].parse().map_err(|_| bad())?;
    let r_max: f64 = parts[2].parse().map_err(|_| bad())?;
    let z_max: f64 = parts[3].parse().map_err(|_| bad())?;
    Ok(json!({"n_r": n_r, "n_z": n_z, "r_max": r_max, "z_max": z_max}))
}

fn build_config(cmd: Command, o: &Opts) -> Result<config::RunConfig, ConfigError> {
    let (mut doc, base) = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| cerr("", format!("cannot read {}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| cerr("", format!("invalid JSON: {e}")))?;
            (v, path.parent().map(|p| p.to_path_buf()))
        }
        None => (json!({}), None),
    };
    let obj = doc.as_object_mut().ok_or_else(|| cerr("", "config must be a JSON object"))?;
    let sub = |obj: &mut serde_json::Map<String, Value>, key: &str| -> Result<serde_json::Map<String, Value>, ConfigError> {
        match obj.remove(key) {
            None => Ok(serde_json::Map::new()),
            Some(Value::Object(m)) => Ok(m),
            Some(_) => Err(cerr(&format!("/{key}"), "must be an object")),
        }
    };
    if let Some(g) = &o.grid {
        let g = parse_grid(g)?;
        if cmd == Command::Sobolev {
            let mut s = sub(obj, "sobolev")?;
            s.insert("grid".into(), g);
            obj.insert("sobolev".into(), Value::Object(s));
        } else {
            obj.insert("grid".into(), g);
        }
    }
    if cmd == Command::Sobolev {
        // the target problem is irrelevant here; fill placeholders so the
        // schema still validates
        let sg = obj.get("sobolev").and_then(|s| s.get("grid")).cloned();
        obj.entry("grid").or_insert_with(|| sg.unwrap_or(json!({"n_r": 128, "n_z": 257, "r_max": 8.0, "z_max": 8.0})));
        obj.entry("potential").or_insert_with(|| json!({"kind": "constant", "value": 0.0}));
    }
    if let Some(p) = &o.potential {
        let text = match p.strip_prefix('@') {
            Some(path) => std::fs::read_to_string(path).map_err(|e| cerr("/potential", format!("cannot read {path}: {e}")))?,
            None => p.clone(),
        };
        let v: Value = serde_json::from_str(&text).map_err(|e| cerr("/potential", format!("invalid JSON: {e}")))?;
        obj.insert("potential".into(), v);
    }
    if let Some(p) = o.p {
        obj.insert("p".into(), json!(p));
    }
    if let Some(seed) = o.seed {
        obj.insert("seed".into(), json!(seed));
    }
    if let Some(out) = &o.out {
        obj.insert("out".into(), json!(out));
    }
    if let Some(n) = o.starts {
        if cmd == Command::Sobolev {
            let mut s = sub(obj, "sobolev")?;
            s.insert("random_starts".into(), json!(n));
            obj.insert("sobolev".into(), Value::Object(s));
        } else {
            obj.insert("multistart".into(), json!(n));
        }
    }
    if let Some(tol) = o.tol {
        let key = match cmd {
            Command::Spectrum => "eigen",
            Command::Sobolev => "sobolev",
            Command::Lemma22 | Command::Threshold => "fiber",
            Command::Ground | Command::Lift | Command::Pipeline => "ground",
        };
        let mut t = sub(obj, "tolerances")?;
        t.insert(key.into(), json!(tol));
        obj.insert("tolerances".into(), Value::Object(t));
    }
    if let Some(eps) = &o.eps {
        let ladder = eps
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| cerr("/eps_ladder", format!("--eps expects comma-separated numbers (got {eps:?})")))?;
        obj.insert("eps_ladder".into(), json!(ladder));
    }
    config::parse_value(doc, base.as_deref())
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("CURLGROUND_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| cerr("", format!("CURLGROUND_THREADS must be a positive integer (got {v:?})")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| cerr("", e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("{e}");
        return ExitCode::from(3);
    }
    let (cmd, opts) = match &cli.cmd {
        Cmd::Spectrum(o) => (Command::Spectrum, o),
        Cmd::Sobolev(o) => (Command::Sobolev, o),
        Cmd::Ground(o) => (Command::Ground, o),
        Cmd::Lemma22(o) => (Command::Lemma22, o),
        Cmd::Threshold(o) => (Command::Threshold, o),
        Cmd::Lift(o) => (Command::Lift, o),
        Cmd::Pipeline(o) => (Command::Pipeline, o),
    };
    let cfg = match build_config(cmd, opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    };
    let inputs = Inputs { phi: opts.phi.clone(), s_hat: opts.s_hat, field: opts.field.clone() };
    let m = run(cmd, &cfg, &inputs);
    let s = &m.stages;
    let primary = match cmd {
        Command::Spectrum => serde_json::to_value(&s.spectrum),
        Command::Sobolev => serde_json::to_value(&s.sobolev),
        Command::Ground => serde_json::to_value(&s.ground),
        Command::Lemma22 => serde_json::to_value(&s.lemma22),
        Command::Threshold => serde_json::to_value(&s.threshold),
        Command::Lift => serde_json::to_value(&s.lift),
        Command::Pipeline => serde_json::to_value(&m.summary),
    }
    .expect("stage output serializes");
    if !primary.is_null() {
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&primary).expect("value serializes"));
    }
    if let Some(e) = &m.summary.error {
        eprintln!("{} stage failed ({:?}): {}", e.stage, e.kind, e.message);
    }
    for f in &m.summary.failures {
        eprintln!("check failed: {f}");
    }
    ExitCode::from(m.summary.exit_code as u8)
}
