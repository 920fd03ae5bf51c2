//! Stage runner shared by every subcommand.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use curlground::nehari::{self, FiberOptions, GroundOptions};
use curlground::sobolev::{self, SobolevOptions, StartKind};
use curlground::spectral::{self, EigenOptions};
use curlground::threshold::{self, make_phi_eps};
use curlground::vectorfield::{self, Vec3};
use curlground::{io, AxiGrid, EnergyParams, Error, Field64, Grid64, Operator64, OperatorHandle, Split64};
use serde::Serialize;

use crate::config::{ConfigError, GridSpec, RunConfig};
use crate::manifest::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Sobolev,
    Ground,
    Lemma22,
    Threshold,
    Lift,
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Sobolev => "sobolev",
            Self::Ground => "ground",
            Self::Lemma22 => "lemma22",
            Self::Threshold => "threshold",
            Self::Lift => "lift",
            Self::Pipeline => "pipeline",
        }
    }
}

/// Precomputed artifacts that replace upstream stages.
#[derive(Clone, Debug, Default)]
pub struct Inputs {
    /// AXIFIELD dump of Φ (needs `s_hat` too).
    pub phi: Option<PathBuf>,
    pub s_hat: Option<f64>,
    /// AXIFIELD dump of a ground state for `lift`.
    pub field: Option<PathBuf>,
}

struct Halt;

type Step<T> = Result<T, Halt>;

struct Runner<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    m: RunManifest,
    grid: Option<Arc<Grid64>>,
    op: Option<Arc<Operator64>>,
    split: Option<Arc<Split64>>,
    params: Option<EnergyParams<f64>>,
    phi: Option<(Field64, f64)>,
    ground: Option<Field64>,
    /// `Ŝ` supplied without Φ.
    s_hat: Option<f64>,
}

fn grid_of(g: &GridSpec) -> curlground::Result<Arc<Grid64>> {
    AxiGrid::shared(g.r_max, g.z_max, g.n_r, g.n_z)
}

impl<'a> Runner<'a> {
    fn fail(&mut self, err: StageError) -> Halt {
        self.m.summary.exit_code = err.kind.exit_code();
        self.m.summary.pass = false;
        self.m.summary.error = Some(err);
        Halt
    }

    fn core<T>(&mut self, stage: &str, r: curlground::Result<T>) -> Step<T> {
        r.map_err(|e| self.fail(StageError::from_core(stage, &e)))
    }

    fn config<T>(&mut self, stage: &str, r: Result<T, ConfigError>) -> Step<T> {
        r.map_err(|e| self.fail(StageError::from_config(stage, &e)))
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Step<T>) -> Step<T> {
        let t0 = Instant::now();
        let r = f(self);
        self.m.wall_times.insert(stage.into(), t0.elapsed().as_secs_f64());
        r
    }

    fn failure(&mut self, what: impl Into<String>) {
        self.m.summary.failures.push(what.into());
    }

    fn write_json<T: Serialize>(&mut self, stage: &str, name: &str, value: &T) -> Step<()> {
        let text = serde_json::to_string_pretty(value).expect("stage output serializes") + "\n";
        let r = std::fs::write(self.out.join(name), text).map_err(Error::from);
        self.core(stage, r)
    }

    fn write_text(&mut self, stage: &str, name: &str, text: &str) -> Step<()> {
        let r = std::fs::write(self.out.join(name), text).map_err(Error::from);
        self.core(stage, r)
    }

    fn target_grid(&mut self) -> Step<Arc<Grid64>> {
        if let Some(g) = &self.grid {
            return Ok(g.clone());
        }
        let g = grid_of(&self.cfg.grid);
        let g = self.core("spectrum", g)?;
        self.grid = Some(g.clone());
        Ok(g)
    }

    fn spectrum(&mut self) -> Step<()> {
        self.timed("spectrum", |s| {
            let grid = s.target_grid()?;
            let potential = s.config("spectrum", s.cfg.build_potential())?;
            let op = Arc::new(OperatorHandle::assemble(&grid, potential));
            s.op = Some(op.clone());
            let opts = EigenOptions { tol: s.cfg.tolerances.eigen, ..EigenOptions::default() };
            let k = 6.min(op.dim().saturating_sub(1)).max(1);
            let split = spectral::split_with(&op, s.cfg.tolerances.zero_tol, &opts);
            let zero_tol = s.cfg.tolerances.zero_tol.unwrap_or_else(|| spectral::default_zero_tol(&op));
            // shift-invert stalls at a singular shift; look from just above it
            let center = if split.is_ok() { 0.0 } else { 4.0 * zero_tol + 1e-9 * op.norm_estimate() };
            let mut pairs = spectral::spectrum_window_with(&op, k, center, &opts).unwrap_or_default();
            pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
            let mut out = SpectrumOutput {
                eigenvalues: pairs.iter().map(|e| e.value).collect(),
                residuals: pairs.iter().map(|e| e.residual).collect(),
                dim_minus: None,
                gap: None,
                zero_tol,
                condition_v: false,
                norm_estimate: op.norm_estimate(),
            };
            let split = match split {
                Ok(sp) => sp,
                Err(e) => {
                    s.m.stages.spectrum = Some(out.clone());
                    s.write_json("spectrum", "spectrum.json", &out)?;
                    return Err(s.fail(StageError::from_core("spectrum", &e)));
                }
            };
            out.dim_minus = Some(split.dim_minus());
            out.gap = Some(split.gap());
            out.condition_v = true;
            s.split = Some(Arc::new(split));
            s.m.stages.spectrum = Some(out.clone());
            s.write_json("spectrum", "spectrum.json", &out)
        })
    }

    fn gate(&mut self) -> Step<()> {
        let p = self.config("gate", self.cfg.require_p())?;
        let split = self.split.clone().expect("spectrum ran");
        let params = EnergyParams::new(p, split);
        let params = self.core("gate", params)?;
        self.params = Some(params);
        Ok(())
    }

    fn sobolev(&mut self) -> Step<()> {
        self.timed("sobolev", |s| {
            let sc = &s.cfg.sobolev;
            let grid = grid_of(&sc.grid);
            let grid = s.core("sobolev", grid)?;
            let mut starts = vec![StartKind::Gaussian, StartKind::AubinTalenti];
            starts.extend((0..sc.random_starts as u64).map(|k| StartKind::Random(s.cfg.seed.wrapping_add(k))));
            let opts = SobolevOptions { scale: sc.scale, tol: s.cfg.tolerances.sobolev, max_iter: sc.max_iter, starts };
            let res = sobolev::compute(&grid, &opts);
            let res = s.core("sobolev", res)?;
            let saved = io::save_axifield(&res.phi, s.out.join("phi.axifield"));
            s.core("sobolev", saved)?;
            let out = SobolevOutput {
                grid: sc.grid.clone(),
                s_hat: res.s_hat,
                identity_gap: res.identity_gap,
                decay_exponent_fit: res.decay_exponent_fit,
                iterations: res.iterations,
                rayleigh_residual: res.rayleigh_residual,
                pde_residual: res.pde_residual,
                scale_multiplier: res.scale_multiplier,
                half_mass_radius: sobolev::half_mass_radius(&res.phi),
                decay: res.decay.clone(),
                starts: res.starts.clone(),
                field_file: "phi.axifield".into(),
            };
            if res.identity_gap > 1e-6 {
                s.failure("sobolev.identity_gap");
            }
            s.phi = Some((res.phi, res.s_hat));
            s.m.stages.sobolev = Some(out.clone());
            s.write_json("sobolev", "sobolev.json", &out)
        })
    }

    /// Φ from disk when supplied, otherwise from the sobolev stage.
    fn ensure_phi(&mut self, inputs: &Inputs) -> Step<()> {
        if self.phi.is_some() {
            return Ok(());
        }
        match (&inputs.phi, inputs.s_hat) {
            (Some(path), Some(s_hat)) => {
                let phi = io::load_axifield::<f64>(path);
                let phi = self.core("sobolev", phi)?;
                self.phi = Some((phi, s_hat));
                Ok(())
            }
            (Some(_), None) => Err(self.fail(StageError::from_config("sobolev", &ConfigError { pointer: "".into(), message: "--phi needs --s-hat".into() }))),
            _ => self.sobolev(),
        }
    }

    fn ground(&mut self) -> Step<()> {
        self.timed("ground", |s| {
            let grid = s.target_grid()?;
            let params = s.params.clone().expect("gate ran");
            let mut phi_eps = None;
            let mut phi_eps_start = None;
            if let Some((phi, _)) = &s.phi {
                let mut ladder = s.cfg.eps_ladder.clone();
                ladder.sort_by(f64::total_cmp);
                for e in ladder {
                    if let Ok(f) = make_phi_eps(phi, e, &grid) {
                        phi_eps = Some(f);
                        phi_eps_start = Some(e);
                        break;
                    }
                }
            }
            let t = &s.cfg.tolerances;
            let opts = GroundOptions {
                fiber: FiberOptions { tol: t.fiber, seed: s.cfg.seed, ..FiberOptions::default() },
                tol: t.ground,
                random_starts: s.cfg.multistart,
                seed: s.cfg.seed,
                phi_eps,
                s_hat: s.phi.as_ref().map(|p| p.1).or(s.s_hat),
                ..GroundOptions::default()
            };
            let res = nehari::minimize_on_manifold(&params, &opts);
            let res = s.core("ground", res)?;
            let saved = io::save_axifield(&res.u, s.out.join("ground.axifield"));
            s.core("ground", saved)?;
            let mut csv = Vec::new();
            let w = io::write_csv(&res.u, &mut csv);
            s.core("ground", w)?;
            s.write_text("ground", "ground.csv", &String::from_utf8_lossy(&csv))?;
            for f in &res.flags {
                s.m.summary.failures.push(format!("ground.{f}"));
            }
            let out = GroundOutput {
                p: params.p(),
                c: res.c,
                nehari_residual: res.nehari_residual,
                pde_residual: res.pde_residual,
                threshold_margin: res.threshold_margin,
                energy_identity_gap: res.energy_identity_gap,
                norm_floor: res.norm_floor,
                phi_eps_start,
                iterations: res.history.len(),
                starts: res.starts.clone(),
                flags: res.flags.clone(),
                history: res.history.clone(),
                field_file: "ground.axifield".into(),
            };
            s.ground = Some(res.u);
            s.m.stages.ground = Some(out.clone());
            s.write_json("ground", "ground.json", &out)
        })
    }

    fn lemma22(&mut self) -> Step<()> {
        self.timed("lemma22", |s| {
            let (phi, s_hat) = s.phi.clone().expect("phi available");
            let split = s.split.clone().expect("spectrum ran");
            let rep = threshold::lemma22_report(&phi, s_hat, &split, &s.cfg.eps_ladder);
            let rep = s.core("lemma22", rep)?;
            for r in rep.rates.iter().filter(|r| !r.pass) {
                s.m.summary.failures.push(format!("lemma22.{}", r.name));
            }
            if !rep.l6_drift_pass {
                s.failure("lemma22.l6_drift");
            }
            s.write_text("lemma22", "lemma22.csv", &rep.csv())?;
            s.write_json("lemma22", "lemma22.json", &rep)?;
            s.m.stages.lemma22 = Some(rep);
            Ok(())
        })
    }

    fn threshold(&mut self) -> Step<()> {
        self.timed("threshold", |s| {
            let (phi, s_hat) = s.phi.clone().expect("phi available");
            let params = s.params.clone().expect("gate ran");
            let opts = FiberOptions { tol: s.cfg.tolerances.fiber, seed: s.cfg.seed, ..FiberOptions::default() };
            let lad = threshold::threshold_ladder(&params, &phi, s_hat, &s.cfg.eps_ladder, &opts);
            let lad = s.core("threshold", lad)?;
            for r in lad.reports.iter().filter(|r| r.threshold_failed) {
                s.m.summary.failures.push(format!("threshold.eps={}", r.eps));
            }
            s.write_text("threshold", "threshold.csv", &lad.csv())?;
            s.write_json("threshold", "threshold.json", &lad)?;
            s.m.stages.threshold = Some(lad);
            Ok(())
        })
    }

    fn ensure_ground(&mut self, inputs: &Inputs) -> Step<()> {
        if self.ground.is_some() {
            return Ok(());
        }
        match &inputs.field {
            Some(path) => {
                let u = io::load_axifield::<f64>(path);
                let u = self.core("lift", u)?;
                let grid = self.target_grid()?;
                if !u.grid().same_as(&grid) {
                    let e = Error::InvalidArgument(format!("{} is not on the configured grid", path.display()));
                    return Err(self.fail(StageError::from_core("lift", &e)));
                }
                let u = self.core("lift", Field64::from_values(&grid, u.into_values()))?;
                self.ground = Some(u);
                Ok(())
            }
            None => self.ground(),
        }
    }

    fn lift(&mut self) -> Step<()> {
        self.timed("lift", |s| {
            let u = s.ground.clone().expect("ground available");
            let params = s.params.clone().expect("gate ran");
            let grid = u.grid().clone();
            let lc = &s.cfg.lift;
            let probes: Vec<Vec3<f64>> = vectorfield::shell_probes(&grid, lc.probes_r, lc.probes_theta, lc.probes_z);
            let h = lc.step.unwrap_or_else(|| vectorfield::default_step(&grid));
            let sample = vectorfield::lift(&u, &probes);
            let sample = s.core("lift", sample)?;
            let mut csv = String::from("x1,x2,x3,U1,U2,U3\n");
            for (x, v) in sample.points.iter().zip(&sample.values) {
                csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e},{:e}\n", x[0], x[1], x[2], v[0], v[1], v[2]));
            }
            s.write_text("lift", "lift.csv", &csv)?;
            let div = vectorfield::divergence_residual(&u, &probes, h);
            let div = s.core("lift", div)?;
            let cc = vectorfield::curlcurl_residual(&u, params.operator().potential(), Some(params.p()), &probes, h);
            let cc = s.core("lift", cc)?;
            let pde = nehari::pde_residual(&params, &u);
            let pde = s.core("lift", pde)?;
            let en = vectorfield::energy_equivalence(&u, &params);
            let (ei, ej) = s.core("lift", en)?;
            let energy_rel_gap = (ei - ej).abs() / ej.abs().max(f64::MIN_POSITIVE);
            let mut rows = Vec::new();
            for q in [2.0, params.p(), 6.0] {
                let nt = vectorfield::norm_transport(&u, q, 0.7);
                let (a, b) = s.core("lift", nt)?;
                rows.push(TransportRow { q, vector: a, scalar: b, rel_gap: (a - b).abs() / b.abs().max(f64::MIN_POSITIVE) });
            }
            if cc.ratio() > 10.0 {
                s.failure("lift.curlcurl_ratio");
            }
            if energy_rel_gap > 1e-12 {
                s.failure("lift.energy_equivalence");
            }
            if rows.iter().any(|r| r.rel_gap > 1e-12) {
                s.failure("lift.norm_transport");
            }
            let out = LiftOutput {
                probes: probes.len(),
                step: h,
                divergence: div,
                curlcurl_ratio: cc.ratio(),
                curlcurl: cc,
                pde_residual: pde,
                energy_vector: ei,
                energy_scalar: ej,
                energy_rel_gap,
                norm_transport: rows,
                csv_file: "lift.csv".into(),
            };
            s.m.stages.lift = Some(out.clone());
            s.write_json("lift", "lift.json", &out)
        })
    }

    fn execute(&mut self, cmd: Command, inputs: &Inputs) -> Step<()> {
        use Command::*;
        if cmd == Sobolev {
            return self.sobolev();
        }
        self.spectrum()?;
        if cmd == Spectrum {
            return Ok(());
        }
        if cmd != Lemma22 || self.cfg.p.is_some() {
            self.gate()?;
        }
        match cmd {
            Ground => {
                if let Some(s_hat) = inputs.s_hat {
                    if let Some(path) = &inputs.phi {
                        let phi = io::load_axifield::<f64>(path);
                        let phi = self.core("ground", phi)?;
                        self.phi = Some((phi, s_hat));
                    }
                }
                self.s_hat = inputs.s_hat;
                self.ground()
            }
            Lemma22 => {
                self.ensure_phi(inputs)?;
                self.lemma22()
            }
            Threshold => {
                self.ensure_phi(inputs)?;
                self.threshold()
            }
            Lift => {
                self.ensure_ground(inputs)?;
                self.lift()
            }
            Pipeline => {
                self.sobolev()?;
                self.ground()?;
                self.lemma22()?;
                self.threshold()?;
                self.lift()
            }
            Spectrum | Sobolev => unreachable!(),
        }
    }
}

/// Runs the stages of `cmd`, writing per-stage files and `manifest.json`
/// into `cfg.out`. Never panics on numeric or hypothesis failures; the
/// outcome is in `summary`.
pub fn run(cmd: Command, cfg: &RunConfig, inputs: &Inputs) -> RunManifest {
    run_in(cmd, cfg, inputs, &cfg.out)
}

pub fn run_in(cmd: Command, cfg: &RunConfig, inputs: &Inputs, out: &Path) -> RunManifest {
    let mut r = Runner {
        cfg,
        out: out.to_path_buf(),
        m: RunManifest::new(cmd.name(), cfg),
        grid: None,
        op: None,
        split: None,
        params: None,
        phi: None,
        ground: None,
        s_hat: None,
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        r.fail(StageError::from_core("setup", &Error::from(e)));
        return r.m;
    }
    let _ = r.execute(cmd, inputs);
    if r.m.summary.error.is_none() && !r.m.summary.failures.is_empty() {
        r.m.summary.pass = false;
        r.m.summary.exit_code = 2;
    }
    let _ = r.op.take();
    if let Err(e) = write_manifest(&r.m, &out.join("manifest.json")) {
        r.fail(StageError::from_core("manifest", &Error::from(e)));
    }
    r.m
}

/// The full chain: spectrum, regime gate, sobolev, ground, lemma22,
/// threshold, lift.
pub fn run_pipeline(cfg: &RunConfig) -> RunManifest {
    run(Command::Pipeline, cfg, &Inputs::default())
}
