//! The cylindrical critical constant
//! `Ŝ = inf (∫|∇u|² + u²/r²) / (∫u⁶)^{1/3}` and its minimizer `Φ`.
//!
//! The continuum quotient is dilation invariant but its truncated discrete
//! version is not: left alone, descent slides toward grid-scale bumps. The
//! minimization is therefore carried out on
//! `{u ≥ 0, |u|₆ = 1, ∫ρ u⁶ / ∫u⁶ = s₀²}` with `ρ = r² + x3²`, which pins the
//! dilation and leaves the continuum infimum unchanged.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{free_form, integrate_power, AxiGrid, Field};
use crate::linalg::{solve_dense, LdlFactor};
use crate::operator::{OperatorHandle, Potential};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "seed")]
pub enum StartKind {
    /// `r·exp(-ρ/s₀²)`
    Gaussian,
    /// `(r/s₀)(1 + ρ/s₀²)^{-3/2}`, algebraic tail like the true profile
    AubinTalenti,
    /// Gaussian of random width with multiplicative node noise.
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct SobolevOptions<S: Real> {
    /// Root-mean-square radius `s₀` of `u⁶`.
    pub scale: S,
    /// Stop when `‖∇R‖_W ≤ tol·R` (gradient projected on the constraint set).
    pub tol: S,
    pub max_iter: usize,
    pub starts: Vec<StartKind>,
}

impl<S: Real> Default for SobolevOptions<S> {
    fn default() -> Self {
        Self { scale: S::lit(1.5), tol: S::lit(1e-8), max_iter: 3000, starts: vec![StartKind::Gaussian, StartKind::AubinTalenti] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: StartKind,
    pub s_hat: Option<f64>,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RayleighMinimum<S: Real> {
    /// Minimizer with `|u|₆ = 1`.
    pub u: Field<S>,
    pub s_hat: S,
    /// `‖∇R(u)‖_W / R(u)` with the gradient projected on the constraint set.
    pub residual: S,
    /// Lagrange multiplier of the scale constraint.
    pub scale_multiplier: S,
    pub iterations: usize,
    /// All starts, including failed ones.
    pub starts: Vec<StartReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted ν̂ in `Φ ~ |x|^{-ν̂}`.
    pub exponent: f64,
    pub inner_slope: f64,
    pub outer_slope: f64,
    /// False when the two half-annulus slopes disagree by more than 25%.
    pub power_law: bool,
    pub rms_residual: f64,
    pub points: usize,
    pub r_inner: f64,
    pub r_outer: f64,
}

#[derive(Clone, Debug)]
pub struct SobolevResult<S: Real> {
    pub s_hat: S,
    /// `Φ = Ŝ^{1/4} u`, solving `-ΔΦ + Φ/r² = Φ⁵` up to the pinned-scale residual.
    pub phi: Field<S>,
    pub rayleigh_residual: S,
    /// Max relative error over both equalities `∫|∇Φ|²+Φ²/r² = ∫Φ⁶ = Ŝ^{3/2}`.
    pub identity_gap: S,
    pub decay: DecayFit,
    pub decay_exponent_fit: f64,
    /// `‖(-Δ_h + 1/r²)Φ - Φ⁵‖_W / ‖Φ⁵‖_W`.
    pub pde_residual: S,
    pub scale_multiplier: S,
    pub iterations: usize,
    pub starts: Vec<StartReport>,
}

/// `R(u) = (∫|∇u|² + u²/r²) / (∫u⁶)^{1/3}`.
pub fn rayleigh_quotient<S: Real>(u: &Field<S>) -> Result<S> {
    let d = integrate_power(u, S::lit(6.0))?;
    if !(d > S::zero()) {
        return Err(Error::InvalidArgument("Rayleigh quotient of the zero field".into()));
    }
    Ok(free_form(u) / d.cbrt())
}

/// Radius of the ball around the origin holding half of `∫u⁶`.
pub fn half_mass_radius<S: Real>(u: &Field<S>) -> S {
    let g = u.grid();
    let mut pts: Vec<(S, S)> = (0..g.len())
        .filter(|&k| u.values()[k] != S::zero())
        .map(|k| {
            let (r, z) = g.coords(k);
            ((r * r + z * z).sqrt(), g.quad_weights()[k] * u.values()[k].powi(6))
        })
        .collect();
    let total: S = pts.iter().map(|p| p.1).sum();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut acc = S::zero();
    for (rad, m) in pts {
        acc += m;
        if acc + acc >= total {
            return rad;
        }
    }
    S::zero()
}

struct Workspace<S: Real> {
    grid: Arc<AxiGrid<S>>,
    free: OperatorHandle<S>,
    nodes: Vec<usize>,
    precond: LdlFactor<S>,
    rho: Vec<S>,
}

impl<S: Real> Workspace<S> {
    fn new(grid: &Arc<AxiGrid<S>>) -> Result<Self> {
        let free = OperatorHandle::assemble(grid, Potential::zero());
        let nodes = free.interior_nodes();
        let precond = free.shifted_banded(-S::one()).factorize()?;
        let rho = (0..grid.len())
            .map(|k| {
                let (r, z) = grid.coords(k);
                r * r + z * z
            })
            .collect();
        Ok(Self { grid: Arc::clone(grid), free, nodes, precond, rho })
    }

    fn sixth(&self, u: &[S]) -> S {
        let mut acc = S::zero();
        for (w, v) in self.grid.quad_weights().iter().zip(u) {
            acc += *w * v.powi(6);
        }
        acc
    }

    fn quotient(&self, u: &[S]) -> S {
        let g = &*self.grid;
        (g.gradient_inner(u, u) + g.centrifugal(u, u)) / self.sixth(u).cbrt()
    }

    /// Clip, reflect, pin the second moment by a bounded radial tilt, and
    /// normalize `|u|₆ = 1`.
    fn retract(&self, u: &[S], s0: S) -> Result<Vec<S>> {
        let g = &*self.grid;
        let half = S::lit(0.5);
        let base: Vec<S> = (0..g.len()).map(|k| half * (u[k].max(S::zero()) + u[g.mirror(k)].max(S::zero()))).collect();
        let s2 = s0 * s0;
        let tilt: Vec<S> = self.rho.iter().map(|&p| p / (p + s2)).collect();
        let w = g.quad_weights();
        let mut a = S::zero();
        let mut v = base.clone();
        for _ in 0..60 {
            let (mut m0, mut mr, mut mt, mut mrt) = (S::zero(), S::zero(), S::zero(), S::zero());
            for k in 0..g.len() {
                if base[k] == S::zero() {
                    continue;
                }
                v[k] = base[k] * (a * tilt[k]).exp();
                let m = w[k] * v[k].powi(6);
                m0 += m;
                mr += m * self.rho[k];
                mt += m * tilt[k];
                mrt += m * self.rho[k] * tilt[k];
            }
            if !(m0 > S::zero()) {
                return Err(Error::numeric("sobolev", "iterate vanished", 0.0, 0));
            }
            let f = mr / m0 - s2;
            if f.abs() <= S::lit(1e-13).max(S::epsilon() * S::lit(8.0)) * s2 {
                break;
            }
            let cov = mrt / m0 - (mr / m0) * (mt / m0);
            let six = S::lit(6.0);
            let mut da = f / (six * cov);
            if !da.is_finite() {
                return Err(Error::numeric("sobolev", "scale constraint is degenerate", f.abs().to_f64_lossy(), 0));
            }
            let cap = S::lit(4.0);
            da = da.max(-cap).min(cap);
            a -= da;
        }
        let n6 = self.sixth(&v).powf(S::one() / S::lit(6.0));
        Ok(v.into_iter().map(|x| x / n6).collect())
    }
}

fn initial<S: Real>(grid: &Arc<AxiGrid<S>>, kind: StartKind, s0: S) -> Field<S> {
    let s2 = s0 * s0;
    match kind {
        StartKind::Gaussian => Field::from_fn(grid, |r, z| r * (-(r * r + z * z) / s2).exp()),
        StartKind::AubinTalenti => Field::from_fn(grid, |r, z| (r / s0) * (S::one() + (r * r + z * z) / s2).powf(S::lit(-1.5))),
        StartKind::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let width = s0 * S::lit(0.6 + 0.8 * rng.gen::<f64>());
            let w2 = width * width;
            Field::from_fn(grid, |r, z| {
                let noise = S::lit(1.0 + 0.5 * (rng.gen::<f64>() - 0.5));
                noise * r * (-(r * r + z * z) / w2).exp()
            })
        }
    }
}

struct Run<S: Real> {
    u: Vec<S>,
    r: S,
    residual: S,
    multiplier: S,
    iterations: usize,
}

fn descend<S: Real>(ws: &Workspace<S>, u0: &Field<S>, opts: &SobolevOptions<S>) -> Result<Run<S>> {
    let g = &*ws.grid;
    let w = g.quad_weights();
    let s0 = opts.scale;
    let guard = S::lit(4.0) * g.dr().max(g.dz());
    let mut u = ws.retract(u0.values(), s0)?;
    let mut step = S::one();
    let mut prev: Option<(Vec<S>, Vec<S>)> = None;
    let two = S::lit(2.0);
    let mut last_res = S::infinity();
    for it in 0..opts.max_iter {
        let q = g.gradient_inner(&u, &u) + g.centrifugal(&u, &u);
        let d = ws.sixth(&u);
        let dc = d.cbrt();
        let r = q / dc;
        let ku = ws.free.stiffness_apply(&u);
        // W-representative of ∇R
        let mut gr: Vec<S> =
            (0..g.len()).map(|k| if g.is_boundary(k) { S::zero() } else { two * ku[k] / w[k] / dc - two * q / (d * dc) * u[k].powi(5) }).collect();
        let a: Vec<S> = u.iter().map(|v| v.powi(5)).collect();
        let b: Vec<S> = a.iter().zip(&ws.rho).map(|(x, p)| *x * *p).collect();
        let gram = [g.dot_w(&a, &a), g.dot_w(&a, &b), g.dot_w(&a, &b), g.dot_w(&b, &b)];
        let rhs = [g.dot_w(&gr, &a), g.dot_w(&gr, &b)];
        let c = solve_dense(&gram, &rhs, 2).ok_or_else(|| Error::numeric("sobolev", "constraint Gram matrix is singular", f64::NAN, it))?;
        for k in 0..g.len() {
            gr[k] -= c[0] * a[k] + c[1] * b[k];
        }
        let gn = g.dot_w(&gr, &gr).sqrt();
        last_res = gn / r;
        if gn <= opts.tol * r {
            return Ok(Run { u, r, residual: gn / r, multiplier: c[1], iterations: it });
        }
        let eg: Vec<S> = ws.nodes.iter().map(|&k| w[k] * gr[k]).collect();
        let dv = ws.precond.solve(&eg);
        let dir = ws.free.scatter(&ws.nodes, &dv);
        let ui = ws.free.gather(&ws.nodes, &u);
        if let Some((pu, pg)) = &prev {
            let s: Vec<S> = ui.iter().zip(pu).map(|(x, y)| *x - *y).collect();
            let y: Vec<S> = eg.iter().zip(pg).map(|(x, y)| *x - *y).collect();
            let sy: S = s.iter().zip(&y).map(|(x, y)| *x * *y).sum();
            if sy > S::zero() {
                let full = ws.free.scatter(&ws.nodes, &s);
                let ks = ws.free.stiffness_apply(&full);
                let sms: S = ws.nodes.iter().zip(&s).map(|(&k, &sv)| sv * (ks[k] + w[k] * sv)).sum();
                step = sms / sy;
            }
        }
        prev = Some((ui, eg.clone()));
        let slope: S = eg.iter().zip(&dv).map(|(x, y)| *x * *y).sum();
        // near the optimum the predicted decrease drops below the rounding
        // error of R itself
        let noise = S::lit(64.0) * S::epsilon() * r;
        let mut next;
        loop {
            let trial: Vec<S> = u.iter().zip(&dir).map(|(x, d)| *x - step * *d).collect();
            next = ws.retract(&trial, s0)?;
            if ws.quotient(&next) <= r - S::lit(1e-4) * step * slope + noise || step < S::lit(1e-12) {
                break;
            }
            step *= S::lit(0.5);
        }
        u = next;
        let hm = half_mass_radius(&Field::from_raw(&ws.grid, u.clone()));
        if hm < guard {
            return Err(Error::Resolution(format!(
                "Rayleigh iterate concentrated: half of its L6 mass lies within {} of the origin (4 cells = {})",
                hm.to_f64_lossy(),
                guard.to_f64_lossy()
            )));
        }
    }
    Err(Error::NumericFailure {
        stage: "sobolev",
        message: format!("no convergence in {} iterations", opts.max_iter),
        residual: last_res.to_f64_lossy(),
        iterations: opts.max_iter,
        last_iterate: Some(u.iter().map(|v| v.to_f64_lossy()).collect()),
    })
}

/// Minimizes the Rayleigh quotient from every start in `opts`; the lowest
/// quotient wins.
pub fn minimize_rayleigh<S: Real>(grid: &Arc<AxiGrid<S>>, opts: &SobolevOptions<S>) -> Result<RayleighMinimum<S>> {
    if !(opts.scale > S::zero()) || !(opts.tol > S::zero()) {
        return Err(Error::InvalidArgument("scale and tol must be positive".into()));
    }
    if opts.starts.is_empty() {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    if opts.scale * S::lit(2.0) > grid.r_max().min(grid.z_max()) {
        return Err(Error::InvalidArgument("scale must be below half the box size".into()));
    }
    let ws = Workspace::new(grid)?;
    let runs: Vec<(StartKind, Result<Run<S>>)> = opts.starts.par_iter().map(|&kind| (kind, descend(&ws, &initial(grid, kind, opts.scale), opts))).collect();
    let mut reports = Vec::with_capacity(runs.len());
    let mut best: Option<Run<S>> = None;
    let mut first_err = None;
    for (kind, run) in runs {
        match run {
            Ok(run) => {
                reports.push(StartReport {
                    start: kind,
                    s_hat: Some(run.r.to_f64_lossy()),
                    iterations: run.iterations,
                    residual: Some(run.residual.to_f64_lossy()),
                    error: None,
                });
                if best.as_ref().map_or(true, |b| run.r < b.r) {
                    best = Some(run);
                }
            }
            Err(e) => {
                reports.push(StartReport { start: kind, s_hat: None, iterations: 0, residual: None, error: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(run) => Ok(RayleighMinimum {
            u: Field::from_raw(grid, run.u),
            s_hat: run.r,
            residual: run.residual,
            scale_multiplier: run.multiplier,
            iterations: run.iterations,
            starts: reports,
        }),
        None => Err(first_err.unwrap()),
    }
}

/// `Φ = Ŝ^{1/4} u` for a unit-`L⁶` minimizer `u`.
pub fn normalize_to_equation<S: Real>(u: &Field<S>, s_hat: S) -> Result<Field<S>> {
    let tol = S::lit(1e-8).max(S::epsilon() * S::lit(64.0));
    let n6 = integrate_power(u, S::lit(6.0))?;
    if (n6 - S::one()).abs() > tol {
        return Err(Error::InvalidArgument(format!("input is not unit in L6 (|u|_6^6 = {n6})")));
    }
    if !(s_hat > S::zero()) {
        return Err(Error::InvalidArgument("S_hat must be positive".into()));
    }
    let r = rayleigh_quotient(u)?;
    if (r - s_hat).abs() > tol * s_hat {
        return Err(Error::InvalidArgument(format!("R(u) = {r} does not match S_hat = {s_hat}")));
    }
    Ok(u.scaled(s_hat.powf(S::lit(0.25))))
}

/// `‖(-Δ_h + 1/r²)Φ - Φ⁵‖_W / ‖Φ⁵‖_W`.
pub fn phi_residual<S: Real>(phi: &Field<S>) -> S {
    let g = phi.grid();
    let v = phi.values();
    let lap = g.neg_laplacian(v);
    let mut res = vec![S::zero(); v.len()];
    let mut p5 = vec![S::zero(); v.len()];
    for k in 0..v.len() {
        if g.is_boundary(k) {
            continue;
        }
        let (r, _) = g.coords(k);
        p5[k] = v[k].powi(5);
        res[k] = lap[k] + v[k] / (r * r) - p5[k];
    }
    (g.dot_w(&res, &res) / g.dot_w(&p5, &p5)).sqrt()
}

/// Both identities `Q₀(Φ) = ∫Φ⁶ = Ŝ^{3/2}`, as the larger relative error.
pub fn identity_gap<S: Real>(phi: &Field<S>, s_hat: S) -> Result<S> {
    let target = s_hat.powf(S::lit(1.5));
    let q = free_form(phi);
    let six = integrate_power(phi, S::lit(6.0))?;
    Ok(((q - target).abs().max((six - target).abs()).max((q - six).abs())) / target)
}

/// Tail exponent on the default annulus `0.3..0.8 · min(r_max, z_max)`.
pub fn fit_decay<S: Real>(phi: &Field<S>) -> Result<DecayFit> {
    fit_decay_in(phi, 0.3, 0.8)
}

/// Least-squares slope of `log Φ` against `-log|x|` over nodes with
/// `inner·L ≤ |x| ≤ outer·L` and polar angle within 60° of the equator.
pub fn fit_decay_in<S: Real>(phi: &Field<S>, inner: f64, outer: f64) -> Result<DecayFit> {
    if !(0.0 < inner && inner < outer && outer < 1.0) {
        return Err(Error::InvalidArgument("annulus fractions must satisfy 0 < inner < outer < 1".into()));
    }
    let g = phi.grid();
    let l = g.r_max().min(g.z_max()).to_f64_lossy();
    let (r_in, r_out) = (inner * l, outer * l);
    let mid = 0.5 * (r_in + r_out);
    let mut all = (Vec::new(), Vec::new());
    let mut lo = (Vec::new(), Vec::new());
    let mut hi = (Vec::new(), Vec::new());
    for k in 0..g.len() {
        if g.is_boundary(k) {
            continue;
        }
        let (r, z) = g.coords(k);
        let (r, z) = (r.to_f64_lossy(), z.to_f64_lossy());
        let rad = r.hypot(z);
        if rad < r_in || rad > r_out || r < 0.5 * rad {
            continue;
        }
        let v = phi.values()[k].to_f64_lossy();
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("Phi is not positive at r = {r}, x3 = {z}")));
        }
        let (x, y) = (-rad.ln(), v.ln());
        all.0.push(x);
        all.1.push(y);
        let half = if rad < mid { &mut lo } else { &mut hi };
        half.0.push(x);
        half.1.push(y);
    }
    let fit = crate::fit::least_squares(&all.0, &all.1).ok_or_else(|| Error::InvalidArgument("annulus holds too few nodes".into()))?;
    let fi = crate::fit::least_squares(&lo.0, &lo.1).ok_or_else(|| Error::InvalidArgument("inner half-annulus too thin".into()))?;
    let fo = crate::fit::least_squares(&hi.0, &hi.1).ok_or_else(|| Error::InvalidArgument("outer half-annulus too thin".into()))?;
    let power_law = (fo.slope - fi.slope).abs() <= 0.25 * fit.slope.abs();
    Ok(DecayFit {
        exponent: fit.slope,
        inner_slope: fi.slope,
        outer_slope: fo.slope,
        power_law,
        rms_residual: fit.rms_residual,
        points: fit.points,
        r_inner: r_in,
        r_outer: r_out,
    })
}

/// Minimize, normalize, and fit the tail.
pub fn compute<S: Real>(grid: &Arc<AxiGrid<S>>, opts: &SobolevOptions<S>) -> Result<SobolevResult<S>> {
    let min = minimize_rayleigh(grid, opts)?;
    let phi = normalize_to_equation(&min.u, min.s_hat)?;
    let identity_gap = identity_gap(&phi, min.s_hat)?;
    let decay = fit_decay(&phi)?;
    Ok(SobolevResult {
        s_hat: min.s_hat,
        pde_residual: phi_residual(&phi),
        phi,
        rayleigh_residual: min.residual,
        identity_gap,
        decay_exponent_fit: decay.exponent,
        decay,
        scale_multiplier: min.scale_multiplier,
        iterations: min.iterations,
        starts: min.starts,
    })
}
