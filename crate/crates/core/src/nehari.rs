//! Energy `J(u) = ½Q(u) - (1/p)∫|u|^p - (1/6)∫u⁶`, the Nehari-Pankov fiber
//! map `w ↦ m(w)`, and the ground state level `c = inf_N J`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_power, Field};
use crate::linalg::{is_negative_definite, solve_dense, LdlFactor};
use crate::operator::OperatorHandle;
use crate::scalar::Real;
use crate::spectral::{lowest_eigenpairs, EigenOptions, SpectralSplit};

/// Exponent `p` together with the split it is used with. Construction enforces
/// the regime gate: `p ∈ (2,6)`, and `p ∈ (4,6)` when `E⁻ ≠ {0}`.
#[derive(Clone, Debug)]
pub struct EnergyParams<S: Real> {
    p: S,
    split: Arc<SpectralSplit<S>>,
}

impl<S: Real> EnergyParams<S> {
    pub fn new(p: S, split: Arc<SpectralSplit<S>>) -> Result<Self> {
        if !(p > S::lit(2.0) && p < S::lit(6.0)) {
            return Err(Error::InvalidArgument(format!("p = {p} must lie in the open interval (2,6)")));
        }
        if split.dim_minus() > 0 && p <= S::lit(4.0) {
            return Err(Error::RegimeGate { p: p.to_f64_lossy(), dim_minus: split.dim_minus() });
        }
        Ok(Self { p, split })
    }
    pub fn p(&self) -> S {
        self.p
    }
    pub fn split(&self) -> &Arc<SpectralSplit<S>> {
        &self.split
    }
    pub fn operator(&self) -> &Arc<OperatorHandle<S>> {
        self.split.operator()
    }
    pub fn dim_minus(&self) -> usize {
        self.split.dim_minus()
    }
}

fn nonlinear_potential<S: Real>(p: S, u: &Field<S>) -> Result<S> {
    Ok(integrate_power(u, p)? / p + integrate_power(u, S::lit(6.0))? / S::lit(6.0))
}

/// `J(u)` from the quadratic form.
pub fn energy<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<S> {
    let q = params.operator().quadratic_form(u)?;
    Ok(S::lit(0.5) * q - nonlinear_potential(params.p, u)?)
}

/// `J(u)` from the split, `½‖u⁺‖² - ½‖u⁻‖² - …`.
pub fn energy_split<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<S> {
    let (np, nm) = params.split.split_norms(u)?;
    Ok(S::lit(0.5) * (np * np - nm * nm) - nonlinear_potential(params.p, u)?)
}

/// `N(v) = |v|^{p-2}v + v⁵`.
#[inline]
fn nl<S: Real>(p: S, v: S) -> S {
    v.abs().powf(p - S::lit(2.0)) * v + v.powi(5)
}

/// W-Riesz representative of `J'(u)`: `Lu - |u|^{p-2}u - u⁵` on the interior.
pub fn grad_energy<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<Field<S>> {
    let op = params.operator();
    u.on_grid(op.grid())?;
    let g = op.grid();
    let ku = op.stiffness_apply(u.values());
    let w = g.quad_weights();
    let vals = (0..g.len()).map(|k| if g.is_boundary(k) { S::zero() } else { ku[k] / w[k] - nl(params.p, u.values()[k]) }).collect();
    Ok(Field::from_raw(g, vals))
}

/// `‖Lu - |u|^{p-2}u - u⁵‖_W / ‖u⁵‖_W`.
pub fn pde_residual<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<S> {
    let g = grad_energy(params, u)?;
    let u5: Vec<S> = u.values().iter().map(|v| v.powi(5)).collect();
    let d = u.grid().dot_w(&u5, &u5).sqrt();
    if !(d > S::zero()) {
        return Err(Error::InvalidArgument("PDE residual of the zero field".into()));
    }
    Ok(g.norm_w() / d)
}

#[derive(Clone, Debug)]
pub struct FiberOptions<S: Real> {
    /// Relative tolerance on both Nehari-Pankov conditions.
    pub tol: S,
    pub max_iter: usize,
    /// Seeded restarts tried when the primary Newton run fails.
    pub restarts: usize,
    pub seed: u64,
}

impl<S: Real> Default for FiberOptions<S> {
    fn default() -> Self {
        Self { tol: S::lit(1e-8), max_iter: 200, restarts: 8, seed: 0 }
    }
}

/// The fiber maximizer `m(w) = t·w + Σ s_k e_k`.
#[derive(Clone, Debug)]
pub struct FiberPoint<S: Real> {
    pub t: S,
    /// Coordinates `s_k` on the W-orthonormal negative eigenvectors.
    pub coeffs: Vec<S>,
    pub value: S,
    pub point: Field<S>,
    /// `max(|⟨J'(m),m⟩|/‖m‖², max_k |⟨J'(m),ê_k⟩|/‖m‖)`, `ê_k = e_k/‖e_k‖`.
    pub residual: S,
    pub iterations: usize,
}

/// Fiber coordinates, evaluation, residual and iteration count.
type Ascent<S> = (Vec<S>, FiberEval<S>, S, usize);

struct Fiber<'a, S: Real> {
    p: S,
    weights: &'a [S],
    basis: Vec<&'a [S]>,
    /// `B(b_a, b_a)`; the basis is B-orthogonal.
    diag: Vec<S>,
}

struct FiberEval<S: Real> {
    value: S,
    grad: Vec<S>,
    hess: Vec<S>,
}

const CHUNK: usize = 4096;

impl<'a, S: Real> Fiber<'a, S> {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn point(&self, x: &[S]) -> Vec<S> {
        let mut v = vec![S::zero(); self.weights.len()];
        for (c, b) in x.iter().zip(&self.basis) {
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi += *c * *bi;
            }
        }
        v
    }

    fn value(&self, x: &[S]) -> S {
        let v = self.point(x);
        let (p, six) = (self.p, S::lit(6.0));
        let nl: S = v
            .par_chunks(CHUNK)
            .zip(self.weights.par_chunks(CHUNK))
            .map(|(vc, wc)| vc.iter().zip(wc).map(|(v, w)| *w * (v.abs().powf(p) / p + v.powi(6) / six)).sum::<S>())
            .collect::<Vec<S>>()
            .into_iter()
            .sum();
        let quad: S = x.iter().zip(&self.diag).map(|(c, d)| *c * *c * *d).sum();
        S::lit(0.5) * quad - nl
    }

    fn eval(&self, x: &[S]) -> FiberEval<S> {
        let n = self.dim();
        let v = self.point(x);
        let p = self.p;
        let six = S::lit(6.0);
        // Per-chunk partials summed in a fixed order for thread-count independence.
        let partials: Vec<(S, Vec<S>, Vec<S>)> = (0..v.len().div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(v.len());
                let mut f = S::zero();
                let mut g = vec![S::zero(); n];
                let mut h = vec![S::zero(); n * n];
                for k in lo..hi {
                    let vk = v[k];
                    if vk == S::zero() {
                        continue;
                    }
                    let w = self.weights[k];
                    let a = vk.abs();
                    let ap2 = a.powf(p - S::lit(2.0));
                    let v4 = vk.powi(4);
                    f += w * (ap2 * a * a / p + v4 * vk * vk / six);
                    let nv = w * (ap2 * vk + v4 * vk);
                    let dn = w * ((p - S::one()) * ap2 + S::lit(5.0) * v4);
                    for i in 0..n {
                        let bi = self.basis[i][k];
                        g[i] += nv * bi;
                        for j in 0..=i {
                            h[i * n + j] += dn * bi * self.basis[j][k];
                        }
                    }
                }
                (f, g, h)
            })
            .collect();
        let mut f = S::zero();
        let mut g = vec![S::zero(); n];
        let mut h = vec![S::zero(); n * n];
        for (pf, pg, ph) in partials {
            f += pf;
            for i in 0..n {
                g[i] += pg[i];
            }
            for i in 0..n * n {
                h[i] += ph[i];
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[j * n + i] = h[i * n + j];
            }
        }
        let mut value = -f;
        let mut grad = vec![S::zero(); n];
        let mut hess = vec![S::zero(); n * n];
        for i in 0..n {
            value += S::lit(0.5) * self.diag[i] * x[i] * x[i];
            grad[i] = self.diag[i] * x[i] - g[i];
            for j in 0..n {
                hess[i * n + j] = -h[i * n + j];
            }
            hess[i * n + i] += self.diag[i];
        }
        FiberEval { value, grad, hess }
    }

    /// Relative Nehari-Pankov residual at `x` from the fiber gradient.
    fn residual(&self, x: &[S], grad: &[S]) -> S {
        let norm2: S = x.iter().zip(&self.diag).map(|(c, d)| *c * *c * d.abs()).sum();
        if !(norm2 > S::zero()) {
            return S::infinity();
        }
        let norm = norm2.sqrt();
        let along: S = x.iter().zip(grad).map(|(a, b)| *a * *b).sum();
        let mut r = along.abs() / norm2;
        for k in 1..self.dim() {
            r = r.max(grad[k].abs() / self.diag[k].abs().sqrt() / norm);
        }
        r
    }

    /// Levenberg-Marquardt ascent to a strict local maximum with `t > 0`.
    fn ascend(&self, mut x: Vec<S>, opts: &FiberOptions<S>) -> std::result::Result<Ascent<S>, (S, usize)> {
        let n = self.dim();
        let mut mu = S::lit(1e-4);
        let noise = S::epsilon() * S::lit(64.0);
        let mut last = S::infinity();
        for it in 0..opts.max_iter {
            let e = self.eval(&x);
            let res = self.residual(&x, &e.grad);
            last = res;
            if res <= opts.tol && x[0] > S::zero() && is_negative_definite(&e.hess, n) {
                return Ok((x, e, res, it));
            }
            let scale: Vec<S> = (0..n).map(|i| e.hess[i * n + i].abs().max(self.diag[i].abs())).collect();
            let mut moved = false;
            for _ in 0..60 {
                let mut a = vec![S::zero(); n * n];
                for i in 0..n {
                    for j in 0..n {
                        a[i * n + j] = e.hess[i * n + j];
                    }
                    a[i * n + i] -= mu * scale[i];
                }
                if !is_negative_definite(&a, n) {
                    mu *= S::lit(4.0);
                    continue;
                }
                // (-H + μD)δ = g
                let neg: Vec<S> = a.iter().map(|v| -*v).collect();
                let Some(step) = solve_dense(&neg, &e.grad, n) else {
                    mu *= S::lit(4.0);
                    continue;
                };
                let trial: Vec<S> = x.iter().zip(&step).map(|(a, b)| *a + *b).collect();
                if trial[0] > S::zero() && self.value(&trial) >= e.value - noise * e.value.abs() {
                    x = trial;
                    mu = (mu * S::lit(0.25)).max(S::lit(1e-12));
                    moved = true;
                    break;
                }
                mu *= S::lit(4.0);
            }
            if !moved {
                return Err((res, it));
            }
        }
        Err((last, opts.max_iter))
    }
}

/// Positive root of `a - t^{p-2}b - t⁴d = 0`, the ray maximizer of
/// `½t²a - (t^p/p)b - (t⁶/6)d`.
pub fn ray_maximizer<S: Real>(a: S, b: S, d: S, p: S) -> S {
    let f = |t: S| a - t.powf(p - S::lit(2.0)) * b - t.powi(4) * d;
    let (mut lo, mut hi) = (S::zero(), S::one());
    while f(hi) > S::zero() && hi < S::lit(1e150) {
        lo = hi;
        hi *= S::lit(2.0);
    }
    for _ in 0..400 {
        let mid = S::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    S::lit(0.5) * (lo + hi)
}

fn fiber_of<'a, S: Real>(params: &'a EnergyParams<S>, w: &'a Field<S>) -> Result<Fiber<'a, S>> {
    let op = params.operator();
    let a = op.quadratic_form(w)?;
    if !(a > S::zero()) {
        return Err(Error::NoFiberMax(format!("Q(w) = {a:e} is not positive")));
    }
    let mut basis: Vec<&[S]> = vec![w.values()];
    let mut diag = vec![a];
    for e in params.split.neg_eigenpairs() {
        basis.push(e.vector.values());
        diag.push(e.value);
    }
    Ok(Fiber { p: params.p, weights: op.grid().quad_weights(), basis, diag })
}

/// Maximizes `J` over `ℝ₊w ⊕ E⁻`. `w` is replaced by `P⁺w` first.
pub fn fiber_maximize<S: Real>(params: &EnergyParams<S>, w: &Field<S>, opts: &FiberOptions<S>) -> Result<FiberPoint<S>> {
    fiber_maximize_from(params, w, None, opts)
}

fn fiber_maximize_from<S: Real>(params: &EnergyParams<S>, w: &Field<S>, hint: Option<&[S]>, opts: &FiberOptions<S>) -> Result<FiberPoint<S>> {
    if w.is_zero() {
        return Err(Error::InvalidArgument("fiber direction is zero".into()));
    }
    let (w, _) = params.split.project(w)?;
    let fiber = fiber_of(params, &w)?;
    let n = fiber.dim();
    let b = integrate_power(&w, params.p)?;
    let d = integrate_power(&w, S::lit(6.0))?;
    let t0 = ray_maximizer(fiber.diag[0], b, d, params.p);
    let mut first = vec![S::zero(); n];
    first[0] = t0;
    let mut tries = Vec::new();
    if let Some(h) = hint.filter(|h| h.len() == n && h[0] > S::zero()) {
        tries.push(h.to_vec());
    }
    tries.push(first);
    let mut best: Option<Ascent<S>> = None;
    let mut last_err = (S::infinity(), 0);
    for x in tries {
        match fiber.ascend(x, opts) {
            Ok(found) => {
                best = Some(found);
                break;
            }
            Err(e) => last_err = e,
        }
    }
    if best.is_none() && opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let a = fiber.diag[0];
        for _ in 0..opts.restarts {
            let mut x = vec![S::zero(); n];
            x[0] = t0 * S::lit(0.5 + rng.gen::<f64>());
            for k in 1..n {
                let spread = t0 * (a / fiber.diag[k].abs()).sqrt();
                x[k] = spread * S::lit(rng.gen::<f64>() - 0.5);
            }
            match fiber.ascend(x, opts) {
                Ok(found) => {
                    if best.as_ref().map_or(true, |b| found.1.value > b.1.value) {
                        best = Some(found);
                    }
                }
                Err(e) => last_err = e,
            }
        }
    }
    let Some((x, e, res, iterations)) = best else {
        return Err(Error::numeric("fiber_maximize", "Newton iteration did not reach a fiber maximum", last_err.0.to_f64_lossy(), last_err.1));
    };
    if !(e.value > S::zero()) {
        return Err(Error::NoFiberMax(format!("fiber maximum J = {:e} is not positive", e.value)));
    }
    let point = Field::from_raw(w.grid(), fiber.point(&x));
    Ok(FiberPoint { t: x[0], coeffs: x[1..].to_vec(), value: e.value, point, residual: res, iterations })
}

/// Nehari-Pankov residuals of an arbitrary `u ≠ 0`, same definition as
/// [`FiberPoint::residual`].
pub fn nehari_residual<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<S> {
    let g = grad_energy(params, u)?;
    let norm = params.split.norm(u)?;
    if !(norm > S::zero()) {
        return Err(Error::InvalidArgument("Nehari residual of the zero field".into()));
    }
    let mut r = g.dot_w(u)?.abs() / (norm * norm);
    for e in params.split.neg_eigenpairs() {
        r = r.max(g.dot_w(&e.vector)?.abs() / (-e.value).sqrt() / norm);
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "seed")]
pub enum GroundStart {
    /// Eigenvector of the lowest positive eigenvalue.
    LowestPositive,
    /// `r·exp(-ρ/s²)` with `s` a quarter of the smaller box extent.
    Gaussian,
    /// The concentration profile supplied in the options.
    PhiEps,
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct GroundOptions<S: Real> {
    pub fiber: FiberOptions<S>,
    /// Stop at `pde_residual ≤ tol`.
    pub tol: S,
    pub max_iter: usize,
    /// Number of seeded random starts added to the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
    pub phi_eps: Option<Field<S>>,
    /// Sobolev constant for the threshold margin.
    pub s_hat: Option<S>,
}

impl<S: Real> Default for GroundOptions<S> {
    fn default() -> Self {
        Self { fiber: FiberOptions::default(), tol: S::lit(1e-6), max_iter: 2000, random_starts: 1, seed: 0, phi_eps: None, s_hat: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub pde_residual: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStartReport {
    pub start: GroundStart,
    pub c: Option<f64>,
    pub pde_residual: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GroundStateResult<S: Real> {
    pub u: Field<S>,
    pub c: S,
    pub nehari_residual: S,
    pub pde_residual: S,
    /// `⅓Ŝ^{3/2} - c` when `Ŝ` was supplied.
    pub threshold_margin: Option<S>,
    /// `|J(u) - (½-1/p)∫|u|^p - ⅓∫u⁶|`.
    pub energy_identity_gap: S,
    /// Smallest `‖m(w)‖` seen along the winning run.
    pub norm_floor: S,
    pub history: Vec<IterRecord>,
    pub starts: Vec<GroundStartReport>,
    pub flags: Vec<String>,
}

/// `|J(u) - (½-1/p)∫|u|^p - ⅓∫u⁶|`, which vanishes on N.
pub fn energy_identity_gap<S: Real>(params: &EnergyParams<S>, u: &Field<S>) -> Result<S> {
    let j = energy(params, u)?;
    let p = params.p;
    let rhs = (S::lit(0.5) - S::one() / p) * integrate_power(u, p)? + integrate_power(u, S::lit(6.0))? / S::lit(3.0);
    Ok((j - rhs).abs())
}

struct Outer<'a, S: Real> {
    params: &'a EnergyParams<S>,
    nodes: Vec<usize>,
    precond: LdlFactor<S>,
    sigma: S,
}

struct Run<S: Real> {
    fp: FiberPoint<S>,
    pde: S,
    floor: S,
    history: Vec<IterRecord>,
    iterations: usize,
}

impl<'a, S: Real> Outer<'a, S> {
    fn new(params: &'a EnergyParams<S>) -> Result<Self> {
        let op = params.operator();
        let lowest = params.split.eigenvalues_near_zero().iter().copied().fold(op.v_min(), |m, v| m.min(v));
        let sigma = lowest - S::one();
        let precond = op.shifted_banded(sigma).factorize()?;
        Ok(Self { params, nodes: op.interior_nodes(), precond, sigma })
    }

    fn unit(&self, w: &Field<S>) -> Result<Field<S>> {
        let (plus, _) = self.params.split.project(w)?;
        let q = self.params.operator().quadratic_form(&plus)?;
        if !(q > S::zero()) {
            return Err(Error::NoFiberMax("start has no positive component".into()));
        }
        Ok(plus.scaled(S::one() / q.sqrt()))
    }

    fn run(&self, start: &Field<S>, opts: &GroundOptions<S>) -> Result<Run<S>> {
        let op = self.params.operator();
        let g = op.grid();
        let wts = g.quad_weights();
        let mut w = self.unit(start)?;
        let mut fp = fiber_maximize(self.params, &w, &opts.fiber)?;
        let mut floor = S::infinity();
        let mut history = Vec::new();
        let mut alpha = S::one();
        let mut prev: Option<(Vec<S>, Vec<S>)> = None;
        let noise = S::epsilon() * S::lit(256.0);
        for it in 0..=opts.max_iter {
            let grad = grad_energy(self.params, &fp.point)?;
            let u5: Vec<S> = fp.point.values().iter().map(|v| v.powi(5)).collect();
            let pde = grad.norm_w() / g.dot_w(&u5, &u5).sqrt();
            floor = floor.min(self.params.split.norm(&fp.point)?);
            history.push(IterRecord { iter: it, energy: fp.value.to_f64_lossy(), pde_residual: pde.to_f64_lossy(), step: alpha.to_f64_lossy() });
            if pde <= opts.tol {
                return Ok(Run { fp, pde, floor, history, iterations: it });
            }
            if it == opts.max_iter {
                return Err(Error::NumericFailure {
                    stage: "minimize_on_manifold",
                    message: format!("no convergence in {} iterations", opts.max_iter),
                    residual: pde.to_f64_lossy(),
                    iterations: it,
                    last_iterate: Some(fp.point.values().iter().map(|v| v.to_f64_lossy()).collect()),
                });
            }
            // Reduced gradient: t·P⁺ J'(m), in dual form, then preconditioned.
            let (gp, _) = self.params.split.project(&grad)?;
            let eg: Vec<S> = self.nodes.iter().map(|&k| fp.t * wts[k] * gp.values()[k]).collect();
            let dv = self.precond.solve(&eg);
            let dir = Field::from_raw(g, op.scatter(&self.nodes, &dv));
            let wi = op.gather(&self.nodes, w.values());
            if let Some((pw, pg)) = &prev {
                let s: Vec<S> = wi.iter().zip(pw).map(|(a, b)| *a - *b).collect();
                let y: Vec<S> = eg.iter().zip(pg).map(|(a, b)| *a - *b).collect();
                let sy: S = s.iter().zip(&y).map(|(a, b)| *a * *b).sum();
                if sy > S::zero() {
                    let full = op.scatter(&self.nodes, &s);
                    let ks = op.stiffness_apply(&full);
                    let sms: S = self.nodes.iter().zip(&s).map(|(&k, &sv)| sv * (ks[k] - self.sigma * wts[k] * sv)).sum();
                    alpha = sms / sy;
                }
            }
            prev = Some((wi, eg.clone()));
            let slope: S = eg.iter().zip(&dv).map(|(a, b)| *a * *b).sum();
            let hint: Vec<S> = std::iter::once(fp.t).chain(fp.coeffs.iter().copied()).collect();
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = w.clone();
                trial.axpy(-alpha, &dir)?;
                let unit = self.unit(&trial);
                if let Ok(wt) = unit {
                    let trial_fp = fiber_maximize_from(self.params, &wt, Some(&hint), &opts.fiber);
                    match trial_fp {
                        Ok(tf) if tf.value <= fp.value - S::lit(1e-4) * alpha * slope + noise * fp.value.abs() => {
                            accepted = Some((wt, tf));
                            break;
                        }
                        Ok(_) | Err(Error::NoFiberMax(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                alpha *= S::lit(0.5);
            }
            let Some((wt, tf)) = accepted else {
                return Err(Error::NumericFailure {
                    stage: "minimize_on_manifold",
                    message: "line search failed".into(),
                    residual: pde.to_f64_lossy(),
                    iterations: it,
                    last_iterate: Some(fp.point.values().iter().map(|v| v.to_f64_lossy()).collect()),
                });
            };
            w = wt;
            fp = tf;
        }
        unreachable!()
    }
}

fn start_field<S: Real>(params: &EnergyParams<S>, kind: GroundStart, opts: &GroundOptions<S>) -> Result<Field<S>> {
    let op = params.operator();
    let g = op.grid();
    let s = g.r_max().min(g.z_max()) / S::lit(4.0);
    let s2 = s * s;
    match kind {
        GroundStart::LowestPositive => {
            let k = params.dim_minus() + 1;
            let pairs = lowest_eigenpairs(op, k, &EigenOptions { seed: opts.seed, ..EigenOptions::default() })?;
            let e =
                pairs.into_iter().find(|p| p.value > S::zero()).ok_or_else(|| Error::numeric("ground start", "no positive eigenvalue found", f64::NAN, 0))?;
            // Fix the sign so the start is mostly non-negative.
            let sum: S = e.vector.values().iter().zip(g.quad_weights()).map(|(a, b)| *a * *b).sum();
            Ok(if sum < S::zero() { e.vector.scaled(-S::one()) } else { e.vector })
        }
        GroundStart::Gaussian => Ok(Field::from_fn(g, |r, z| r * (-(r * r + z * z) / s2).exp())),
        GroundStart::PhiEps => opts.phi_eps.clone().ok_or_else(|| Error::InvalidArgument("phi_eps start requested without a profile".into())),
        GroundStart::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let width = s * S::lit(0.5 + rng.gen::<f64>());
            let shift = g.z_max() * S::lit(0.5 * (rng.gen::<f64>() - 0.5));
            let w2 = width * width;
            Ok(Field::from_fn(g, |r, z| {
                let dz = z - shift;
                S::lit(1.0 + 0.5 * (rng.gen::<f64>() - 0.5)) * r * (-(r * r + dz * dz) / w2).exp()
            }))
        }
    }
}

/// Deterministic start list for `opts`.
pub fn ground_starts<S: Real>(opts: &GroundOptions<S>) -> Vec<GroundStart> {
    let mut starts = vec![GroundStart::LowestPositive, GroundStart::Gaussian];
    if opts.phi_eps.is_some() {
        starts.push(GroundStart::PhiEps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    starts.extend((0..opts.random_starts).map(|_| GroundStart::Random(rng.gen())));
    starts
}

/// `c = inf_N J` by preconditioned descent on `w ↦ J(m(w))` over the unit
/// sphere of `E⁺`.
pub fn minimize_on_manifold<S: Real>(params: &EnergyParams<S>, opts: &GroundOptions<S>) -> Result<GroundStateResult<S>> {
    if !(opts.tol > S::zero()) || !(opts.fiber.tol > S::zero()) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if let Some(phi) = &opts.phi_eps {
        phi.on_grid(params.operator().grid())?;
    }
    let outer = Outer::new(params)?;
    let kinds = ground_starts(opts);
    let runs: Vec<(GroundStart, Result<Run<S>>)> =
        kinds.par_iter().map(|&kind| (kind, start_field(params, kind, opts).and_then(|f| outer.run(&f, opts)))).collect();
    let mut reports = Vec::new();
    let mut best: Option<Run<S>> = None;
    let mut first_err = None;
    for (kind, run) in runs {
        match run {
            Ok(run) => {
                reports.push(GroundStartReport {
                    start: kind,
                    c: Some(run.fp.value.to_f64_lossy()),
                    pde_residual: Some(run.pde.to_f64_lossy()),
                    iterations: run.iterations,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => run.fp.value < b.fp.value || (run.fp.value == b.fp.value && run.fp.residual < b.fp.residual),
                };
                if better {
                    best = Some(run);
                }
            }
            Err(e) => {
                reports.push(GroundStartReport { start: kind, c: None, pde_residual: None, iterations: 0, error: Some(e.to_string()) });
                if !matches!(e, Error::NoFiberMax(_)) {
                    first_err.get_or_insert(e);
                }
            }
        }
    }
    let Some(run) = best else {
        return Err(first_err.unwrap_or_else(|| Error::numeric("minimize_on_manifold", "every start was degenerate", f64::NAN, 0)));
    };
    let c = run.fp.value;
    let threshold_margin = opts.s_hat.map(|s| s.powf(S::lit(1.5)) / S::lit(3.0) - c);
    let mut flags = Vec::new();
    if threshold_margin.is_some_and(|m| m <= S::zero()) {
        flags.push("threshold-margin-nonpositive".to_string());
    }
    if !(c > S::zero()) {
        flags.push("nonpositive-level".to_string());
    }
    let u = run.fp.point;
    Ok(GroundStateResult {
        c,
        nehari_residual: nehari_residual(params, &u)?,
        pde_residual: run.pde,
        threshold_margin,
        energy_identity_gap: energy_identity_gap(params, &u)?,
        norm_floor: run.floor,
        history: run.history,
        starts: reports,
        flags,
        u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    /// Radius at which every sample of `∂M_ε` had `J ≤ 0`.
    pub big_radius: Option<f64>,
    pub doublings: usize,
    pub max_j_outer: f64,
    /// Largest `J(u⁻)` over pure `E⁻` samples (`t = 0`); `None` when `E⁻ = {0}`.
    pub max_j_minus: Option<f64>,
    pub rho: f64,
    pub min_j_inner: f64,
    /// `min J / ρ²` on `E⁺ ∩ ∂B_ρ`, which tends to `½` as `ρ → 0`.
    pub quadratic_coefficient: f64,
    pub samples: usize,
}

/// Samples the mountain-pass geometry around the direction `phi_plus`.
pub fn geometry_check<S: Real>(params: &EnergyParams<S>, phi_plus: &Field<S>, big: S, rho: S, samples: usize, seed: u64) -> Result<GeometryReport> {
    if !(rho > S::zero() && rho < big) {
        return Err(Error::InvalidArgument("need 0 < rho < R".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let split = &params.split;
    let op = params.operator();
    let g = op.grid();
    let (plus, _) = split.project(phi_plus)?;
    let pn = op.quadratic_form(&plus)?.sqrt();
    if !(pn > S::zero()) {
        return Err(Error::InvalidArgument("phi_plus has no positive component".into()));
    }
    let plus = plus.scaled(S::one() / pn);
    let neg: Vec<Field<S>> = split.neg_eigenpairs().iter().map(|e| e.vector.scaled(S::one() / (-e.value).sqrt())).collect();
    let m = neg.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Directions (t̂, ĉ) on the unit sphere of ℝ^{1+m}, t̂ ≥ 0; the extremes
    // t̂ = 1 and t̂ = 0 are always included.
    let mut dirs: Vec<Vec<f64>> = vec![std::iter::once(1.0).chain(std::iter::repeat(0.0).take(m)).collect()];
    for _ in 0..samples {
        let mut d: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        d[0] = d[0].abs();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            dirs.push(d.iter().map(|v| v / n).collect());
        }
    }
    let build = |d: &[f64], radius: S| {
        let mut u = plus.scaled(radius * S::lit(d[0]));
        for (c, e) in d[1..].iter().zip(&neg) {
            u.axpy(radius * S::lit(*c), e).expect("same grid");
        }
        u
    };
    let mut radius = big;
    let mut doublings = 0;
    let mut max_outer;
    loop {
        max_outer = S::neg_infinity();
        for d in &dirs {
            max_outer = max_outer.max(energy(params, &build(d, radius))?);
        }
        if max_outer <= S::zero() || doublings >= 40 {
            break;
        }
        radius *= S::lit(2.0);
        doublings += 1;
    }
    let max_j_minus = if m > 0 {
        let mut best = S::neg_infinity();
        for _ in 0..samples {
            let mut d: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            d[0] = 0.0;
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = radius * S::lit(rng.gen::<f64>());
            let u = build(&d.iter().map(|v| v / n).collect::<Vec<_>>(), scale);
            best = best.max(energy(params, &u)?);
        }
        Some(best.to_f64_lossy())
    } else {
        None
    };
    // Inner sphere: φ⁺ plus smooth random E⁺ directions.
    let mut min_inner = energy(params, &plus.scaled(rho))?;
    let s = g.r_max().min(g.z_max());
    for _ in 0..samples {
        let width = s * S::lit(0.1 + 0.4 * rng.gen::<f64>());
        let shift = g.z_max() * S::lit(rng.gen::<f64>() - 0.5);
        let w2 = width * width;
        let f = Field::from_fn(g, |r, z| r * (-(r * r + (z - shift) * (z - shift)) / w2).exp());
        let (fp, _) = split.project(&f)?;
        let q = op.quadratic_form(&fp)?;
        if q > S::zero() {
            min_inner = min_inner.min(energy(params, &fp.scaled(rho / q.sqrt()))?);
        }
    }
    Ok(GeometryReport {
        big_radius: (max_outer <= S::zero()).then(|| radius.to_f64_lossy()),
        doublings,
        max_j_outer: max_outer.to_f64_lossy(),
        max_j_minus,
        rho: rho.to_f64_lossy(),
        min_j_inner: min_inner.to_f64_lossy(),
        quadratic_coefficient: (min_inner / (rho * rho)).to_f64_lossy(),
        samples,
    })
}
