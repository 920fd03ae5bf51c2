//! Spectrum of `L` near 0, condition (V), and the splitting `E = E⁺ ⊕ E⁻`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{e_norm, Field};
use crate::linalg::{shift_invert_lanczos, LdlFactor, RitzPair};
use crate::operator::OperatorHandle;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Eigenpair<S: Real> {
    pub value: S,
    /// W-normalized eigenvector.
    pub vector: Field<S>,
    /// `‖L e - λ e‖_W`.
    pub residual: S,
}

/// Eigensolver controls.
#[derive(Clone, Copy, Debug)]
pub struct EigenOptions<S: Real> {
    /// Absolute bound on `‖L e - λ e‖_W`.
    pub tol: S,
    /// Lanczos step budget per restart.
    pub max_steps: usize,
    pub seed: u64,
}

impl<S: Real> Default for EigenOptions<S> {
    fn default() -> Self {
        // f32 cannot reach 1e-9 residuals on realistic grids
        let tol = S::lit(1e-9).max(S::epsilon() * S::lit(1e4));
        Self { tol, max_steps: 400, seed: 0x5eed }
    }
}

/// Factorizes `K - σW`, nudging σ when it sits on an eigenvalue.
fn factor_near<S: Real>(op: &OperatorHandle<S>, sigma: S) -> Result<(S, LdlFactor<S>)> {
    let scale = op.norm_estimate().max(S::one());
    let mut s = sigma;
    let mut last = None;
    for attempt in 0..6 {
        match op.shifted_banded(s).factorize() {
            Ok(f) => return Ok((s, f)),
            Err(e) => {
                last = Some(e);
                let bump = scale * S::lit(1e-7) * S::lit(3.0_f64.powi(attempt));
                s = sigma + bump;
            }
        }
    }
    Err(last.unwrap())
}

fn to_pairs<S: Real>(op: &OperatorHandle<S>, nodes: &[usize], raw: Vec<RitzPair<S>>) -> Vec<Eigenpair<S>> {
    raw.into_iter().map(|p| Eigenpair { value: p.value, vector: Field::from_raw(op.grid(), op.scatter(nodes, &p.vector)), residual: p.residual }).collect()
}

fn start_vector<S: Real>(n: usize, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| S::lit(rng.gen::<f64>() + 0.5)).collect()
}

/// Eigenpairs of the pencil `K x = λ W x` nearest to `sigma` (in the sense of
/// shift-invert), locked vectors deflated.
fn nearest<S: Real>(op: &OperatorHandle<S>, factor: &LdlFactor<S>, sigma: S, k: usize, locked: &[Vec<S>], opts: &EigenOptions<S>) -> Result<Vec<RitzPair<S>>> {
    let nodes = op.interior_nodes();
    let w = op.gather(&nodes, op.grid().quad_weights());
    let start = start_vector::<S>(nodes.len(), opts.seed ^ locked.len() as u64);
    let steps = opts.max_steps.max(6 * k + 40);
    // residuals cannot go below the rounding level of W⁻¹K
    let tol = opts.tol.max(S::epsilon() * S::lit(1e4) * op.norm_estimate());
    shift_invert_lanczos(&w, sigma, k, tol, steps, &start, locked, |y| factor.solve(y), |x| op.gather(&nodes, &op.stiffness_apply(&op.scatter(&nodes, x))))
}

/// The `k` eigenvalues nearest to `center`, ascending by `|λ - center|`.
pub fn spectrum_window<S: Real>(op: &OperatorHandle<S>, k: usize, center: S) -> Result<Vec<Eigenpair<S>>> {
    spectrum_window_with(op, k, center, &EigenOptions::default())
}

pub fn spectrum_window_with<S: Real>(op: &OperatorHandle<S>, k: usize, center: S, opts: &EigenOptions<S>) -> Result<Vec<Eigenpair<S>>> {
    if k == 0 || k >= op.dim() {
        return Err(Error::InvalidArgument(format!("spectrum_window needs 1 <= k < {} (got {k})", op.dim())));
    }
    let (sigma, factor) = factor_near(op, center)?;
    let raw = nearest(op, &factor, sigma, k, &[], opts)?;
    let mut pairs = to_pairs(op, &op.interior_nodes(), raw);
    pairs.sort_by(|a, b| (a.value - center).abs().partial_cmp(&(b.value - center).abs()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(pairs)
}

/// The `k` lowest eigenpairs, ascending. Uses Sylvester inertia to make sure
/// none are skipped.
pub fn lowest_eigenpairs<S: Real>(op: &OperatorHandle<S>, k: usize, opts: &EigenOptions<S>) -> Result<Vec<Eigenpair<S>>> {
    let sigma = op.v_min().min(S::zero()) - S::one();
    let (sigma, factor) = factor_near(op, sigma)?;
    let nodes = op.interior_nodes();
    let mut pairs = nearest(op, &factor, sigma, k, &[], opts)?;
    pairs.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    Ok(to_pairs(op, &nodes, pairs))
}

/// All eigenpairs with `λ < mu`, counted by inertia at `mu`.
pub fn eigenpairs_below<S: Real>(op: &OperatorHandle<S>, mu: S, opts: &EigenOptions<S>) -> Result<Vec<Eigenpair<S>>> {
    let (mu_used, at_mu) = factor_near(op, mu)?;
    collect_below(op, mu_used, &at_mu, opts)
}

fn collect_below<S: Real>(op: &OperatorHandle<S>, mu_used: S, at_mu: &LdlFactor<S>, opts: &EigenOptions<S>) -> Result<Vec<Eigenpair<S>>> {
    let count = at_mu.negative_pivots();
    if count == 0 {
        return Ok(Vec::new());
    }
    // Shift at mu itself: the wanted eigenvalues are the ones nearest to it
    // from below. Every converged pair, above mu or not, is deflated from
    // later rounds.
    let nodes = op.interior_nodes();
    let mut found: Vec<RitzPair<S>> = Vec::new();
    let mut locked: Vec<Vec<S>> = Vec::new();
    for _round in 0..8 {
        let want = count.saturating_sub(found.len());
        if want == 0 {
            break;
        }
        let room = op.dim() - locked.len() - 1;
        let batch = nearest(op, at_mu, mu_used, (want + 2).min(room), &locked, opts)?;
        for p in batch {
            locked.push(p.vector.clone());
            if p.value < mu_used {
                found.push(p);
            }
        }
        found.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    }
    let got = found.len();
    if got != count {
        return Err(Error::numeric("spectrum", format!("inertia reports {count} eigenvalues below {mu_used}, eigensolver found {got}"), f64::NAN, got));
    }
    Ok(to_pairs(op, &nodes, found))
}

/// Negative eigenspace of `L` with its projectors.
#[derive(Clone, Debug)]
pub struct SpectralSplit<S: Real> {
    op: Arc<OperatorHandle<S>>,
    neg: Vec<Eigenpair<S>>,
    gap: S,
    zero_tol: S,
    /// Computed eigenvalues closest to 0 from above and below, ascending.
    nearby: Vec<S>,
}

/// Default `zero_tol`: `1e-8·‖L‖_est`, floored at the scalar precision.
pub fn default_zero_tol<S: Real>(op: &OperatorHandle<S>) -> S {
    let est = op.norm_estimate();
    (S::lit(1e-8) * est).max(S::epsilon() * est * S::lit(16.0))
}

/// Splits the spectrum at 0. Fails with [`Error::ConditionViolated`] when an
/// eigenvalue lies within `zero_tol` of 0.
pub fn split<S: Real>(op: &Arc<OperatorHandle<S>>, zero_tol: Option<S>) -> Result<SpectralSplit<S>> {
    split_with(op, zero_tol, &EigenOptions::default())
}

pub fn split_with<S: Real>(op: &Arc<OperatorHandle<S>>, zero_tol: Option<S>, opts: &EigenOptions<S>) -> Result<SpectralSplit<S>> {
    let zero_tol = zero_tol.unwrap_or_else(|| default_zero_tol(op));
    if !(zero_tol >= S::zero()) {
        return Err(Error::InvalidArgument("zero_tol must be non-negative".into()));
    }
    // Sylvester: eigenvalues in [-zero_tol, zero_tol] change the inertia
    // between the two ends. Exact, and no eigensolve near a singular shift.
    let below = op.shifted_banded(-zero_tol).factorize().map(|f| f.negative_pivots());
    let above = op.shifted_banded(zero_tol).factorize().map(|f| f.negative_pivots());
    let violated = match (below, above) {
        (Ok(a), Ok(b)) => a != b,
        _ => true,
    };
    if violated {
        let off = zero_tol * S::lit(4.0) + op.norm_estimate() * S::lit(1e-9);
        let eigenvalue = factor_near(op, off)
            .and_then(|(sg, f)| nearest(op, &f, sg, 1, &[], opts))
            .ok()
            .and_then(|v| v.first().map(|p| p.value.to_f64_lossy()))
            .filter(|v| v.abs() <= zero_tol.to_f64_lossy())
            .unwrap_or(0.0);
        return Err(Error::ConditionViolated { eigenvalue, zero_tol: zero_tol.to_f64_lossy() });
    }
    // Eigenvalues around 0: nearest few by shift-invert at 0.
    let (sigma, f) = match factor_near(op, S::zero()) {
        Ok(found) => found,
        Err(_) => return Err(Error::ConditionViolated { eigenvalue: 0.0, zero_tol: zero_tol.to_f64_lossy() }),
    };
    let k = 3.min(op.dim() - 1);
    let near: Vec<S> = nearest(op, &f, sigma, k, &[], opts)?.into_iter().map(|p| p.value).collect();
    let closest = near.iter().copied().fold(S::infinity(), |m, v| if v.abs() < m.abs() { v } else { m });
    if closest.abs() <= zero_tol {
        return Err(Error::ConditionViolated { eigenvalue: closest.to_f64_lossy(), zero_tol: zero_tol.to_f64_lossy() });
    }
    let mut neg = collect_below(op, sigma, &f, opts)?;
    neg.retain(|p| p.value < S::zero());
    let mut nearby = near.clone();
    nearby.extend(neg.iter().map(|p| p.value));
    nearby.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    nearby.dedup_by(|a, b| (*a - *b).abs() <= S::epsilon() * S::lit(1e3) * (a.abs() + b.abs()));
    let gap = nearby.iter().fold(S::infinity(), |m, v| m.min(v.abs()));
    Ok(SpectralSplit { op: Arc::clone(op), neg, gap, zero_tol, nearby })
}

impl<S: Real> SpectralSplit<S> {
    pub fn operator(&self) -> &Arc<OperatorHandle<S>> {
        &self.op
    }
    pub fn neg_eigenpairs(&self) -> &[Eigenpair<S>] {
        &self.neg
    }
    pub fn dim_minus(&self) -> usize {
        self.neg.len()
    }
    pub fn gap(&self) -> S {
        self.gap
    }
    pub fn zero_tol(&self) -> S {
        self.zero_tol
    }
    /// Computed eigenvalues near 0 (the negative ones plus the nearest
    /// positive ones), ascending.
    pub fn eigenvalues_near_zero(&self) -> &[S] {
        &self.nearby
    }

    /// Coefficients `⟨u, e_k⟩_W`.
    pub fn coefficients(&self, u: &Field<S>) -> Result<Vec<S>> {
        u.on_grid(self.op.grid())?;
        self.neg.iter().map(|e| u.dot_w(&e.vector)).collect()
    }

    /// `Σ c_k e_k`.
    pub fn combine(&self, coeffs: &[S]) -> Field<S> {
        let mut out = Field::zeros(self.op.grid());
        for (c, e) in coeffs.iter().zip(&self.neg) {
            out.axpy(*c, &e.vector).expect("same grid");
        }
        out
    }

    /// `(u⁺, u⁻)` with `u⁻ = Σ ⟨u, e_k⟩_W e_k`.
    pub fn project(&self, u: &Field<S>) -> Result<(Field<S>, Field<S>)> {
        let c = self.coefficients(u)?;
        let minus = self.combine(&c);
        let plus = u.sub(&minus)?;
        Ok((plus, minus))
    }

    /// `(‖u⁺‖, ‖u⁻‖)` with `‖u⁺‖² = Q(u⁺)` and `‖u⁻‖² = -Q(u⁻)`.
    pub fn split_norms(&self, u: &Field<S>) -> Result<(S, S)> {
        let (plus, minus) = self.project(u)?;
        let qp = self.op.quadratic_form(&plus)?;
        let qm = self.op.quadratic_form(&minus)?;
        let scale = self.op.norm_estimate() * u.norm_w() * u.norm_w();
        let slack = S::lit(1e-12).max(S::epsilon() * S::lit(16.0)) * scale.max(S::one());
        if qp < -slack {
            return Err(Error::numeric("split_norms", format!("Q(u+) = {qp:e} is negative"), qp.to_f64_lossy(), 0));
        }
        if qm > slack {
            return Err(Error::numeric("split_norms", format!("Q(u-) = {qm:e} is positive"), qm.to_f64_lossy(), 0));
        }
        Ok((qp.max(S::zero()).sqrt(), (-qm).max(S::zero()).sqrt()))
    }

    /// Equivalent norm `‖u‖ = (‖u⁺‖² + ‖u⁻‖²)^{1/2}`.
    pub fn norm(&self, u: &Field<S>) -> Result<S> {
        let (p, m) = self.split_norms(u)?;
        Ok((p * p + m * m).sqrt())
    }

    /// Equivalent inner product `B(u⁺, v⁺) - B(u⁻, v⁻)`.
    pub fn inner(&self, u: &Field<S>, v: &Field<S>) -> Result<S> {
        let (up, um) = self.project(u)?;
        let (vp, vm) = self.project(v)?;
        Ok(self.op.bilinear(&up, &vp)? - self.op.bilinear(&um, &vm)?)
    }
}

/// Empirical Lemma 2.1 style constants on a spectral window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalenceReport {
    pub mu: f64,
    pub window_dim: usize,
    pub samples: usize,
    /// `max |u|_∞ / ‖u‖_E`
    pub c0: f64,
    /// `max ‖u‖_E / |u|_{L²}`
    pub c1: f64,
}

/// `(|u|_∞ / ‖u‖_E, ‖u‖_E / |u|_{L²})`; both scale invariant.
pub fn norm_ratios<S: Real>(u: &Field<S>) -> Result<(S, S)> {
    let e = e_norm(u);
    let l2 = u.norm_w();
    if !(e > S::zero()) || !(l2 > S::zero()) {
        return Err(Error::InvalidArgument("norm ratios of the zero field".into()));
    }
    Ok((u.max_abs() / e, e / l2))
}

/// Samples random combinations of the eigenvectors with `λ ≤ mu`.
pub fn window_norm_equivalence<S: Real>(op: &OperatorHandle<S>, mu: S, samples: usize, seed: u64) -> Result<NormEquivalenceReport> {
    if !mu.is_finite() {
        return Err(Error::InvalidArgument("mu must be finite".into()));
    }
    let basis = eigenpairs_below(op, mu, &EigenOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut c0, mut c1) = (S::zero(), S::zero());
    let mut taken = 0;
    for s in 0..samples {
        if basis.is_empty() {
            break;
        }
        let mut u = Field::zeros(op.grid());
        if s < basis.len() {
            u = basis[s].vector.clone();
        } else {
            for e in &basis {
                let c = S::lit(rng.gen::<f64>() * 2.0 - 1.0);
                u.axpy(c, &e.vector)?;
            }
        }
        if let Ok((a, b)) = norm_ratios(&u) {
            c0 = c0.max(a);
            c1 = c1.max(b);
            taken += 1;
        }
    }
    Ok(NormEquivalenceReport { mu: mu.to_f64_lossy(), window_dim: basis.len(), samples: taken, c0: c0.to_f64_lossy(), c1: c1.to_f64_lossy() })
}
