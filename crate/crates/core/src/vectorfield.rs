//! Azimuthal lift `U(x) = (u(r,x3)/r)(-x2, x1, 0)` and the checks that tie the
//! scalar equation to the curl-curl equation.
//!
//! Under the lift `∇×U = -∂₃u e_r + (∂_r u + u/r) e_3`, so
//! `|∇×U|² = |∇u|² + u²/r² + ∂_r(u²)/r` pointwise. The last term integrates to
//! zero against `2πr dr dx3`, which is why the energies agree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_power, AxiGrid, Field, GridId};
use crate::nehari::{energy, EnergyParams};
use crate::operator::Potential;
use crate::scalar::Real;

pub type Vec3<S> = [S; 3];

#[derive(Clone, Debug)]
pub struct VectorSample<S: Real> {
    pub points: Vec<Vec3<S>>,
    pub values: Vec<Vec3<S>>,
    pub source: GridId,
}

#[inline]
fn lift_at<S: Real>(u: &Field<S>, x: Vec3<S>) -> Vec3<S> {
    let r = x[0].hypot(x[1]);
    if r == S::zero() {
        return [S::zero(); 3];
    }
    let f = u.sample(r, x[2]) / r;
    [-x[1] * f, x[0] * f, S::zero()]
}

/// Lifts `u` to the given points. Points closer than one radial cell to the
/// axis are rejected.
pub fn lift<S: Real>(u: &Field<S>, points: &[Vec3<S>]) -> Result<VectorSample<S>> {
    let dr = u.grid().dr();
    for x in points {
        if x[0].hypot(x[1]) < dr {
            return Err(Error::InvalidArgument(format!("point ({}, {}, {}) is within one cell of the axis", x[0], x[1], x[2])));
        }
    }
    Ok(VectorSample { points: points.to_vec(), values: points.iter().map(|x| lift_at(u, *x)).collect(), source: u.grid_id() })
}

/// Probe points on the shell `r ∈ [0.2, 0.8]·r_max`, `|x3| ≤ 0.5·z_max`.
pub fn shell_probes<S: Real>(grid: &AxiGrid<S>, n_r: usize, n_theta: usize, n_z: usize) -> Vec<Vec3<S>> {
    let mut out = Vec::with_capacity(n_r * n_theta * n_z);
    let frac = |i: usize, n: usize| if n <= 1 { S::lit(0.5) } else { S::from_usize_lossy(i) / S::from_usize_lossy(n - 1) };
    for a in 0..n_r {
        let r = grid.r_max() * (S::lit(0.2) + S::lit(0.6) * frac(a, n_r));
        for b in 0..n_theta {
            let th = S::TAU() * S::from_usize_lossy(b) / S::from_usize_lossy(n_theta.max(1)) + S::lit(0.3);
            for c in 0..n_z {
                let z = grid.z_max() * (S::lit(-0.5) + frac(c, n_z));
                out.push([r * th.cos(), r * th.sin(), z]);
            }
        }
    }
    out
}

/// Default difference step, two cells: narrower stencils resolve the kinks
/// of the bilinear interpolant instead of the field.
pub fn default_step<S: Real>(grid: &AxiGrid<S>) -> S {
    S::lit(2.0) * grid.dr().max(grid.dz())
}

/// Profile with closed-form first derivatives.
pub trait AnalyticProfile<S: Real>: Sync {
    fn value(&self, r: S, z: S) -> S;
    fn d_r(&self, r: S, z: S) -> S;
    fn d_z(&self, r: S, z: S) -> S;
}

/// `u = r·exp(-r² - x3²)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianProfile;

impl<S: Real> AnalyticProfile<S> for GaussianProfile {
    fn value(&self, r: S, z: S) -> S {
        r * (-(r * r + z * z)).exp()
    }
    fn d_r(&self, r: S, z: S) -> S {
        (S::one() - S::lit(2.0) * r * r) * (-(r * r + z * z)).exp()
    }
    fn d_z(&self, r: S, z: S) -> S {
        S::lit(-2.0) * z * r * (-(r * r + z * z)).exp()
    }
}

/// `J[i][j] = ∂_i U_j` of the lift of an analytic profile.
pub fn analytic_jacobian<S: Real, P: AnalyticProfile<S> + ?Sized>(profile: &P, x: Vec3<S>) -> [[S; 3]; 3] {
    let r = x[0].hypot(x[1]);
    let u = profile.value(r, x[2]);
    let f = u / r;
    let f_r = (profile.d_r(r, x[2]) - f) / r;
    let f_z = profile.d_z(r, x[2]) / r;
    let a = [-x[1], x[0], S::zero()];
    let grad_f = [f_r * x[0] / r, f_r * x[1] / r, f_z];
    let mut jac = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            jac[i][j] = grad_f[i] * a[j];
        }
    }
    jac[0][1] += f;
    jac[1][0] -= f;
    jac
}

pub fn analytic_curl<S: Real, P: AnalyticProfile<S> + ?Sized>(profile: &P, x: Vec3<S>) -> Vec3<S> {
    let j = analytic_jacobian(profile, x);
    [j[1][2] - j[2][1], j[2][0] - j[0][2], j[0][1] - j[1][0]]
}

/// Max `|∇·U|` over the probes from the analytic Jacobian.
pub fn divergence_residual_analytic<S: Real, P: AnalyticProfile<S> + ?Sized>(profile: &P, probes: &[Vec3<S>]) -> S {
    probes.iter().fold(S::zero(), |m, x| {
        let j = analytic_jacobian(profile, *x);
        m.max((j[0][0] + j[1][1] + j[2][2]).abs())
    })
}

fn fd_div<S: Real>(f: &impl Fn(Vec3<S>) -> Vec3<S>, x: Vec3<S>, h: S) -> S {
    let mut d = S::zero();
    for i in 0..3 {
        let (mut p, mut m) = (x, x);
        p[i] += h;
        m[i] -= h;
        d += (f(p)[i] - f(m)[i]) / (h + h);
    }
    d
}

fn fd_curl<S: Real>(f: &impl Fn(Vec3<S>) -> Vec3<S>, x: Vec3<S>, h: S) -> Vec3<S> {
    // d[i][j] = ∂_i U_j
    let mut d = [[S::zero(); 3]; 3];
    for i in 0..3 {
        let (mut p, mut m) = (x, x);
        p[i] += h;
        m[i] -= h;
        let (fp, fm) = (f(p), f(m));
        for j in 0..3 {
            d[i][j] = (fp[j] - fm[j]) / (h + h);
        }
    }
    [d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]]
}

fn check_probes<S: Real>(grid: &AxiGrid<S>, probes: &[Vec3<S>], h: S) -> Result<()> {
    if !(h > S::zero()) {
        return Err(Error::InvalidArgument("difference step must be positive".into()));
    }
    // nested differences reach 2h away from the probe
    let reach = h + h + grid.dr();
    if probes.iter().any(|x| x[0].hypot(x[1]) < reach) {
        return Err(Error::InvalidArgument("probe too close to the axis for the difference step".into()));
    }
    Ok(())
}

/// Max `|∇·U|` over the probes by central differences (step `h`) of the
/// interpolated lift.
pub fn divergence_residual<S: Real>(u: &Field<S>, probes: &[Vec3<S>], h: S) -> Result<S> {
    check_probes(u.grid(), probes, h)?;
    let f = |x: Vec3<S>| lift_at(u, x);
    Ok(probes.par_iter().map(|x| fd_div(&f, *x, h).abs()).reduce(S::zero, |a, b| a.max(b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurlCurlReport {
    /// `max |∇×∇×U + VU - N(U)|` over the probes.
    pub max_abs: f64,
    /// `max_abs / max |N(U)|`.
    pub normalized: f64,
    /// Same quantities for `-Δu + u/r² + Vu - N(u)` with the same nested
    /// differences of the same interpolant.
    pub scalar_max_abs: f64,
    pub scalar_normalized: f64,
    pub probes: usize,
    pub step: f64,
}

impl CurlCurlReport {
    /// `normalized / scalar_normalized` (0 when both vanish).
    pub fn ratio(&self) -> f64 {
        if self.normalized == 0.0 {
            0.0
        } else {
            self.normalized / self.scalar_normalized
        }
    }
}

/// Curl-curl residual of the lifted field by nested central differences.
/// `p = None` keeps only the quintic term.
pub fn curlcurl_residual<S: Real>(u: &Field<S>, potential: &Potential<S>, p: Option<S>, probes: &[Vec3<S>], h: S) -> Result<CurlCurlReport> {
    check_probes(u.grid(), probes, h)?;
    if let Some(p) = p {
        if !(p > S::lit(2.0) && p < S::lit(6.0)) {
            return Err(Error::InvalidArgument(format!("p = {p} must lie in (2,6)")));
        }
    }
    let nl = |a: S| p.map_or(S::zero(), |p| a.abs().powf(p - S::lit(2.0))) + a.powi(4);
    let field = |x: Vec3<S>| lift_at(u, x);
    let rows: Vec<(S, S, S, S)> = probes
        .par_iter()
        .map(|&x| {
            let curl = |y: Vec3<S>| fd_curl(&field, y, h);
            let cc = fd_curl(&curl, x, h);
            let uv = field(x);
            let r = x[0].hypot(x[1]);
            let s = u.sample(r, x[2]);
            let v = potential.eval(r, x[2]);
            let g = nl(s);
            let mut res2 = S::zero();
            let mut n2 = S::zero();
            for i in 0..3 {
                let n = g * uv[i];
                let e = cc[i] + v * uv[i] - n;
                res2 += e * e;
                n2 += n * n;
            }
            // scalar counterpart, nested central differences in (r, x3)
            let at = |dr: S, dz: S| u.sample(r + dr, x[2] + dz);
            let two = S::lit(2.0);
            let u_rr = (at(two * h, S::zero()) - two * s + at(-two * h, S::zero())) / (S::lit(4.0) * h * h);
            let u_zz = (at(S::zero(), two * h) - two * s + at(S::zero(), -two * h)) / (S::lit(4.0) * h * h);
            let u_r = (at(h, S::zero()) - at(-h, S::zero())) / (two * h);
            let sres = -u_rr - u_r / r + s / (r * r) - u_zz + v * s - g * s;
            (res2.sqrt(), n2.sqrt(), sres.abs(), (g * s).abs())
        })
        .collect();
    let fold = |k: usize| rows.iter().fold(S::zero(), |m, row| m.max([row.0, row.1, row.2, row.3][k]));
    let (vm, vn, sm, sn) = (fold(0), fold(1), fold(2), fold(3));
    let ratio = |a: S, b: S| if a == S::zero() { 0.0 } else { (a / b).to_f64_lossy() };
    Ok(CurlCurlReport {
        max_abs: vm.to_f64_lossy(),
        normalized: ratio(vm, vn),
        scalar_max_abs: sm.to_f64_lossy(),
        scalar_normalized: ratio(sm, sn),
        probes: probes.len(),
        step: h.to_f64_lossy(),
    })
}

/// `∫|∇×U|² d³x` by edge quadrature of the cylindrical curl density
/// `(∂_r u)² + (∂₃u)² + u²/r² + ∂_r(u²)/r`.
pub fn curl_energy<S: Real>(u: &Field<S>) -> S {
    let g = u.grid();
    let v = u.values();
    let (nr, nz) = (g.n_r(), g.n_z());
    let cross_coeff = S::TAU() * g.dz();
    let mut acc = g.gradient_inner(v, v) + g.centrifugal(v, v);
    for i in 1..nz - 1 {
        // ∂_r(u²)/r on each radial edge times 2π r_mid dr dz telescopes
        let mut prev = S::zero();
        for j in 0..nr {
            let cur = v[g.idx(j, i)];
            acc += cross_coeff * (cur * cur - prev * prev);
            prev = cur;
        }
    }
    acc
}

/// `I(U) = ½∫(|∇×U|² + V|U|²) - (1/p)∫|U|^p - (1/6)∫|U|⁶` from the curl
/// density, and `J(u)` from the scalar energy.
pub fn energy_equivalence<S: Real>(u: &Field<S>, params: &EnergyParams<S>) -> Result<(S, S)> {
    let op = params.operator();
    u.on_grid(op.grid())?;
    let g = u.grid();
    let vals = u.values();
    let mut pot = S::zero();
    for k in 0..g.len() {
        pot += g.quad_weights()[k] * op.v_nodes()[k] * vals[k] * vals[k];
    }
    let p = params.p();
    let i_val = S::lit(0.5) * (curl_energy(u) + pot) - integrate_power(u, p)? / p - integrate_power(u, S::lit(6.0))? / S::lit(6.0);
    Ok((i_val, energy(params, u)?))
}

/// `(∫|U|^q d³x, ∫|u|^q d³x)`, the first evaluated from the lift at the nodes
/// rotated by `theta`.
pub fn norm_transport<S: Real>(u: &Field<S>, q: S, theta: S) -> Result<(S, S)> {
    let g = u.grid();
    let (c, s) = (theta.cos(), theta.sin());
    let mut acc = S::zero();
    for k in 0..g.len() {
        let (r, z) = g.coords(k);
        let uv = lift_at(u, [r * c, r * s, z]);
        let m = (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2]).sqrt();
        acc += g.quad_weights()[k] * m.powf(q);
    }
    Ok((acc, integrate_power(u, q)?))
}
