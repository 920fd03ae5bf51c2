//! The discrete operator `L = -Δ + 1/r² + V` and its quadratic form.
//!
//! The stiffness matrix `K = W·L` is stored implicitly: one coefficient per
//! grid edge plus a diagonal, so `K` is symmetric by construction and no
//! symmetrization pass is needed.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxiGrid, Field};
use crate::io::{self, GridHeader};
use crate::linalg::SymBanded;
use crate::scalar::Real;

/// Named analytic potentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `a·cos(2π x3)`
    #[serde(rename = "cos2pi_z")]
    Cos2PiZ,
    /// `-a·exp(-r²)`
    WellR,
}

/// Config-level description of a potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    AnalyticPeriodic {
        expr: Builtin,
        amplitude: f64,
    },
    Sum {
        terms: Vec<PotentialSpec>,
    },
    /// Values read from an AXIFIELD file and interpolated bilinearly.
    Tabulated {
        path: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Constant,
    AnalyticPeriodic,
    Tabulated,
}

#[derive(Clone, Debug)]
struct Table<S: Real> {
    header: GridHeader,
    dr: S,
    dz: S,
    values: Vec<S>,
}

impl<S: Real> Table<S> {
    fn eval(&self, r: S, z: S) -> S {
        let (nr, nz) = (self.header.n_r, self.header.n_z);
        let zmax = S::lit(self.header.z_max);
        let fr = (r / self.dr - S::one()).max(S::zero()).min(S::from_usize_lossy(nr - 1));
        let fz = ((z + zmax) / self.dz).max(S::zero()).min(S::from_usize_lossy(nz - 1));
        let j0 = fr.floor().to_usize().unwrap_or(0).min(nr - 2);
        let i0 = fz.floor().to_usize().unwrap_or(0).min(nz - 2);
        let tr = fr - S::from_usize_lossy(j0);
        let tz = fz - S::from_usize_lossy(i0);
        let v = |j: usize, i: usize| self.values[j * nz + i];
        let one = S::one();
        (one - tr) * ((one - tz) * v(j0, i0) + tz * v(j0, i0 + 1)) + tr * ((one - tz) * v(j0 + 1, i0) + tz * v(j0 + 1, i0 + 1))
    }
}

#[derive(Clone, Debug)]
enum Term<S: Real> {
    Constant(S),
    Cos2PiZ(S),
    WellR(S),
    Table(Arc<Table<S>>),
}

/// A bounded potential `V(r, x3)`.
#[derive(Clone, Debug)]
pub struct Potential<S: Real> {
    spec: PotentialSpec,
    terms: Vec<Term<S>>,
}

impl<S: Real> Potential<S> {
    pub fn zero() -> Self {
        Self::constant(S::zero())
    }

    pub fn constant(value: S) -> Self {
        Self { spec: PotentialSpec::Constant { value: value.to_f64_lossy() }, terms: vec![Term::Constant(value)] }
    }

    pub fn cos2pi_z(amplitude: S) -> Self {
        Self { spec: PotentialSpec::AnalyticPeriodic { expr: Builtin::Cos2PiZ, amplitude: amplitude.to_f64_lossy() }, terms: vec![Term::Cos2PiZ(amplitude)] }
    }

    pub fn well_r(amplitude: S) -> Self {
        Self { spec: PotentialSpec::AnalyticPeriodic { expr: Builtin::WellR, amplitude: amplitude.to_f64_lossy() }, terms: vec![Term::WellR(amplitude)] }
    }

    pub fn sum(parts: Vec<Potential<S>>) -> Self {
        let spec = PotentialSpec::Sum { terms: parts.iter().map(|p| p.spec.clone()).collect() };
        let terms = parts.into_iter().flat_map(|p| p.terms).collect();
        Self { spec, terms }
    }

    /// Tabulated potential from raw AXIFIELD contents. `path` is only kept
    /// for the descriptor.
    pub fn tabulated(header: GridHeader, values: Vec<f64>, path: impl Into<String>) -> Result<Self> {
        if header.n_r < 2 || header.n_z < 2 || header.n_r * header.n_z != values.len() {
            return Err(Error::InvalidArgument("tabulated potential has inconsistent shape".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tabulated potential is not bounded".into()));
        }
        let table = Table {
            header,
            dr: S::lit(header.r_max / header.n_r as f64),
            dz: S::lit(2.0 * header.z_max / (header.n_z as f64 - 1.0)),
            values: values.into_iter().map(S::lit).collect(),
        };
        Ok(Self { spec: PotentialSpec::Tabulated { path: path.into() }, terms: vec![Term::Table(Arc::new(table))] })
    }

    /// Builds a potential from its config form; relative table paths resolve
    /// against `base`.
    pub fn from_spec(spec: &PotentialSpec, base: Option<&Path>) -> Result<Self> {
        let check = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(S::lit(x))
            } else {
                Err(Error::InvalidArgument(format!("{what} must be finite")))
            }
        };
        match spec {
            PotentialSpec::Constant { value } => Ok(Self::constant(check(*value, "value")?)),
            PotentialSpec::AnalyticPeriodic { expr: Builtin::Cos2PiZ, amplitude } => Ok(Self::cos2pi_z(check(*amplitude, "amplitude")?)),
            PotentialSpec::AnalyticPeriodic { expr: Builtin::WellR, amplitude } => Ok(Self::well_r(check(*amplitude, "amplitude")?)),
            PotentialSpec::Sum { terms } => {
                let parts = terms.iter().map(|t| Self::from_spec(t, base)).collect::<Result<Vec<_>>>()?;
                Ok(Self::sum(parts))
            }
            PotentialSpec::Tabulated { path } => {
                let full = match base {
                    Some(b) if Path::new(path).is_relative() => b.join(path),
                    _ => Path::new(path).to_path_buf(),
                };
                let (header, values) = io::read_raw(std::io::BufReader::new(std::fs::File::open(&full)?))?;
                Self::tabulated(header, values, path.clone())
            }
        }
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn kind(&self) -> PotentialKind {
        if self.terms.iter().any(|t| matches!(t, Term::Table(_))) {
            PotentialKind::Tabulated
        } else if self.terms.iter().any(|t| matches!(t, Term::Cos2PiZ(_) | Term::WellR(_))) {
            PotentialKind::AnalyticPeriodic
        } else {
            PotentialKind::Constant
        }
    }

    /// Period in x3 (1 for the periodic builtins, `None` for tables).
    pub fn period_z(&self) -> Option<S> {
        match self.kind() {
            PotentialKind::Tabulated => None,
            _ => Some(S::one()),
        }
    }

    /// Upper bound on `|V|`.
    pub fn bound(&self) -> S {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Constant(a) | Term::Cos2PiZ(a) | Term::WellR(a) => a.abs(),
                Term::Table(tb) => tb.values.iter().fold(S::zero(), |m, v| m.max(v.abs())),
            })
            .sum()
    }

    pub fn eval(&self, r: S, z: S) -> S {
        let mut v = S::zero();
        for t in &self.terms {
            v += match t {
                Term::Constant(a) => *a,
                Term::Cos2PiZ(a) => *a * (S::TAU() * z).cos(),
                Term::WellR(a) => -*a * (-r * r).exp(),
                Term::Table(tb) => tb.eval(r, z),
            };
        }
        v
    }

    pub fn is_identically_zero(&self) -> bool {
        self.terms.iter().all(|t| match t {
            Term::Constant(a) | Term::Cos2PiZ(a) | Term::WellR(a) => *a == S::zero(),
            Term::Table(tb) => tb.values.iter().all(|v| *v == S::zero()),
        })
    }
}

/// Assembled operator on a grid.
#[derive(Clone, Debug)]
pub struct OperatorHandle<S: Real> {
    grid: Arc<AxiGrid<S>>,
    potential: Potential<S>,
    v_nodes: Vec<S>,
    // diagonal of K = W·L; zero on Dirichlet nodes
    diag: Vec<S>,
    inner_is_z: bool,
}

impl<S: Real> OperatorHandle<S> {
    /// Five-point stencil for `-Δ + 1/r²` plus pointwise `V`.
    pub fn assemble(grid: &Arc<AxiGrid<S>>, potential: Potential<S>) -> Self {
        let g = &**grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let mut v_nodes = vec![S::zero(); g.len()];
        let mut diag = vec![S::zero(); g.len()];
        for k in 0..g.len() {
            let (r, z) = g.coords(k);
            v_nodes[k] = potential.eval(r, z);
        }
        for j in 0..nr - 1 {
            let r = g.r_nodes()[j];
            let edges = g.r_edge_coeff(j) + g.r_edge_coeff(j + 1) + S::lit(2.0) * g.z_edge_coeff(j);
            for i in 1..nz - 1 {
                let k = g.idx(j, i);
                diag[k] = edges + g.quad_weights()[k] * (S::one() / (r * r) + v_nodes[k]);
            }
        }
        Self { grid: Arc::clone(grid), potential, v_nodes, diag, inner_is_z: nz - 2 < nr }
    }

    pub fn grid(&self) -> &Arc<AxiGrid<S>> {
        &self.grid
    }

    pub fn potential(&self) -> &Potential<S> {
        &self.potential
    }

    /// V sampled at every node.
    pub fn v_nodes(&self) -> &[S] {
        &self.v_nodes
    }

    /// Minimum of V over interior nodes.
    pub fn v_min(&self) -> S {
        let g = &*self.grid;
        (0..g.len()).filter(|&k| !g.is_boundary(k)).fold(S::infinity(), |m, k| m.min(self.v_nodes[k]))
    }

    /// `K u` with `K = W·L` (node layout, zero on the boundary).
    pub fn stiffness_apply(&self, u: &[S]) -> Vec<S> {
        let g = &*self.grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let mut out = vec![S::zero(); u.len()];
        for j in 0..nr - 1 {
            let ce = g.r_edge_coeff(j + 1);
            let cw = g.r_edge_coeff(j);
            let cz = g.z_edge_coeff(j);
            let east_ok = j + 1 < nr - 1;
            for i in 1..nz - 1 {
                let k = g.idx(j, i);
                let mut s = self.diag[k] * u[k];
                if east_ok {
                    s -= ce * u[k + nz];
                }
                if j > 0 {
                    s -= cw * u[k - nz];
                }
                if i + 1 < nz - 1 {
                    s -= cz * u[k + 1];
                }
                if i > 1 {
                    s -= cz * u[k - 1];
                }
                out[k] = s;
            }
        }
        out
    }

    /// `L u` as a field.
    pub fn apply(&self, u: &Field<S>) -> Result<Field<S>> {
        u.on_grid(&self.grid)?;
        let mut ku = self.stiffness_apply(u.values());
        for (v, w) in ku.iter_mut().zip(self.grid.quad_weights()) {
            *v /= *w;
        }
        Ok(Field::from_raw(&self.grid, ku))
    }

    /// `∫ |∇u|² + u²/r² + V u² dx`.
    pub fn quadratic_form(&self, u: &Field<S>) -> Result<S> {
        self.bilinear(u, u)
    }

    /// Symmetric bilinear form associated with [`Self::quadratic_form`].
    pub fn bilinear(&self, u: &Field<S>, v: &Field<S>) -> Result<S> {
        u.on_grid(&self.grid)?;
        v.on_grid(&self.grid)?;
        Ok(self.bilinear_raw(u.values(), v.values()))
    }

    pub(crate) fn bilinear_raw(&self, u: &[S], v: &[S]) -> S {
        let g = &*self.grid;
        let mut pot = S::zero();
        for k in 0..g.len() {
            pot += g.quad_weights()[k] * self.v_nodes[k] * u[k] * v[k];
        }
        g.gradient_inner(u, v) + g.centrifugal(u, v) + pot
    }

    /// Gershgorin bound on the spectral radius of `L`.
    pub fn norm_estimate(&self) -> S {
        let g = &*self.grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let mut best = S::zero();
        for j in 0..nr - 1 {
            let off = g.r_edge_coeff(j) + g.r_edge_coeff(j + 1) + S::lit(2.0) * g.z_edge_coeff(j);
            for i in 1..nz - 1 {
                let k = g.idx(j, i);
                best = best.max((self.diag[k].abs() + off) / g.quad_weights()[k]);
            }
        }
        best
    }

    /// Number of interior unknowns.
    pub fn dim(&self) -> usize {
        self.grid.interior_len()
    }

    /// Node indices of the interior unknowns in solver order. The shorter
    /// grid direction runs innermost to keep the band narrow.
    pub fn interior_nodes(&self) -> Vec<usize> {
        let g = &*self.grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let mut out = Vec::with_capacity(self.dim());
        if self.inner_is_z {
            for j in 0..nr - 1 {
                for i in 1..nz - 1 {
                    out.push(g.idx(j, i));
                }
            }
        } else {
            for i in 1..nz - 1 {
                for j in 0..nr - 1 {
                    out.push(g.idx(j, i));
                }
            }
        }
        out
    }

    /// Banded `K - σW` in solver order.
    pub fn shifted_banded(&self, sigma: S) -> SymBanded<S> {
        let g = &*self.grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let (mi, mo) = if self.inner_is_z { (nz - 2, nr - 1) } else { (nr - 1, nz - 2) };
        let mut a = SymBanded::zeros(mi * mo, mi);
        let pos = |j: usize, i: usize| if self.inner_is_z { j * mi + (i - 1) } else { (i - 1) * mi + j };
        for j in 0..nr - 1 {
            let ce = g.r_edge_coeff(j + 1);
            let cz = g.z_edge_coeff(j);
            for i in 1..nz - 1 {
                let k = g.idx(j, i);
                let p = pos(j, i);
                a.set_diag(p, self.diag[k] - sigma * g.quad_weights()[k]);
                if j + 1 < nr - 1 {
                    let q = pos(j + 1, i);
                    a.set_lower(p.max(q), p.min(q), -ce);
                }
                if i + 1 < nz - 1 {
                    let q = pos(j, i + 1);
                    a.set_lower(p.max(q), p.min(q), -cz);
                }
            }
        }
        a
    }

    /// Dense interior stiffness matrix (row-major) and interior weights, in
    /// [`Self::interior_nodes`] order. Intended for small grids and tests.
    pub fn dense_stiffness(&self) -> (Vec<S>, Vec<S>) {
        let nodes = self.interior_nodes();
        let m = nodes.len();
        let mut dense = vec![S::zero(); m * m];
        let mut e = vec![S::zero(); self.grid.len()];
        for (c, &kc) in nodes.iter().enumerate() {
            e[kc] = S::one();
            let col = self.stiffness_apply(&e);
            for (r, &kr) in nodes.iter().enumerate() {
                dense[r * m + c] = col[kr];
            }
            e[kc] = S::zero();
        }
        let w = nodes.iter().map(|&k| self.grid.quad_weights()[k]).collect();
        (dense, w)
    }

    pub(crate) fn gather(&self, nodes: &[usize], u: &[S]) -> Vec<S> {
        nodes.iter().map(|&k| u[k]).collect()
    }

    pub(crate) fn scatter(&self, nodes: &[usize], x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.grid.len()];
        for (&k, &v) in nodes.iter().zip(x) {
            out[k] = v;
        }
        out
    }
}
