//! Truncated cylindrical grid, fields on it, and the discrete calculus shared
//! with the operator.
//!
//! Node layout: `r_j = (j + 1)·dr` for `j = 0..n_r` with `dr = r_max / n_r`, and
//! `z_i = -z_max + i·dz` for `i = 0..n_z` with `dz = 2·z_max / (n_z - 1)`.
//! Storage is `j·n_z + i` (r outer, x3 inner). The axis `r = 0` is a ghost
//! node carrying `u = 0`; the last radial column and the two end rows are
//! Dirichlet nodes stored with value zero.
//!
//! All reductions run sequentially in storage order, so sums are bitwise
//! reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fingerprint of the grid parameters. Two grids built from the same
/// parameters share an id, so fields read back from disk interoperate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridId(u64);

impl GridId {
    fn of(n_r: usize, n_z: usize, r_max: f64, z_max: f64) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(n_r as u64).to_le_bytes());
        eat(&(n_z as u64).to_le_bytes());
        eat(&r_max.to_bits().to_le_bytes());
        eat(&z_max.to_bits().to_le_bytes());
        GridId(h)
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct AxiGrid<S: Real> {
    r_max: S,
    z_max: S,
    n_r: usize,
    n_z: usize,
    dr: S,
    dz: S,
    r_nodes: Vec<S>,
    z_nodes: Vec<S>,
    quad_weights: Vec<S>,
    boundary: Vec<bool>,
    id: GridId,
}

impl<S: Real> AxiGrid<S> {
    /// Uniform tensor grid on `(0, r_max] × [-z_max, z_max]`.
    pub fn new(r_max: S, z_max: S, n_r: usize, n_z: usize) -> Result<Self> {
        if !(r_max > S::zero() && r_max.is_finite()) || !(z_max > S::zero() && z_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid extents must be positive and finite (r_max = {r_max}, z_max = {z_max})")));
        }
        if n_r < 8 || n_z < 8 {
            return Err(Error::InvalidArgument(format!("grid needs n_r, n_z >= 8 (got {n_r} x {n_z})")));
        }
        let dr = r_max / S::from_usize_lossy(n_r);
        let dz = (z_max + z_max) / S::from_usize_lossy(n_z - 1);
        let r_nodes: Vec<S> = (0..n_r).map(|j| S::from_usize_lossy(j + 1) * dr).collect();
        let z_nodes: Vec<S> = (0..n_z).map(|i| S::from_usize_lossy(i) * dz - z_max).collect();
        let half = S::lit(0.5);
        let two_pi = S::TAU();
        let mut quad_weights = Vec::with_capacity(n_r * n_z);
        let mut boundary = Vec::with_capacity(n_r * n_z);
        for (j, &r) in r_nodes.iter().enumerate() {
            let fr = if j + 1 == n_r { half } else { S::one() };
            for i in 0..n_z {
                let end = i == 0 || i + 1 == n_z;
                let fz = if end { half } else { S::one() };
                quad_weights.push(two_pi * r * dr * dz * fr * fz);
                boundary.push(end || j + 1 == n_r);
            }
        }
        let id = GridId::of(n_r, n_z, r_max.to_f64_lossy(), z_max.to_f64_lossy());
        Ok(Self { r_max, z_max, n_r, n_z, dr, dz, r_nodes, z_nodes, quad_weights, boundary, id })
    }

    pub fn shared(r_max: S, z_max: S, n_r: usize, n_z: usize) -> Result<Arc<Self>> {
        Self::new(r_max, z_max, n_r, n_z).map(Arc::new)
    }

    pub fn r_max(&self) -> S {
        self.r_max
    }
    pub fn z_max(&self) -> S {
        self.z_max
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn dr(&self) -> S {
        self.dr
    }
    pub fn dz(&self) -> S {
        self.dz
    }
    pub fn r_nodes(&self) -> &[S] {
        &self.r_nodes
    }
    pub fn z_nodes(&self) -> &[S] {
        &self.z_nodes
    }
    pub fn quad_weights(&self) -> &[S] {
        &self.quad_weights
    }
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }
    pub fn id(&self) -> GridId {
        self.id
    }
    pub fn len(&self) -> usize {
        self.n_r * self.n_z
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, j: usize, i: usize) -> usize {
        j * self.n_z + i
    }

    /// `(r, z)` of storage index `k`.
    #[inline]
    pub fn coords(&self, k: usize) -> (S, S) {
        (self.r_nodes[k / self.n_z], self.z_nodes[k % self.n_z])
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    /// Number of interior (unknown) nodes: `(n_r - 1)·(n_z - 2)`.
    pub fn interior_len(&self) -> usize {
        (self.n_r - 1) * (self.n_z - 2)
    }

    /// Index of the node mirrored in x3.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        let (j, i) = (k / self.n_z, k % self.n_z);
        j * self.n_z + (self.n_z - 1 - i)
    }

    /// Coupling of the radial edge between column `j` and `j + 1`
    /// (`j = -1` is the ghost edge to the axis): `2π r_{j+1/2} dz / dr`.
    #[inline]
    pub(crate) fn r_edge_coeff(&self, j_plus_one: usize) -> S {
        let r_mid = (S::from_usize_lossy(j_plus_one) + S::lit(0.5)) * self.dr;
        S::TAU() * r_mid * self.dz / self.dr
    }

    /// Coupling of the axial edge in column `j`: `2π r_j dr / dz`.
    #[inline]
    pub(crate) fn z_edge_coeff(&self, j: usize) -> S {
        S::TAU() * self.r_nodes[j] * self.dr / self.dz
    }

    /// Structural equality (same parameters).
    pub fn same_as(&self, other: &AxiGrid<S>) -> bool {
        self.id == other.id
    }

    /// ∫ 1 dx as implemented by the quadrature (= π r_max² · 2 z_max).
    pub fn volume(&self) -> S {
        self.quad_weights.iter().copied().sum()
    }

    /// Discrete Dirichlet form ∫ ∇u·∇v dx, edge by edge.
    ///
    /// Matches the stencil of [`crate::operator::OperatorHandle`] exactly.
    pub fn gradient_inner(&self, u: &[S], v: &[S]) -> S {
        let (nr, nz) = (self.n_r, self.n_z);
        let mut acc = S::zero();
        for i in 1..nz - 1 {
            // ghost edge to the axis
            acc += self.r_edge_coeff(0) * u[i] * v[i];
            for j in 0..nr - 1 {
                let a = self.idx(j, i);
                let b = a + nz;
                acc += self.r_edge_coeff(j + 1) * (u[b] - u[a]) * (v[b] - v[a]);
            }
        }
        for j in 0..nr - 1 {
            let c = self.z_edge_coeff(j);
            let base = j * nz;
            for i in 0..nz - 1 {
                let a = base + i;
                acc += c * (u[a + 1] - u[a]) * (v[a + 1] - v[a]);
            }
        }
        acc
    }

    /// `-Δ_h u` at interior nodes (zero on the boundary). Satisfies
    /// `⟨-Δ_h u, v⟩_W = gradient_inner(u, v)` for fields vanishing on the boundary.
    pub fn neg_laplacian(&self, u: &[S]) -> Vec<S> {
        let (nr, nz) = (self.n_r, self.n_z);
        let mut out = vec![S::zero(); u.len()];
        for j in 0..nr - 1 {
            let ce = self.r_edge_coeff(j + 1);
            let cw = self.r_edge_coeff(j);
            let cz = self.z_edge_coeff(j);
            for i in 1..nz - 1 {
                let k = self.idx(j, i);
                let west = if j == 0 { S::zero() } else { u[k - nz] };
                let s = ce * (u[k] - u[k + nz]) + cw * (u[k] - west) + cz * (u[k] - u[k + 1]) + cz * (u[k] - u[k - 1]);
                out[k] = s / self.quad_weights[k];
            }
        }
        out
    }

    /// `Σ w u v`.
    pub fn dot_w(&self, u: &[S], v: &[S]) -> S {
        let mut acc = S::zero();
        for ((w, a), b) in self.quad_weights.iter().zip(u).zip(v) {
            acc += *w * *a * *b;
        }
        acc
    }

    /// `Σ w u² / r²`.
    pub fn centrifugal(&self, u: &[S], v: &[S]) -> S {
        let nz = self.n_z;
        let mut acc = S::zero();
        for (j, &r) in self.r_nodes.iter().enumerate() {
            let inv = S::one() / (r * r);
            for k in j * nz..(j + 1) * nz {
                acc += self.quad_weights[k] * inv * u[k] * v[k];
            }
        }
        acc
    }
}

/// Scalar field on an [`AxiGrid`]; boundary values are zero.
#[derive(Clone, Debug)]
pub struct Field<S: Real> {
    grid: Arc<AxiGrid<S>>,
    values: Vec<S>,
}

impl<S: Real> PartialEq for Field<S> {
    fn eq(&self, other: &Self) -> bool {
        self.grid.id == other.grid.id && self.values == other.values
    }
}

impl<S: Real> Field<S> {
    pub fn zeros(grid: &Arc<AxiGrid<S>>) -> Self {
        Self { grid: Arc::clone(grid), values: vec![S::zero(); grid.len()] }
    }

    /// Sample `f(r, x3)` at the nodes; boundary nodes are set to zero.
    pub fn from_fn(grid: &Arc<AxiGrid<S>>, mut f: impl FnMut(S, S) -> S) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                if grid.boundary[k] {
                    S::zero()
                } else {
                    let (r, z) = grid.coords(k);
                    f(r, z)
                }
            })
            .collect();
        Self { grid: Arc::clone(grid), values }
    }

    /// Checked constructor: length, finiteness and zero boundary.
    pub fn from_values(grid: &Arc<AxiGrid<S>>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("field has {} values, grid has {} nodes", values.len(), grid.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {k}")));
        }
        if let Some(k) = (0..values.len()).find(|&k| grid.boundary[k] && values[k] != S::zero()) {
            return Err(Error::InvalidArgument(format!("nonzero value on Dirichlet node {k}")));
        }
        Ok(Self { grid: Arc::clone(grid), values })
    }

    /// Wraps raw values, zeroing the boundary. Internal fast path.
    pub(crate) fn from_raw(grid: &Arc<AxiGrid<S>>, mut values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        for (v, &b) in values.iter_mut().zip(&grid.boundary) {
            if b {
                *v = S::zero();
            }
        }
        Self { grid: Arc::clone(grid), values }
    }

    pub fn grid(&self) -> &Arc<AxiGrid<S>> {
        &self.grid
    }
    pub fn grid_id(&self) -> GridId {
        self.grid.id
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }
    pub fn into_values(self) -> Vec<S> {
        self.values
    }
    pub fn get(&self, j: usize, i: usize) -> S {
        self.values[self.grid.idx(j, i)]
    }

    pub fn same_grid(&self, other: &Field<S>) -> Result<()> {
        if self.grid.id == other.grid.id {
            Ok(())
        } else {
            Err(Error::InvalidArgument("fields live on different grids".into()))
        }
    }

    pub(crate) fn on_grid(&self, grid: &AxiGrid<S>) -> Result<()> {
        if self.grid.id == grid.id {
            Ok(())
        } else {
            Err(Error::InvalidArgument("field does not live on the operator grid".into()))
        }
    }

    pub fn scaled(&self, a: S) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|&v| a * v).collect() }
    }

    pub fn add(&self, other: &Field<S>) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect();
        Ok(Self { grid: Arc::clone(&self.grid), values })
    }

    pub fn sub(&self, other: &Field<S>) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect();
        Ok(Self { grid: Arc::clone(&self.grid), values })
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: S, x: &Field<S>) -> Result<()> {
        self.same_grid(x)?;
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == S::zero())
    }

    /// `⟨u, v⟩_W = Σ w u v`.
    pub fn dot_w(&self, other: &Field<S>) -> Result<S> {
        self.same_grid(other)?;
        Ok(self.grid.dot_w(&self.values, &other.values))
    }

    pub fn norm_w(&self) -> S {
        self.grid.dot_w(&self.values, &self.values).sqrt()
    }

    /// Bilinear interpolation at `(r, x3)`; the axis carries 0 and the field
    /// is 0 outside the grid.
    pub fn sample(&self, r: S, z: S) -> S {
        let g = &*self.grid;
        if !(r >= S::zero() && r <= g.r_max && z >= -g.z_max && z <= g.z_max) {
            return S::zero();
        }
        // radial position counted from the axis ghost node (index -1 -> 0)
        let (ja, ta) = cell(r / g.dr, g.n_r);
        let (ib, tb) = cell((z + g.z_max) / g.dz, g.n_z - 1);
        let at = |jj: usize, ii: usize| -> S {
            if jj == 0 {
                S::zero()
            } else {
                self.values[g.idx(jj - 1, ii)]
            }
        };
        let v00 = at(ja, ib);
        let v10 = at((ja + 1).min(g.n_r), ib);
        let v01 = at(ja, (ib + 1).min(g.n_z - 1));
        let v11 = at((ja + 1).min(g.n_r), (ib + 1).min(g.n_z - 1));
        let one = S::one();
        (one - ta) * ((one - tb) * v00 + tb * v01) + ta * ((one - tb) * v10 + tb * v11)
    }

    /// Even reflection average in x3.
    pub fn symmetrized(&self) -> Self {
        let g = &*self.grid;
        let half = S::lit(0.5);
        let values = (0..g.len()).map(|k| half * (self.values[k] + self.values[g.mirror(k)])).collect();
        Self { grid: Arc::clone(&self.grid), values }
    }
}

/// Splits a fractional node coordinate into (cell, offset). Offsets within
/// 1e-12 of a node snap onto it so node positions reproduce exactly.
fn cell<S: Real>(x: S, last: usize) -> (usize, S) {
    let snap = S::lit(1e-12);
    let fl = x.floor();
    let mut c = fl.to_usize().unwrap_or(0);
    let mut t = x - fl;
    if t > S::one() - snap {
        c += 1;
        t = S::zero();
    } else if t < snap {
        t = S::zero();
    }
    if c >= last {
        (last, S::zero())
    } else {
        (c, t)
    }
}

/// `∫ |u|^q dx` under the cylindrical measure.
pub fn integrate_power<S: Real>(u: &Field<S>, q: S) -> Result<S> {
    if !(q >= S::one()) {
        return Err(Error::InvalidArgument(format!("integrate_power needs q >= 1 (got {q})")));
    }
    let w = u.grid.quad_weights();
    let qi = q.to_i32().filter(|&n| S::from_i32(n) == Some(q));
    let mut acc = S::zero();
    match qi {
        Some(n) => {
            for (&wk, &v) in w.iter().zip(&u.values) {
                acc += wk * v.abs().powi(n);
            }
        }
        None => {
            for (&wk, &v) in w.iter().zip(&u.values) {
                if v != S::zero() {
                    acc += wk * v.abs().powf(q);
                }
            }
        }
    }
    Ok(acc)
}

/// `‖u‖_E = (∫ |∇u|² + u²/r² + u² dx)^{1/2}`.
pub fn e_norm<S: Real>(u: &Field<S>) -> S {
    let g = &*u.grid;
    let v = &u.values;
    (g.gradient_inner(v, v) + g.centrifugal(v, v) + g.dot_w(v, v)).sqrt()
}

/// `∫ |∇u|² + u²/r² dx`, the V-free quadratic form.
pub fn free_form<S: Real>(u: &Field<S>) -> S {
    let g = &*u.grid;
    let v = &u.values;
    g.gradient_inner(v, v) + g.centrifugal(v, v)
}
