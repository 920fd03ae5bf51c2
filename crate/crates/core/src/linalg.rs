//! Small generic linear algebra: banded LDLᵀ, tridiagonal and dense symmetric
//! eigensolvers, dense Gaussian elimination, and shift-invert Lanczos.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric banded matrix stored by rows of its lower band, factorized in
/// place as `L D Lᵀ` without pivoting.
#[derive(Clone, Debug)]
pub struct SymBanded<S: Real> {
    n: usize,
    b: usize,
    diag: Vec<S>,
    // row k holds columns k-b .. k-1 at positions 0 .. b
    band: Vec<S>,
    factored: bool,
}

impl<S: Real> SymBanded<S> {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, diag: vec![S::zero(); n], band: vec![S::zero(); n * b], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    pub fn set_diag(&mut self, k: usize, v: S) {
        self.diag[k] = v;
    }

    /// Sets `A[k, j] = A[j, k]` for `j < k`, `k - j <= b`.
    pub fn set_lower(&mut self, k: usize, j: usize, v: S) {
        debug_assert!(j < k && k - j <= self.b);
        let pos = j + self.b - k;
        self.band[k * self.b + pos] = v;
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert!(!self.factored);
        let (n, b) = (self.n, self.b);
        let mut y: Vec<S> = (0..n).map(|k| self.diag[k] * x[k]).collect();
        for k in 0..n {
            let row = &self.band[k * b..(k + 1) * b];
            for (pos, &a) in row.iter().enumerate() {
                if a == S::zero() || pos + k < b {
                    continue;
                }
                let j = pos + k - b;
                y[k] += a * x[j];
                y[j] += a * x[k];
            }
        }
        y
    }

    /// In-place `L D Lᵀ`. Fails when a pivot is tiny relative to the diagonal
    /// scale.
    pub fn factorize(mut self) -> Result<LdlFactor<S>> {
        let (n, b) = (self.n, self.b);
        let scale = self.diag.iter().fold(S::zero(), |m, &d| m.max(d.abs())).max(S::min_positive_value());
        let tiny = scale * S::epsilon() * S::lit(64.0);
        for k in 0..n {
            let t_start = b.saturating_sub(k);
            let j_start = k.saturating_sub(b);
            // positions of row k hold v_j = L[k, j]·D[j] while the row is built
            for j in j_start..k {
                let pj = j + b - k;
                let off = k - j;
                let mut s = self.band[k * b + pj];
                if pj > t_start {
                    let (head, tail) = self.band.split_at(k * b);
                    let rowk = &tail[t_start..pj];
                    let rowj = &head[j * b + t_start + off..j * b + pj + off];
                    let mut acc = S::zero();
                    for (a, c) in rowk.iter().zip(rowj) {
                        acc += *a * *c;
                    }
                    s -= acc;
                }
                self.band[k * b + pj] = s;
            }
            let mut d = self.diag[k];
            for j in j_start..k {
                let pj = j + b - k;
                let v = self.band[k * b + pj];
                let l = v / self.diag[j];
                d -= l * v;
            }
            // convert v_j into L[k, j]
            for j in j_start..k {
                let pj = j + b - k;
                self.band[k * b + pj] /= self.diag[j];
            }
            if !(d.abs() > tiny) || !d.is_finite() {
                return Err(Error::numeric("ldlt", format!("pivot {k} is numerically zero ({d:e})"), d.abs().to_f64_lossy(), k));
            }
            self.diag[k] = d;
        }
        self.factored = true;
        Ok(LdlFactor { m: self })
    }
}

/// Factor produced by [`SymBanded::factorize`].
#[derive(Clone, Debug)]
pub struct LdlFactor<S: Real> {
    m: SymBanded<S>,
}

impl<S: Real> LdlFactor<S> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Number of negative pivots, i.e. eigenvalues below the shift (Sylvester).
    pub fn negative_pivots(&self) -> usize {
        self.m.diag.iter().filter(|d| **d < S::zero()).count()
    }

    pub fn solve_in_place(&self, x: &mut [S]) {
        let (n, b) = (self.m.n, self.m.b);
        let band = &self.m.band;
        for k in 0..n {
            let t_start = b.saturating_sub(k);
            let row = &band[k * b + t_start..(k + 1) * b];
            let base = k + t_start - b;
            let mut acc = S::zero();
            for (t, &l) in row.iter().enumerate() {
                acc += l * x[base + t];
            }
            x[k] -= acc;
        }
        for (v, d) in x.iter_mut().zip(&self.m.diag) {
            *v /= *d;
        }
        for k in (0..n).rev() {
            let t_start = b.saturating_sub(k);
            let xk = x[k];
            let row = &band[k * b + t_start..(k + 1) * b];
            let base = k + t_start - b;
            for (t, &l) in row.iter().enumerate() {
                x[base + t] -= l * xk;
            }
        }
    }

    pub fn solve(&self, x: &[S]) -> Vec<S> {
        let mut y = x.to_vec();
        self.solve_in_place(&mut y);
        y
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
/// Returns ascending eigenvalues and the eigenvectors as columns of a
/// row-major `n×n` matrix.
pub fn tridiagonal_eigen<S: Real>(diag: &[S], off: &[S]) -> Result<(Vec<S>, Vec<S>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![S::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![S::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = S::one();
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= S::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::numeric("tridiagonal_eigen", "QL did not converge", e[l].abs().to_f64_lossy(), iter));
            }
            let two = S::lit(2.0);
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(S::one());
            g = d[m] - d[l] + e[l] / (g + if g >= S::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (S::one(), S::one(), S::zero());
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let bb = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == S::zero() {
                    d[i + 1] -= p;
                    e[m] = S::zero();
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * bb;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - bb;
                for k in 0..n {
                    let zk1 = z[k * n + i + 1];
                    let zk = z[k * n + i];
                    z[k * n + i + 1] = s * zk + c * zk1;
                    z[k * n + i] = c * zk - s * zk1;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = S::zero();
        }
    }
    Ok(sort_eigen(d, z, n))
}

fn sort_eigen<S: Real>(d: Vec<S>, z: Vec<S>, n: usize) -> (Vec<S>, Vec<S>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&k| d[k]).collect();
    let mut vecs = vec![S::zero(); n * n];
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + newc] = z[r * n + oldc];
        }
    }
    (vals, vecs)
}

/// Cyclic Jacobi for small dense symmetric matrices (row-major). Ascending
/// eigenvalues, eigenvectors as columns.
pub fn symmetric_eigen<S: Real>(a: &[S], n: usize) -> (Vec<S>, Vec<S>) {
    let mut a = a.to_vec();
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }
    for _sweep in 0..100 {
        let mut off = S::zero();
        let mut total = S::zero();
        for i in 0..n {
            for j in 0..n {
                let x = a[i * n + j] * a[i * n + j];
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= S::epsilon() * S::epsilon() * total || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let t = if theta == S::zero() { S::one() } else { t };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let d = (0..n).map(|i| a[i * n + i]).collect();
    sort_eigen(d, v, n)
}

/// Solves the dense system `A x = b` (row-major, partial pivoting).
pub fn solve_dense<S: Real>(a: &[S], b: &[S], n: usize) -> Option<Vec<S>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())?;
        if m[piv * n + col] == S::zero() || !m[piv * n + col].is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f == S::zero() {
                continue;
            }
            for k in col..n {
                let t = m[col * n + k];
                m[r * n + k] -= f * t;
            }
            let t = x[col];
            x[r] -= f * t;
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in r + 1..n {
            s -= m[r * n + k] * x[k];
        }
        x[r] = s / m[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Cholesky test for negative definiteness of a small dense symmetric matrix.
pub fn is_negative_definite<S: Real>(a: &[S], n: usize) -> bool {
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = -a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > S::zero()) {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

fn dot_w<S: Real>(w: &[S], x: &[S], y: &[S]) -> S {
    let mut acc = S::zero();
    for ((a, b), c) in w.iter().zip(x).zip(y) {
        acc += *a * *b * *c;
    }
    acc
}

/// Ritz pair of a pencil `K x = λ W x`, W-normalized.
#[derive(Clone, Debug)]
pub struct RitzPair<S: Real> {
    pub value: S,
    pub vector: Vec<S>,
    pub residual: S,
}

/// Shift-invert Lanczos with full reorthogonalization for the pencil
/// `K x = λ W x` (`W` diagonal, positive).
///
/// `solve(y)` must return `(K - σW)⁻¹ y`; `kmul(x)` returns `K x`. Returns the
/// `k` eigenpairs nearest to `σ`, W-orthonormal, each with
/// `‖W⁻¹Kx - λx‖_W ≤ tol` unless the step budget runs out. Vectors in `locked`
/// (W-orthonormal) are deflated from the Krylov space.
#[allow(clippy::too_many_arguments)]
pub fn shift_invert_lanczos<S, F, G>(
    w: &[S],
    sigma: S,
    k: usize,
    tol: S,
    max_steps: usize,
    start: &[S],
    locked: &[Vec<S>],
    solve: F,
    kmul: G,
) -> Result<Vec<RitzPair<S>>>
where
    S: Real,
    F: Fn(&[S]) -> Vec<S>,
    G: Fn(&[S]) -> Vec<S>,
{
    let n = w.len();
    let k = k.min(n);
    let max_steps = max_steps.min(n).max(k);
    let mut q: Vec<Vec<S>> = Vec::new();
    let mut alpha: Vec<S> = Vec::new();
    let mut beta: Vec<S> = Vec::new();
    let mut v = start.to_vec();
    for _ in 0..2 {
        for l in locked {
            let c = dot_w(w, &v, l);
            for (a, b) in v.iter_mut().zip(l) {
                *a -= c * *b;
            }
        }
    }
    let nv = dot_w(w, &v, &v).sqrt();
    if !(nv > S::zero()) {
        return Err(Error::InvalidArgument("Lanczos start vector is zero".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut last_check = 0usize;
    let mut best: Option<Vec<RitzPair<S>>> = None;
    let mut worst_res = S::infinity();
    let check_every = 8usize;
    loop {
        let j = q.len();
        let wv: Vec<S> = v.iter().zip(w).map(|(a, b)| *a * *b).collect();
        let mut z = solve(&wv);
        let a = dot_w(w, &z, &v);
        q.push(v.clone());
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for qi in locked.iter().chain(q.iter()) {
                let c = dot_w(w, &z, qi);
                for (zz, qq) in z.iter_mut().zip(qi) {
                    *zz -= c * *qq;
                }
            }
        }
        let b = dot_w(w, &z, &z).sqrt();
        let steps = j + 1;
        let exhausted = steps >= max_steps || !(b > S::epsilon() * a.abs().max(S::min_positive_value()));
        if (steps >= k && (steps - last_check >= check_every || exhausted)) || exhausted {
            last_check = steps;
            let pairs = ritz_pairs(w, sigma, k, &q, &alpha, &beta, &kmul)?;
            let res = pairs.iter().fold(S::zero(), |m, p| m.max(p.residual));
            if pairs.len() >= k && res <= tol {
                return Ok(pairs);
            }
            if res < worst_res {
                worst_res = res;
                best = Some(pairs);
            }
            if exhausted {
                // polish on the converged subspace before giving up
                if let Some(p) = best.take() {
                    let polished = refine(w, sigma, p, tol, locked, &solve, &kmul)?;
                    let res = polished.iter().fold(S::zero(), |m, p| m.max(p.residual));
                    if res <= tol {
                        return Ok(polished);
                    }
                    return Err(Error::numeric("lanczos", format!("eigenpairs near {sigma} did not converge"), res.to_f64_lossy(), steps));
                }
                return Err(Error::numeric("lanczos", "no Ritz pairs", f64::NAN, steps));
            }
        }
        beta.push(b);
        v = z.into_iter().map(|x| x / b).collect();
    }
}

fn ritz_pairs<S, G>(w: &[S], sigma: S, k: usize, q: &[Vec<S>], alpha: &[S], beta: &[S], kmul: &G) -> Result<Vec<RitzPair<S>>>
where
    S: Real,
    G: Fn(&[S]) -> Vec<S>,
{
    let m = alpha.len();
    let (theta, y) = tridiagonal_eigen(alpha, &beta[..m.saturating_sub(1)])?;
    // largest |θ| first: nearest to σ
    let mut order: Vec<usize> = (0..m).filter(|&i| theta[i] != S::zero()).collect();
    order.sort_by(|&a, &b| theta[b].abs().partial_cmp(&theta[a].abs()).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(k);
    let n = w.len();
    let mut out = Vec::with_capacity(order.len());
    for &c in &order {
        let mut x = vec![S::zero(); n];
        for (i, qi) in q.iter().enumerate() {
            let coef = y[i * m + c];
            for (xx, qq) in x.iter_mut().zip(qi) {
                *xx += coef * *qq;
            }
        }
        out.push(finish_pair(w, x, sigma + S::one() / theta[c], kmul));
    }
    Ok(out)
}

fn finish_pair<S, G>(w: &[S], mut x: Vec<S>, guess: S, kmul: &G) -> RitzPair<S>
where
    S: Real,
    G: Fn(&[S]) -> Vec<S>,
{
    let nx = dot_w(w, &x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let kx = kmul(&x);
    // Rayleigh quotient is a better eigenvalue than σ + 1/θ
    let lam = x.iter().zip(&kx).fold(S::zero(), |a, (p, q)| a + *p * *q);
    let lam = if lam.is_finite() { lam } else { guess };
    let mut res = S::zero();
    for i in 0..w.len() {
        let r = kx[i] / w[i] - lam * x[i];
        res += w[i] * r * r;
    }
    RitzPair { value: lam, vector: x, residual: res.sqrt() }
}

/// Block inverse iteration with Rayleigh-Ritz, seeded by Lanczos output.
fn refine<S, F, G>(w: &[S], sigma: S, mut pairs: Vec<RitzPair<S>>, tol: S, locked: &[Vec<S>], solve: &F, kmul: &G) -> Result<Vec<RitzPair<S>>>
where
    S: Real,
    F: Fn(&[S]) -> Vec<S>,
    G: Fn(&[S]) -> Vec<S>,
{
    let k = pairs.len();
    for _ in 0..30 {
        let mut block: Vec<Vec<S>> = pairs
            .iter()
            .map(|p| {
                let wx: Vec<S> = p.vector.iter().zip(w).map(|(a, b)| *a * *b).collect();
                solve(&wx)
            })
            .collect();
        // W-orthonormalize (modified Gram-Schmidt, twice)
        for _ in 0..2 {
            for i in 0..k {
                for l in locked {
                    let c = dot_w(w, &block[i], l);
                    for (x, y) in block[i].iter_mut().zip(l) {
                        *x -= c * *y;
                    }
                }
                for jx in 0..i {
                    let c = dot_w(w, &block[i], &block[jx]);
                    let (a, b) = block.split_at_mut(i);
                    for (x, y) in b[0].iter_mut().zip(&a[jx]) {
                        *x -= c * *y;
                    }
                }
                let nrm = dot_w(w, &block[i], &block[i]).sqrt();
                block[i].iter_mut().for_each(|x| *x /= nrm);
            }
        }
        let kb: Vec<Vec<S>> = block.iter().map(|x| kmul(x)).collect();
        let mut h = vec![S::zero(); k * k];
        for i in 0..k {
            for jx in 0..k {
                h[i * k + jx] = block[i].iter().zip(&kb[jx]).fold(S::zero(), |a, (p, q)| a + *p * *q);
            }
        }
        for i in 0..k {
            for jx in 0..i {
                let m = S::lit(0.5) * (h[i * k + jx] + h[jx * k + i]);
                h[i * k + jx] = m;
                h[jx * k + i] = m;
            }
        }
        let (vals, vecs) = symmetric_eigen(&h, k);
        let n = w.len();
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let mut x = vec![S::zero(); n];
            for (i, b) in block.iter().enumerate() {
                let coef = vecs[i * k + c];
                for (xx, bb) in x.iter_mut().zip(b) {
                    *xx += coef * *bb;
                }
            }
            next.push(finish_pair(w, x, vals[c], kmul));
        }
        next.sort_by(|a, b| (a.value - sigma).abs().partial_cmp(&(b.value - sigma).abs()).unwrap_or(std::cmp::Ordering::Equal));
        pairs = next;
        if pairs.iter().all(|p| p.residual <= tol) {
            break;
        }
    }
    Ok(pairs)
}
