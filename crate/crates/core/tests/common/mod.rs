#![allow(dead_code)]

use std::sync::Arc;

use curlground::{AxiGrid, OperatorHandle, Potential};
use nalgebra::{DMatrix, DVector};

pub fn grid(r_max: f64, z_max: f64, n_r: usize, n_z: usize) -> Arc<AxiGrid<f64>> {
    AxiGrid::shared(r_max, z_max, n_r, n_z).unwrap()
}

pub fn op(g: &Arc<AxiGrid<f64>>, v: Potential<f64>) -> Arc<OperatorHandle<f64>> {
    Arc::new(OperatorHandle::assemble(g, v))
}

/// Dense generalized eigenproblem `K x = λ W x` via `W^{-1/2} K W^{-1/2}`.
/// Returns ascending eigenvalues and W-normalized eigenvectors (interior order).
pub fn dense_eigen(op: &OperatorHandle<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let (k, w) = op.dense_stiffness();
    let m = w.len();
    let kk = DMatrix::from_row_slice(m, m, &k);
    let s = DVector::from_iterator(m, w.iter().map(|x| 1.0 / x.sqrt()));
    let h = DMatrix::from_fn(m, m, |i, j| s[i] * kk[(i, j)] * s[j]);
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx.iter().map(|&i| DVector::from_iterator(m, (0..m).map(|r| eig.eigenvectors[(r, i)] * s[r]))).collect();
    (vals, vecs)
}

/// Deterministic pseudo-random field vanishing on the boundary.
pub fn random_field(g: &Arc<AxiGrid<f64>>, seed: u64) -> curlground::Field<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    curlground::Field::from_fn(g, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}
