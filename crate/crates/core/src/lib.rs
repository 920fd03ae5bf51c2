//! Axisymmetric ground states of the critical curl-curl equation.
//!
//! Under the ansatz `U = (u(r, x3)/r)·(-x2, x1, 0)` the vector problem reduces
//! to `-Δu + u/r² + V u = |u|^{p-2} u + u⁵` on a cylindrical `(r, x3)` grid.
//! The crate discretizes that problem, splits the spectrum of
//! `L = -Δ + 1/r² + V`, computes the critical constant `Ŝ` with its minimizer
//! `Φ`, minimizes the energy over the Nehari-Pankov manifold, and checks the
//! threshold `c < Ŝ^{3/2}/3`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

// `!(a > b)` rejects NaN along with the ordered failures.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nehari;
pub mod operator;
pub mod scalar;
pub mod sobolev;
pub mod spectral;
pub mod threshold;
pub mod vectorfield;

pub use error::{Error, Result};
pub use grid::{e_norm, free_form, integrate_power, AxiGrid, Field, GridId};
pub use nehari::{EnergyParams, GroundStateResult};
pub use operator::{OperatorHandle, Potential, PotentialKind, PotentialSpec};
pub use scalar::Real;
pub use sobolev::SobolevResult;
pub use spectral::{spectrum_window, split, Eigenpair, SpectralSplit};
pub use threshold::ScalingReport;

pub type Grid64 = grid::AxiGrid<f64>;
pub type Field64 = grid::Field<f64>;
pub type Operator64 = operator::OperatorHandle<f64>;
pub type Split64 = spectral::SpectralSplit<f64>;
pub type Grid32 = grid::AxiGrid<f32>;
pub type Field32 = grid::Field<f32>;
