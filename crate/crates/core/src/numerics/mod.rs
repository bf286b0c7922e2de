//! Minimal dense linear algebra and deterministic random streams.
//!
//! The estimation stack works on small dense matrices (augmented subsystem
//! states rarely exceed a few hundred entries), so the kernels here favor
//! transparent, well-tested implementations with explicit failure modes over
//! generality: Cholesky with one bounded SPD repair, a cyclic Jacobi
//! eigensolver, and the spectral `exp(−βA)` that heat-kernel diffusion needs.

mod matrix;
mod rng;

pub use matrix::{
    cholesky, cholesky_solve, cholesky_solve_matrix, cholesky_strict, matrix_exp_neg, sym_eig,
    Matrix,
};
pub use rng::{mvn_sample, Rng};

use crate::error::{Error, Result};

/// Element-wise sum of two equally long slices.
pub fn vec_add(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b, "vec_add")?;
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

/// Element-wise difference `a - b` of two equally long slices.
pub fn vec_sub(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b, "vec_sub")?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// `y + s·x` for equally long slices.
pub fn vec_axpy(y: &[f64], s: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_len(y, x, "vec_axpy")?;
    Ok(y.iter().zip(x).map(|(yi, xi)| yi + s * xi).collect())
}

/// Inner product of two equally long slices.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b, "dot")?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Largest absolute entry.
pub fn vec_linf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn check_len(a: &[f64], b: &[f64], op: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::length(format!("{op}: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}
