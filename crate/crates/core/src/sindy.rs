//! Fitting interface laws from motion data by sparse regression.
//!
//! Pipeline: measured boundary accelerations are integrated to velocities
//! and displacements ([`reconstruct_kinematics`]), each integration pass
//! followed by a first-order high-pass that kills the drift integration
//! accumulates from sensor bias. Relative kinematics then populate the
//! candidate library `[Δx, Δv, Δx³, |Δv|·Δv, Δx·Δv, 1]` and a sequentially
//! thresholded least-squares pass ([`stlsq`]) selects the active terms:
//! regress, zero every coefficient whose physical magnitude falls below the
//! threshold, refit on the survivors, repeat until the active set is stable.
//! Columns are ℓ₂-normalized for the solve so the wildly different term
//! scales share one conditioning, but thresholding always applies to the
//! *denormalized* coefficients — the threshold has physical units.

use crate::error::{Error, Result};
use crate::laws::LearnedLaw;
use crate::numerics::{cholesky_solve, cholesky_strict, Matrix};

/// Number of candidate terms in the library.
pub const LIBRARY_DIM: usize = 6;

/// Regression settings. The defaults match the reference experiments:
/// 0.05 Hz drift cutoff and a unit force-per-unit-term threshold.
#[derive(Debug, Clone)]
pub struct SindyConfig {
    /// High-pass cutoff (Hz) used during kinematic reconstruction.
    pub cutoff_hz: f64,
    /// Minimum physical coefficient magnitude retained by [`stlsq`].
    pub threshold: f64,
    /// Maximum threshold/refit rounds.
    pub max_iters: usize,
}

impl Default for SindyConfig {
    fn default() -> Self {
        SindyConfig {
            cutoff_hz: 0.05,
            threshold: 1.0,
            max_iters: 10,
        }
    }
}

/// First-order high-pass (bilinear transform of `s/(s+ωc)`):
/// `y[n] = a·(x[n] − x[n−1]) + b·y[n−1]` with `a = g/(g+ωc)`,
/// `b = (g−ωc)/(g+ωc)`, `g = 2/dt`, starting from rest.
pub fn high_pass(x: &[f64], dt: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("high_pass dt {dt}")));
    }
    if !(cutoff_hz > 0.0) || !cutoff_hz.is_finite() {
        return Err(Error::invalid(format!("high_pass cutoff {cutoff_hz} Hz")));
    }
    let g = 2.0 / dt;
    let wc = 2.0 * std::f64::consts::PI * cutoff_hz;
    let a = g / (g + wc);
    let b = (g - wc) / (g + wc);
    let mut y = Vec::with_capacity(x.len());
    let mut x_prev = 0.0;
    let mut y_prev = 0.0;
    for &xn in x {
        let yn = a * (xn - x_prev) + b * y_prev;
        y.push(yn);
        x_prev = xn;
        y_prev = yn;
    }
    Ok(y)
}

/// Cumulative trapezoid integral starting at 0.
pub fn cumulative_trapezoid(x: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("cumulative_trapezoid dt {dt}")));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for (n, &xn) in x.iter().enumerate() {
        if n > 0 {
            acc += 0.5 * dt * (x[n - 1] + xn);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Velocity and displacement from an acceleration record; each integration
/// is followed by the drift high-pass at `cutoff_hz`.
pub fn reconstruct_kinematics(
    accel: &[f64],
    dt: f64,
    cutoff_hz: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if accel.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: accel.len(),
        });
    }
    let vel = high_pass(&cumulative_trapezoid(accel, dt)?, dt, cutoff_hz)?;
    let disp = high_pass(&cumulative_trapezoid(&vel, dt)?, dt, cutoff_hz)?;
    Ok((vel, disp))
}

/// Candidate library: one row per sample, columns
/// `[Δx, Δv, Δx³, |Δv|·Δv, Δx·Δv, 1]`.
pub fn build_library(dx: &[f64], dv: &[f64]) -> Result<Matrix> {
    if dx.len() != dv.len() {
        return Err(Error::length(format!(
            "library inputs {} vs {}",
            dx.len(),
            dv.len()
        )));
    }
    let mut theta = Matrix::zeros(dx.len(), LIBRARY_DIM);
    for (n, (&x, &v)) in dx.iter().zip(dv).enumerate() {
        for (j, term) in LearnedLaw::basis(x, v).into_iter().enumerate() {
            theta.set(n, j, term);
        }
    }
    Ok(theta)
}

/// Sequentially thresholded least squares.
///
/// Returns one coefficient per library column, zero for pruned terms. An
/// empty active set is a valid (all-zero) answer; a rank-deficient active
/// library reports [`Error::RankDeficient`].
pub fn stlsq(theta: &Matrix, y: &[f64], threshold: f64, max_iters: usize) -> Result<Vec<f64>> {
    let (rows, cols) = (theta.rows(), theta.cols());
    if y.len() != rows {
        return Err(Error::length(format!(
            "stlsq target len {} vs {} rows",
            y.len(),
            rows
        )));
    }
    if rows < cols {
        return Err(Error::TooFewSamples {
            needed: cols,
            got: rows,
        });
    }
    if !(threshold >= 0.0) || max_iters == 0 {
        return Err(Error::invalid(format!(
            "stlsq threshold {threshold}, iters {max_iters}"
        )));
    }

    // Column ℓ₂ norms; an identically-zero column keeps norm 1 so it passes
    // through the solve harmlessly and gets thresholded away.
    let norms: Vec<f64> = (0..cols)
        .map(|j| {
            let s: f64 = (0..rows).map(|i| theta.get(i, j).powi(2)).sum();
            let n = s.sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();

    let mut active: Vec<usize> = (0..cols).collect();
    let mut coeffs = vec![0.0; cols];
    for _ in 0..max_iters {
        if active.is_empty() {
            return Ok(vec![0.0; cols]);
        }
        let sub = theta.select(&(0..rows).collect::<Vec<_>>(), &active);
        let mut white = sub.clone();
        for (aj, &j) in active.iter().enumerate() {
            for i in 0..rows {
                white.set(i, aj, white.get(i, aj) / norms[j]);
            }
        }
        let normal = white.transpose().matmul(&white)?;
        let l = cholesky_strict(&normal).map_err(|_| Error::RankDeficient {
            context: "stlsq normal matrix for active library columns".into(),
        })?;
        let rhs = white.transpose().matvec(y)?;
        let xi_white = cholesky_solve(&l, &rhs)?;

        coeffs = vec![0.0; cols];
        for (aj, &j) in active.iter().enumerate() {
            coeffs[j] = xi_white[aj] / norms[j];
        }
        let survivors: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| coeffs[j].abs() >= threshold)
            .collect();
        if survivors.len() == active.len() {
            return Ok(coeffs);
        }
        for j in &active {
            if !survivors.contains(j) {
                coeffs[*j] = 0.0;
            }
        }
        active = survivors;
    }
    Ok(coeffs)
}

/// Fit a [`LearnedLaw`] to relative kinematics and interface-force samples.
pub fn fit_interface_law(
    dx: &[f64],
    dv: &[f64],
    force: &[f64],
    cfg: &SindyConfig,
) -> Result<LearnedLaw> {
    if dx.len() != force.len() {
        return Err(Error::length(format!(
            "force series {} vs kinematics {}",
            force.len(),
            dx.len()
        )));
    }
    let theta = build_library(dx, dv)?;
    let coeffs = stlsq(&theta, force, cfg.threshold, cfg.max_iters)?;
    let arr: [f64; LIBRARY_DIM] = coeffs
        .try_into()
        .expect("stlsq returns one coefficient per column");
    LearnedLaw::new(arr, 1.0)
}
