//! Local state-space models and Gaussian beliefs.
//!
//! A subsystem is described by a [`StateSpaceModel`]: either a discrete map
//! `x⁺ = g(x, u, t)` or a continuous vector field `ẋ = f(x, u, t)` paired
//! with an explicit integrator. The input `u` has one additive channel per
//! state component; interface couplings collected from neighbours land in
//! the channel of the state equation they drive, and the model decides how
//! that generalized force enters (e.g. divided by a modal mass).
//!
//! Estimators consume models through [`StateSpaceModel::discrete_step`], so
//! a continuous model is always advanced one `dt` at a time by its own
//! integrator; multistep bookkeeping (AB2 history) belongs to the schedule,
//! not the model.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{vec_axpy, Matrix};

/// Derivative or discrete-map closure: `(state, input, time) -> vector`.
pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;

/// Measurement closure: `(state, input, time) -> predicted observation`.
///
/// The input appears because an observed quantity (typically an
/// acceleration) can depend on the interface force acting on the measured
/// body, not only on the local state.
pub type MeasurementFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;

/// Explicit one-step integrators for continuous models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    /// Forward Euler: `x + dt·f(x)`.
    Euler,
    /// Heun predictor–corrector (explicit trapezoid).
    Heun,
    /// Two-step Adams–Bashforth; needs the previous derivative, which the
    /// caller stores. The first step bootstraps with Heun.
    Ab2,
}

/// How the model advances in time.
#[derive(Clone)]
pub enum Dynamics {
    /// Discrete map `x⁺ = g(x, u, t)`.
    Discrete(DynamicsFn),
    /// Continuous field `ẋ = f(x, u, t)` advanced by `integrator`.
    Continuous {
        f: DynamicsFn,
        integrator: IntegratorKind,
    },
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Discrete(_) => f.write_str("Dynamics::Discrete"),
            Dynamics::Continuous { integrator, .. } => {
                write!(f, "Dynamics::Continuous({integrator:?})")
            }
        }
    }
}

/// Exact linear parts for linear-filter paths: `x⁺ = M x (+ B u)`,
/// `y = H x`.
#[derive(Debug, Clone)]
pub struct LinearParts {
    pub m: Matrix,
    pub h: Matrix,
    pub b: Option<Matrix>,
}

/// Local model of one subsystem.
#[derive(Clone)]
pub struct StateSpaceModel {
    pub state_dim: usize,
    pub obs_dim: usize,
    /// Step size the model is discretized at.
    pub dt: f64,
    pub dynamics: Dynamics,
    pub measurement: MeasurementFn,
    /// Per-step process noise covariance (`state_dim` square).
    pub q: Matrix,
    /// Measurement noise covariance (`obs_dim` square).
    pub r: Matrix,
    /// Exact matrices when the model is linear (enables KF and analytic EKF).
    pub linear: Option<LinearParts>,
    /// Observation channels that are angles: innovations on these channels
    /// are wrapped to `(-π, π]` before the filter update.
    pub angular_obs: Vec<usize>,
}

impl fmt::Debug for StateSpaceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateSpaceModel")
            .field("state_dim", &self.state_dim)
            .field("obs_dim", &self.obs_dim)
            .field("dt", &self.dt)
            .field("dynamics", &self.dynamics)
            .finish_non_exhaustive()
    }
}

impl StateSpaceModel {
    /// Continuous model with no measurement (forward simulation only).
    pub fn continuous(
        state_dim: usize,
        dt: f64,
        integrator: IntegratorKind,
        f: DynamicsFn,
    ) -> Self {
        StateSpaceModel {
            state_dim,
            obs_dim: 0,
            dt,
            dynamics: Dynamics::Continuous { f, integrator },
            measurement: Arc::new(|_, _, _| Vec::new()),
            q: Matrix::zeros(state_dim, state_dim),
            r: Matrix::zeros(0, 0),
            linear: None,
            angular_obs: Vec::new(),
        }
    }

    /// Validate closure output dimensions and noise shapes.
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::invalid(format!("model dt {}", self.dt)));
        }
        if self.q.rows() != self.state_dim || self.q.cols() != self.state_dim {
            return Err(Error::length("model q shape"));
        }
        if self.r.rows() != self.obs_dim || self.r.cols() != self.obs_dim {
            return Err(Error::length("model r shape"));
        }
        if let Some(&ch) = self.angular_obs.iter().find(|&&c| c >= self.obs_dim) {
            return Err(Error::invalid(format!(
                "angular observation channel {ch} out of range"
            )));
        }
        Ok(())
    }

    /// Zero input vector of the model's width.
    pub fn zero_input(&self) -> Vec<f64> {
        vec![0.0; self.state_dim]
    }

    /// One-step discrete transition at time `t` (start of the step).
    ///
    /// Continuous models are advanced by their own integrator; AB2 models
    /// cannot be stepped here because the estimator-facing map must be
    /// self-contained (no cross-step history).
    pub fn discrete_step(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_step_args(x, u)?;
        match &self.dynamics {
            Dynamics::Discrete(g) => {
                let out = g(x, u, t);
                self.check_state_out(&out, "discrete map")
            }
            Dynamics::Continuous { f, integrator } => {
                if *integrator == IntegratorKind::Ab2 {
                    return Err(Error::invalid(
                        "AB2 models need schedule-managed history; use integrate_step",
                    ));
                }
                let (next, _) = integrate_step(f.as_ref(), x, u, t, self.dt, *integrator, None)?;
                Ok(next)
            }
        }
    }

    /// Continuous right-hand side `ẋ = f(x, u, t)` without integrating.
    ///
    /// Errors on discrete models, which carry no rate field.
    pub fn dynamics_rate(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_step_args(x, u)?;
        match &self.dynamics {
            Dynamics::Continuous { f, .. } => self.check_state_out(&f(x, u, t), "dynamics rate"),
            Dynamics::Discrete(_) => Err(Error::invalid("discrete model has no continuous rate")),
        }
    }

    /// Predicted observation at time `t` under input `u`.
    pub fn predict_measurement(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_step_args(x, u)?;
        let y = (self.measurement)(x, u, t);
        if y.len() != self.obs_dim {
            return Err(Error::length(format!(
                "measurement output {} vs obs_dim {}",
                y.len(),
                self.obs_dim
            )));
        }
        Ok(y)
    }

    fn check_step_args(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::length(format!(
                "state len {} vs model dim {}",
                x.len(),
                self.state_dim
            )));
        }
        if u.len() != self.state_dim {
            return Err(Error::length(format!(
                "input len {} vs model dim {}",
                u.len(),
                self.state_dim
            )));
        }
        Ok(())
    }

    fn check_state_out(&self, out: &[f64], what: &str) -> Result<Vec<f64>> {
        if out.len() != self.state_dim {
            return Err(Error::length(format!(
                "{what} returned {} entries, expected {}",
                out.len(),
                self.state_dim
            )));
        }
        Ok(out.to_vec())
    }
}

/// Advance `ẋ = f(x, u, t)` one step of size `dt`.
///
/// Returns the next state together with the derivative evaluated at the
/// step start, which the AB2 schedule stores as history for the following
/// step. For [`IntegratorKind::Ab2`], `prev_f` must hold the previous
/// step-start derivative; if it is `None` the step bootstraps with Heun.
pub fn integrate_step(
    f: &(dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync),
    x: &[f64],
    u: &[f64],
    t: f64,
    dt: f64,
    kind: IntegratorKind,
    prev_f: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("integrate_step dt {dt}")));
    }
    let f0 = f(x, u, t);
    if f0.len() != x.len() {
        return Err(Error::length("derivative length"));
    }
    let next = match kind {
        IntegratorKind::Euler => vec_axpy(x, dt, &f0)?,
        IntegratorKind::Heun => heun(f, x, u, t, dt, &f0)?,
        IntegratorKind::Ab2 => match prev_f {
            Some(fp) => {
                if fp.len() != x.len() {
                    return Err(Error::length("AB2 history length"));
                }
                let mut next = x.to_vec();
                for i in 0..x.len() {
                    next[i] += dt * (1.5 * f0[i] - 0.5 * fp[i]);
                }
                next
            }
            None => heun(f, x, u, t, dt, &f0)?,
        },
    };
    Ok((next, f0))
}

fn heun(
    f: &(dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync),
    x: &[f64],
    u: &[f64],
    t: f64,
    dt: f64,
    f0: &[f64],
) -> Result<Vec<f64>> {
    let predictor = vec_axpy(x, dt, f0)?;
    let f1 = f(&predictor, u, t + dt);
    if f1.len() != x.len() {
        return Err(Error::length("derivative length at predictor"));
    }
    let mut next = x.to_vec();
    for i in 0..x.len() {
        next[i] += 0.5 * dt * (f0[i] + f1[i]);
    }
    Ok(next)
}

/// Gaussian belief over a subsystem state.
///
/// The covariance is symmetrized on construction and must be finite;
/// positive semi-definiteness is the caller's responsibility (degenerate
/// zero-covariance beliefs are legal and stay deterministic).
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::length(format!(
                "belief mean len {} vs cov {}x{}",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || !cov.is_finite() {
            return Err(Error::NonFinite {
                context: "belief construction".into(),
            });
        }
        Ok(GaussianBelief {
            mean,
            cov: cov.symmetrized()?,
        })
    }

    /// Deterministic belief (zero covariance).
    pub fn deterministic(mean: Vec<f64>) -> Self {
        let n = mean.len();
        GaussianBelief {
            mean,
            cov: Matrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal standard deviations (diagonal square roots, clamped at 0).
    pub fn marginal_std(&self) -> Vec<f64> {
        self.cov
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }
}

/// Extend a belief with independent components (typically unknown
/// parameters): means are appended and the covariance grows block-diagonally
/// with the given variances.
pub fn augment_belief(
    belief: &GaussianBelief,
    means: &[f64],
    variances: &[f64],
) -> Result<GaussianBelief> {
    if means.len() != variances.len() {
        return Err(Error::length("augment_belief means vs variances"));
    }
    if let Some(v) = variances.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(format!("augment variance {v}")));
    }
    let n = belief.dim();
    let m = means.len();
    let mut mean = belief.mean.clone();
    mean.extend_from_slice(means);
    let mut cov = Matrix::zeros(n + m, n + m);
    cov.set_block(0, 0, &belief.cov)?;
    for (i, &v) in variances.iter().enumerate() {
        cov.set(n + i, n + i, v);
    }
    GaussianBelief::new(mean, cov)
}
