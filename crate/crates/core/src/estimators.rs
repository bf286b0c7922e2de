//! Kalman-family estimators and least-squares baselines as pure step
//! functions.
//!
//! Each step consumes a prior belief, an additive input vector, and an
//! optional measurement, and returns the posterior belief; nothing is
//! mutated in place. All variants accept an explicit per-step process noise
//! (`*_with_q`) so a schedule can inflate `Q` with interface-force variance
//! before the predict without touching the model.
//!
//! Observation channels listed in `model.angular_obs` have their innovations
//! wrapped to `(-π, π]`, which keeps phase measurements continuous across
//! the wrap point.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{GaussianBelief, StateSpaceModel};
use crate::numerics::{
    cholesky, cholesky_solve_matrix, cholesky_strict, dot, vec_add, vec_linf, vec_sub, Matrix,
};

/// Unscented transform parameters `(α, β, κ)` with `λ = α²(L+κ) − L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UkfParams {
    /// The `(1, 2, 0)` preset: `λ = 0`, Gaussian-optimal `β`, no spread
    /// tuning. The mechanical-chain experiments run with this setting.
    pub fn preset_zero() -> Self {
        UkfParams {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
        }
    }

    /// The `(1, 2, 1)` preset: `λ = 1`, a slightly widened sigma spread
    /// `√(L+1)` with a positive center weight `1/(L+1)`. The oscillator
    /// network filters run with this setting.
    pub fn preset_unit() -> Self {
        UkfParams {
            alpha: 1.0,
            beta: 2.0,
            kappa: 1.0,
        }
    }

    /// Scaling parameter λ for state dimension `l`.
    pub fn lambda(&self, l: usize) -> Result<f64> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("ukf alpha {}", self.alpha)));
        }
        let l = l as f64;
        let lambda = self.alpha * self.alpha * (l + self.kappa) - l;
        if !(l + lambda > 0.0) {
            return Err(Error::invalid(format!(
                "ukf scaling L+λ = {} must be positive",
                l + lambda
            )));
        }
        Ok(lambda)
    }
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams::preset_zero()
    }
}

/// Sigma points with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: Vec<Vec<f64>>,
    pub w_mean: Vec<f64>,
    pub w_cov: Vec<f64>,
}

/// Deterministic sigma points of a belief: the mean plus `±` the columns of
/// the Cholesky factor of `(L+λ)P`.
pub fn sigma_points(belief: &GaussianBelief, params: &UkfParams) -> Result<SigmaSet> {
    let l = belief.dim();
    if l == 0 {
        return Err(Error::invalid("sigma points of empty belief"));
    }
    let lambda = params.lambda(l)?;
    let scale = l as f64 + lambda;
    let root = cholesky(&belief.cov.scale(scale)).map_err(|_| Error::NotSpd {
        context: "sigma-point covariance".into(),
    })?;

    let mut points = Vec::with_capacity(2 * l + 1);
    points.push(belief.mean.clone());
    for i in 0..l {
        let col: Vec<f64> = (0..l).map(|r| root.get(r, i)).collect();
        points.push(vec_add(&belief.mean, &col)?);
        points.push(vec_sub(&belief.mean, &col)?);
    }

    let mut w_mean = vec![1.0 / (2.0 * scale); 2 * l + 1];
    let mut w_cov = w_mean.clone();
    w_mean[0] = lambda / scale;
    w_cov[0] = lambda / scale + (1.0 - params.alpha * params.alpha + params.beta);
    Ok(SigmaSet {
        points,
        w_mean,
        w_cov,
    })
}

/// Analytic Jacobian closures `(state, input, time) -> Matrix` for the EKF;
/// when absent, central differences are used.
#[derive(Clone)]
pub struct Jacobians {
    pub transition: Arc<dyn Fn(&[f64], &[f64], f64) -> Matrix + Send + Sync>,
    pub measurement: Arc<dyn Fn(&[f64], &[f64], f64) -> Matrix + Send + Sync>,
}

/// Central-difference Jacobian of `f` at `x` with per-component step
/// `h_k = max(1e-6, 1e-6·|x_k|)`.
pub fn numeric_jacobian(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    out_dim: usize,
) -> Result<Matrix> {
    let n = x.len();
    let mut jac = Matrix::zeros(out_dim, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for k in 0..n {
        let h = (1e-6 * x[k].abs()).max(1e-6);
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        if fp.len() != out_dim || fm.len() != out_dim {
            return Err(Error::length("numeric_jacobian output length"));
        }
        for i in 0..out_dim {
            jac.set(i, k, (fp[i] - fm[i]) / (2.0 * h));
        }
        xp[k] = x[k];
        xm[k] = x[k];
    }
    Ok(jac)
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

fn wrap_angular_channels(innov: &mut [f64], channels: &[usize]) {
    for &c in channels {
        innov[c] = wrap_angle(innov[c]);
    }
}

fn check_measurement(model: &StateSpaceModel, y: &[f64]) -> Result<()> {
    if y.len() != model.obs_dim {
        return Err(Error::length(format!(
            "measurement len {} vs obs_dim {}",
            y.len(),
            model.obs_dim
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "measurement vector".into(),
        });
    }
    Ok(())
}

fn weighted_mean(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let n = points[0].len();
    let mut mean = vec![0.0; n];
    for (p, &wi) in points.iter().zip(w) {
        for i in 0..n {
            mean[i] += wi * p[i];
        }
    }
    mean
}

/// Solve `L X = B` for lower-triangular `L` (whitening step of the
/// least-squares paths).
fn forward_solve_matrix(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if l.rows() != b.rows() {
        return Err(Error::length("forward_solve rows"));
    }
    let n = l.rows();
    let mut x = Matrix::zeros(n, b.cols());
    for j in 0..b.cols() {
        for i in 0..n {
            let mut sum = b.get(i, j);
            for k in 0..i {
                sum -= l.get(i, k) * x.get(k, j);
            }
            x.set(i, j, sum / l.get(i, i));
        }
    }
    Ok(x)
}

fn forward_solve_vec(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let m = Matrix::from_rows(&b.iter().map(|v| vec![*v]).collect::<Vec<_>>())?;
    let x = forward_solve_matrix(l, &m)?;
    Ok((0..b.len()).map(|i| x.get(i, 0)).collect())
}

/// Linear Kalman filter step; requires `model.linear`.
pub fn kf_step(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
) -> Result<GaussianBelief> {
    kf_step_with_q(model, belief, u, y, &model.q)
}

/// [`kf_step`] with an explicit per-step process noise.
pub fn kf_step_with_q(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
    q: &Matrix,
) -> Result<GaussianBelief> {
    let lin = model
        .linear
        .as_ref()
        .ok_or_else(|| Error::invalid("kf_step requires a linear model"))?;
    let mut x_pred = lin.m.matvec(&belief.mean)?;
    if let Some(b) = &lin.b {
        x_pred = vec_add(&x_pred, &b.matvec(u)?)?;
    }
    let p_pred = lin
        .m
        .matmul(&belief.cov)?
        .matmul(&lin.m.transpose())?
        .add(q)?
        .symmetrized()?;

    let Some(y) = y else {
        return GaussianBelief::new(x_pred, p_pred);
    };
    check_measurement(model, y)?;

    let h = &lin.h;
    let s = h
        .matmul(&p_pred)?
        .matmul(&h.transpose())?
        .add(&model.r)?
        .symmetrized()?;
    let ls = cholesky(&s).map_err(|_| Error::NotSpd {
        context: "kf innovation covariance".into(),
    })?;
    let pht = p_pred.matmul(&h.transpose())?;
    // K = P Hᵀ S⁻¹ via S Kᵀ = (P Hᵀ)ᵀ.
    let k = cholesky_solve_matrix(&ls, &pht.transpose())?.transpose();

    let mut innov = vec_sub(y, &h.matvec(&x_pred)?)?;
    wrap_angular_channels(&mut innov, &model.angular_obs);
    let mean = vec_add(&x_pred, &k.matvec(&innov)?)?;
    let cov = p_pred
        .sub(&k.matmul(&s)?.matmul(&k.transpose())?)?
        .symmetrized()?;
    GaussianBelief::new(mean, cov)
}

/// Extended Kalman filter step: linearizes the transition at the prior mean
/// and the measurement at the predicted mean, using analytic Jacobians when
/// provided and central differences otherwise.
pub fn ekf_step(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
    t: f64,
    jacobians: Option<&Jacobians>,
) -> Result<GaussianBelief> {
    ekf_step_with_q(model, belief, u, y, t, jacobians, &model.q)
}

/// [`ekf_step`] with an explicit per-step process noise.
pub fn ekf_step_with_q(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
    t: f64,
    jacobians: Option<&Jacobians>,
    q: &Matrix,
) -> Result<GaussianBelief> {
    let f_jac = match jacobians {
        Some(j) => (j.transition)(&belief.mean, u, t),
        None => {
            let step = |x: &[f64]| model.discrete_step(x, u, t);
            numeric_jacobian(&step, &belief.mean, model.state_dim)?
        }
    };
    let x_pred = model.discrete_step(&belief.mean, u, t)?;
    let p_pred = f_jac
        .matmul(&belief.cov)?
        .matmul(&f_jac.transpose())?
        .add(q)?
        .symmetrized()?;

    let Some(y) = y else {
        return GaussianBelief::new(x_pred, p_pred);
    };
    check_measurement(model, y)?;

    let t_obs = t + model.dt;
    let h_jac = match jacobians {
        Some(j) => (j.measurement)(&x_pred, u, t_obs),
        None => {
            let meas = |x: &[f64]| model.predict_measurement(x, u, t_obs);
            numeric_jacobian(&meas, &x_pred, model.obs_dim)?
        }
    };
    let s = h_jac
        .matmul(&p_pred)?
        .matmul(&h_jac.transpose())?
        .add(&model.r)?
        .symmetrized()?;
    let ls = cholesky(&s).map_err(|_| Error::NotSpd {
        context: "ekf innovation covariance".into(),
    })?;
    let pht = p_pred.matmul(&h_jac.transpose())?;
    let k = cholesky_solve_matrix(&ls, &pht.transpose())?.transpose();

    let mut innov = vec_sub(y, &model.predict_measurement(&x_pred, u, t_obs)?)?;
    wrap_angular_channels(&mut innov, &model.angular_obs);
    let mean = vec_add(&x_pred, &k.matvec(&innov)?)?;
    let cov = p_pred
        .sub(&k.matmul(&s)?.matmul(&k.transpose())?)?
        .symmetrized()?;
    GaussianBelief::new(mean, cov)
}

/// Unscented Kalman filter step.
///
/// Sigma points are drawn from the prior, pushed through the transition,
/// and the same propagated ensemble predicts the observation — no redraw
/// between predict and update.
pub fn ukf_step(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
    t: f64,
    params: &UkfParams,
) -> Result<GaussianBelief> {
    ukf_step_with_q(model, belief, u, y, t, params, &model.q)
}

/// [`ukf_step`] with an explicit per-step process noise.
pub fn ukf_step_with_q(
    model: &StateSpaceModel,
    belief: &GaussianBelief,
    u: &[f64],
    y: Option<&[f64]>,
    t: f64,
    params: &UkfParams,
    q: &Matrix,
) -> Result<GaussianBelief> {
    let l = belief.dim();
    if l != model.state_dim {
        return Err(Error::length("ukf belief dim vs model dim"));
    }
    let sig = sigma_points(belief, params)?;
    let mut propagated = Vec::with_capacity(sig.points.len());
    for p in &sig.points {
        propagated.push(model.discrete_step(p, u, t)?);
    }
    let x_pred = weighted_mean(&propagated, &sig.w_mean);
    let mut p_pred = q.clone();
    for (j, p) in propagated.iter().enumerate() {
        let d = vec_sub(p, &x_pred)?;
        p_pred.add_scaled_outer(sig.w_cov[j], &d, &d)?;
    }
    let p_pred = p_pred.symmetrized()?;

    let Some(y) = y else {
        return GaussianBelief::new(x_pred, p_pred);
    };
    check_measurement(model, y)?;

    let t_obs = t + model.dt;
    let mut observed = Vec::with_capacity(propagated.len());
    for p in &propagated {
        observed.push(model.predict_measurement(p, u, t_obs)?);
    }
    let y_pred = weighted_mean(&observed, &sig.w_mean);
    let mut pyy = model.r.clone();
    let mut pxy = Matrix::zeros(l, model.obs_dim);
    for j in 0..propagated.len() {
        let dy = vec_sub(&observed[j], &y_pred)?;
        let dx = vec_sub(&propagated[j], &x_pred)?;
        pyy.add_scaled_outer(sig.w_cov[j], &dy, &dy)?;
        pxy.add_scaled_outer(sig.w_cov[j], &dx, &dy)?;
    }
    let pyy = pyy.symmetrized()?;
    let ls = cholesky(&pyy).map_err(|_| Error::NotSpd {
        context: "ukf innovation covariance".into(),
    })?;
    let k = cholesky_solve_matrix(&ls, &pxy.transpose())?.transpose();

    let mut innov = vec_sub(y, &y_pred)?;
    wrap_angular_channels(&mut innov, &model.angular_obs);
    let mean = vec_add(&x_pred, &k.matvec(&innov)?)?;
    let cov = p_pred
        .sub(&k.matmul(&pyy)?.matmul(&k.transpose())?)?
        .symmetrized()?;
    GaussianBelief::new(mean, cov)
}

/// Single linearized weighted-least-squares correction of a propagated
/// state: `x⁺ = x̂ + (JᵀR⁻¹J)⁻¹ JᵀR⁻¹ (y − h(x̂))`.
pub fn wls_step(
    model: &StateSpaceModel,
    x_pred: &[f64],
    u: &[f64],
    y: &[f64],
    t_obs: f64,
) -> Result<Vec<f64>> {
    check_measurement(model, y)?;
    let (delta, _) = gauss_newton_direction(model, x_pred, u, y, t_obs)?;
    vec_add(x_pred, &delta)
}

/// Re-linearized damped Gauss–Newton refinement of [`wls_step`].
///
/// Runs up to `iters` relinearizations; a step that increases the whitened
/// residual norm is scaled by `damping` until it no longer does.
pub fn wnls_step(
    model: &StateSpaceModel,
    x_pred: &[f64],
    u: &[f64],
    y: &[f64],
    t_obs: f64,
    iters: usize,
    damping: f64,
) -> Result<Vec<f64>> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::invalid(format!(
            "wnls damping {damping} must lie in (0, 1)"
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("wnls needs at least one iteration"));
    }
    check_measurement(model, y)?;

    let mut x = x_pred.to_vec();
    let mut resid = whitened_residual_norm2(model, &x, u, y, t_obs)?;
    for _ in 0..iters {
        let (delta, _) = gauss_newton_direction(model, &x, u, y, t_obs)?;
        if vec_linf(&delta) <= 1e-14 * (1.0 + vec_linf(&x)) {
            break;
        }
        let mut scale = 1.0;
        loop {
            let candidate = crate::numerics::vec_axpy(&x, scale, &delta)?;
            let cand_resid = whitened_residual_norm2(model, &candidate, u, y, t_obs)?;
            if cand_resid <= resid * (1.0 + 1e-12) {
                x = candidate;
                resid = cand_resid;
                break;
            }
            scale *= damping;
            if scale < 1e-14 {
                return Err(Error::NonConvergence {
                    context: "wnls damping exhausted without residual decrease".into(),
                });
            }
        }
    }
    Ok(x)
}

/// Gauss–Newton direction and the whitened Jacobian used to compute it.
fn gauss_newton_direction(
    model: &StateSpaceModel,
    x: &[f64],
    u: &[f64],
    y: &[f64],
    t_obs: f64,
) -> Result<(Vec<f64>, Matrix)> {
    let jac = match &model.linear {
        Some(lin) => lin.h.clone(),
        None => {
            let meas = |xx: &[f64]| model.predict_measurement(xx, u, t_obs);
            numeric_jacobian(&meas, x, model.obs_dim)?
        }
    };
    let lr = cholesky(&model.r).map_err(|_| Error::NotSpd {
        context: "wls measurement noise".into(),
    })?;
    let white_j = forward_solve_matrix(&lr, &jac)?;
    let mut innov = vec_sub(y, &model.predict_measurement(x, u, t_obs)?)?;
    wrap_angular_channels(&mut innov, &model.angular_obs);
    let white_r = forward_solve_vec(&lr, &innov)?;

    let normal = white_j.transpose().matmul(&white_j)?;
    let ln = cholesky_strict(&normal).map_err(|_| Error::RankDeficient {
        context: "wls normal matrix singular at linearization point".into(),
    })?;
    let rhs = white_j.transpose().matvec(&white_r)?;
    let delta = crate::numerics::cholesky_solve(&ln, &rhs)?;
    Ok((delta, white_j))
}

fn whitened_residual_norm2(
    model: &StateSpaceModel,
    x: &[f64],
    u: &[f64],
    y: &[f64],
    t_obs: f64,
) -> Result<f64> {
    let lr = cholesky(&model.r).map_err(|_| Error::NotSpd {
        context: "wls measurement noise".into(),
    })?;
    let mut innov = vec_sub(y, &model.predict_measurement(x, u, t_obs)?)?;
    wrap_angular_channels(&mut innov, &model.angular_obs);
    let white = forward_solve_vec(&lr, &innov)?;
    dot(&white, &white)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Dynamics, LinearParts};
    use crate::numerics::Rng;
    use std::sync::Arc;

    /// Linear model x⁺ = M x, y = H x with the given noises.
    fn linear_model(m: Matrix, h: Matrix, q: Matrix, r: Matrix) -> StateSpaceModel {
        let n = m.rows();
        let obs = h.rows();
        let mt = m.clone();
        let ht = h.clone();
        StateSpaceModel {
            state_dim: n,
            obs_dim: obs,
            dt: 1.0,
            dynamics: Dynamics::Discrete(Arc::new(move |x, _u, _t| mt.matvec(x).unwrap())),
            measurement: Arc::new(move |x, _u, _t| ht.matvec(x).unwrap()),
            q,
            r,
            linear: Some(LinearParts { m, h, b: None }),
            angular_obs: Vec::new(),
        }
    }

    fn random_spd(n: usize, rng: &mut Rng) -> Matrix {
        let g = Matrix::from_fn(n, n, |_, _| rng.normal());
        g.matmul(&g.transpose())
            .unwrap()
            .add(&Matrix::identity(n).scale(0.1))
            .unwrap()
    }

    #[test]
    fn kf_scalar_update_matches_conjugate_posterior() {
        // Prior N(0,1), static state, H = 1, R = 1, y = 2:
        // posterior mean 1, variance 1/2.
        let model = linear_model(
            Matrix::identity(1),
            Matrix::identity(1),
            Matrix::zeros(1, 1),
            Matrix::identity(1),
        );
        let prior = GaussianBelief::new(vec![0.0], Matrix::identity(1)).unwrap();
        let post = kf_step(&model, &prior, &[0.0], Some(&[2.0])).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-14);
        assert!((post.cov.get(0, 0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn kf_huge_measurement_noise_keeps_prior() {
        let model = linear_model(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::zeros(2, 2),
            Matrix::identity(2).scale(1e12),
        );
        let prior = GaussianBelief::new(
            vec![0.4, -0.7],
            Matrix::from_rows(&[vec![0.3, 0.05], vec![0.05, 0.2]]).unwrap(),
        )
        .unwrap();
        let post = kf_step(&model, &prior, &[0.0; 2], Some(&[5.0, -5.0])).unwrap();
        for i in 0..2 {
            assert!((post.mean[i] - prior.mean[i]).abs() < 1e-9);
        }
        assert!(post.cov.sub(&prior.cov).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn kf_zero_innovation_keeps_mean_and_shrinks_covariance() {
        let model = linear_model(
            Matrix::identity(1),
            Matrix::identity(1),
            Matrix::zeros(1, 1),
            Matrix::identity(1),
        );
        let prior = GaussianBelief::new(vec![1.5], Matrix::identity(1).scale(2.0)).unwrap();
        let post = kf_step(&model, &prior, &[0.0], Some(&[1.5])).unwrap();
        assert!((post.mean[0] - 1.5).abs() < 1e-14);
        assert!(post.cov.get(0, 0) < 2.0);
    }

    #[test]
    fn kf_update_never_inflates_trace_without_process_noise() {
        let mut rng = Rng::from_seed(42);
        for trial in 0..20 {
            let m = Matrix::from_fn(3, 3, |_, _| 0.4 * rng.normal());
            let h = Matrix::from_fn(2, 3, |_, _| rng.normal());
            let model = linear_model(m, h, Matrix::zeros(3, 3), random_spd(2, &mut rng));
            let prior = GaussianBelief::new(
                (0..3).map(|_| rng.normal()).collect(),
                random_spd(3, &mut rng),
            )
            .unwrap();
            let predicted = kf_step(&model, &prior, &[0.0; 3], None).unwrap();
            let y = vec![rng.normal(), rng.normal()];
            let post = kf_step(&model, &prior, &[0.0; 3], Some(&y)).unwrap();
            assert!(
                post.cov.trace() <= predicted.cov.trace() + 1e-12,
                "trial {trial}: update inflated trace"
            );
        }
    }

    #[test]
    fn ekf_with_analytic_jacobians_matches_kf_on_linear_system() {
        let mut rng = Rng::from_seed(7);
        let m = Matrix::from_fn(3, 3, |_, _| 0.3 * rng.normal());
        let h = Matrix::from_fn(2, 3, |_, _| rng.normal());
        let model = linear_model(
            m.clone(),
            h.clone(),
            random_spd(3, &mut rng).scale(0.01),
            random_spd(2, &mut rng),
        );
        let jac = Jacobians {
            transition: Arc::new(move |_, _, _| m.clone()),
            measurement: Arc::new(move |_, _, _| h.clone()),
        };
        let mut bel_kf = GaussianBelief::new(vec![0.1, -0.2, 0.3], random_spd(3, &mut rng)).unwrap();
        let mut bel_ekf = bel_kf.clone();
        for step in 0..20 {
            let y = vec![rng.normal(), rng.normal()];
            bel_kf = kf_step(&model, &bel_kf, &[0.0; 3], Some(&y)).unwrap();
            bel_ekf = ekf_step(&model, &bel_ekf, &[0.0; 3], Some(&y), step as f64, Some(&jac))
                .unwrap();
        }
        for i in 0..3 {
            assert!((bel_kf.mean[i] - bel_ekf.mean[i]).abs() < 1e-10);
        }
        assert!(bel_kf.cov.sub(&bel_ekf.cov).unwrap().max_abs() < 1e-10);
    }

    /// Nonlinear scalar model y = sin(x) for numeric-Jacobian checks.
    fn sine_model() -> StateSpaceModel {
        StateSpaceModel {
            state_dim: 1,
            obs_dim: 1,
            dt: 1.0,
            dynamics: Dynamics::Discrete(Arc::new(|x, _u, _t| vec![x[0]])),
            measurement: Arc::new(|x, _u, _t| vec![x[0].sin()]),
            q: Matrix::identity(1).scale(1e-4),
            r: Matrix::identity(1).scale(1e-2),
            linear: None,
            angular_obs: Vec::new(),
        }
    }

    #[test]
    fn ekf_numeric_jacobian_matches_analytic_on_sine_measurement() {
        let model = sine_model();
        let jac = Jacobians {
            transition: Arc::new(|_, _, _| Matrix::identity(1)),
            measurement: Arc::new(|x: &[f64], _: &[f64], _: f64| {
                Matrix::from_rows(&[vec![x[0].cos()]]).unwrap()
            }),
        };
        let prior = GaussianBelief::new(vec![0.4], Matrix::identity(1).scale(0.09)).unwrap();
        let y = [0.52];
        let with_analytic = ekf_step(&model, &prior, &[0.0], Some(&y), 0.0, Some(&jac)).unwrap();
        let with_numeric = ekf_step(&model, &prior, &[0.0], Some(&y), 0.0, None).unwrap();
        assert!((with_analytic.mean[0] - with_numeric.mean[0]).abs() < 1e-5);
        assert!((with_analytic.cov.get(0, 0) - with_numeric.cov.get(0, 0)).abs() < 1e-5);
    }

    #[test]
    fn sigma_weights_for_two_states_and_zero_lambda() {
        // L = 2 with the (1, 2, 0) preset: λ = 0, so w_m⁰ = 0,
        // w_c⁰ = 2, and every other weight 1/4.
        let belief = GaussianBelief::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        let sig = sigma_points(&belief, &UkfParams::preset_zero()).unwrap();
        assert_eq!(sig.points.len(), 5);
        assert!((sig.w_mean[0] - 0.0).abs() < 1e-15);
        assert!((sig.w_cov[0] - 2.0).abs() < 1e-15);
        for j in 1..5 {
            assert!((sig.w_mean[j] - 0.25).abs() < 1e-15);
            assert!((sig.w_cov[j] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_points_reproduce_mean_and_covariance() {
        let mut rng = Rng::from_seed(3);
        let cov = random_spd(4, &mut rng);
        let mean: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let belief = GaussianBelief::new(mean.clone(), cov.clone()).unwrap();
        let sig = sigma_points(&belief, &UkfParams::preset_zero()).unwrap();

        let emp_mean = weighted_mean(&sig.points, &sig.w_mean);
        for i in 0..4 {
            assert!((emp_mean[i] - mean[i]).abs() < 1e-12);
        }
        let mut emp_cov = Matrix::zeros(4, 4);
        for (j, p) in sig.points.iter().enumerate() {
            let d = vec_sub(p, &emp_mean).unwrap();
            emp_cov.add_scaled_outer(sig.w_cov[j], &d, &d).unwrap();
        }
        assert!(emp_cov.sub(&cov).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn sigma_points_reject_indefinite_covariance() {
        let cov = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let belief = GaussianBelief {
            mean: vec![0.0, 0.0],
            cov,
        };
        assert!(matches!(
            sigma_points(&belief, &UkfParams::preset_zero()),
            Err(Error::NotSpd { .. })
        ));
    }

    #[test]
    fn ukf_matches_kf_on_random_linear_system() {
        // Zero process noise: the reused propagated sigma points then carry
        // exactly the predicted covariance, so the unscented moments equal
        // the Kalman ones to rounding. (With Q > 0 this variant's innovation
        // covariance intentionally omits the HQHᵀ term.)
        let mut rng = Rng::from_seed(11);
        let m = Matrix::from_fn(3, 3, |_, _| 0.35 * rng.normal());
        let h = Matrix::from_fn(2, 3, |_, _| rng.normal());
        let model = linear_model(m, h, Matrix::zeros(3, 3), random_spd(2, &mut rng));
        let params = UkfParams::preset_zero();
        let mut bel_kf = GaussianBelief::new(vec![0.5, 0.0, -0.5], random_spd(3, &mut rng)).unwrap();
        let mut bel_ukf = bel_kf.clone();
        for step in 0..30 {
            let y = vec![rng.normal(), rng.normal()];
            bel_kf = kf_step(&model, &bel_kf, &[0.0; 3], Some(&y)).unwrap();
            bel_ukf =
                ukf_step(&model, &bel_ukf, &[0.0; 3], Some(&y), step as f64, &params).unwrap();
        }
        for i in 0..3 {
            assert!(
                (bel_kf.mean[i] - bel_ukf.mean[i]).abs() < 1e-8,
                "mean component {i} diverged"
            );
        }
        assert!(bel_kf.cov.sub(&bel_ukf.cov).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn ukf_posterior_covariance_is_symmetric_psd() {
        let mut rng = Rng::from_seed(5);
        let model = sine_model();
        let mut belief = GaussianBelief::new(vec![0.3], Matrix::identity(1).scale(0.2)).unwrap();
        for step in 0..50 {
            let y = [(0.3_f64 + 0.01 * step as f64).sin() + 0.01 * rng.normal()];
            belief = ukf_step(
                &model,
                &belief,
                &[0.0],
                Some(&y),
                step as f64,
                &UkfParams::preset_zero(),
            )
            .unwrap();
            assert_eq!(belief.cov.asymmetry(), 0.0);
            assert!(belief.cov.get(0, 0) > 0.0);
        }
    }

    #[test]
    fn wrap_angle_maps_to_half_open_interval() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_angle(-0.1) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn angular_innovation_wrapping_prevents_phase_jump() {
        use std::f64::consts::PI;
        // Predicted phase near +π, measured just past the wrap at -π+0.05:
        // the raw innovation is ≈ -2π + 0.1, the wrapped one ≈ +0.1.
        let mut model = linear_model(
            Matrix::identity(1),
            Matrix::identity(1),
            Matrix::zeros(1, 1),
            Matrix::identity(1).scale(1e-4),
        );
        model.angular_obs = vec![0];
        let prior =
            GaussianBelief::new(vec![PI - 0.05], Matrix::identity(1).scale(0.01)).unwrap();
        let post = kf_step(&model, &prior, &[0.0], Some(&[-PI + 0.05])).unwrap();
        assert!(
            post.mean[0] > PI - 0.06,
            "wrapped update should nudge forward, got {}",
            post.mean[0]
        );
    }

    #[test]
    fn wls_identity_measurement_returns_observation() {
        let model = linear_model(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::zeros(2, 2),
            Matrix::identity(2).scale(4.0),
        );
        let x = wls_step(&model, &[0.0, 0.0], &[0.0; 2], &[1.5, -2.5], 0.0).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] + 2.5).abs() < 1e-12);
    }

    #[test]
    fn wls_matches_closed_form_on_overdetermined_system() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = Matrix::from_diag(&[1.0, 2.0, 0.5]);
        let model = linear_model(Matrix::identity(2), h.clone(), Matrix::zeros(2, 2), r.clone());
        let y = [1.0, 2.0, 4.0];
        let x = wls_step(&model, &[0.0, 0.0], &[0.0; 2], &y, 0.0).unwrap();

        // Closed form: (Hᵀ R⁻¹ H)⁻¹ Hᵀ R⁻¹ y.
        let r_inv = Matrix::from_diag(&[1.0, 0.5, 2.0]);
        let n = h.transpose().matmul(&r_inv).unwrap().matmul(&h).unwrap();
        let rhs = h.transpose().matmul(&r_inv).unwrap().matvec(&y).unwrap();
        let ln = cholesky(&n).unwrap();
        let expected = crate::numerics::cholesky_solve(&ln, &rhs).unwrap();
        for i in 0..2 {
            assert!((x[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn wls_zero_innovation_is_identity() {
        let model = linear_model(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::zeros(2, 2),
            Matrix::identity(2),
        );
        let x0 = [0.7, -0.3];
        let x = wls_step(&model, &x0, &[0.0; 2], &x0, 0.0).unwrap();
        assert!((x[0] - x0[0]).abs() < 1e-14);
        assert!((x[1] - x0[1]).abs() < 1e-14);
    }

    #[test]
    fn wls_reports_rank_deficiency() {
        // Second state column never observed: normal matrix singular.
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let model = linear_model(Matrix::identity(2), h, Matrix::zeros(2, 2), Matrix::identity(2));
        assert!(matches!(
            wls_step(&model, &[0.0, 0.0], &[0.0; 2], &[1.0, 2.0], 0.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn wnls_equals_wls_on_linear_system() {
        let h = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.2, 1.0], vec![0.3, 0.3]]).unwrap();
        let model = linear_model(
            Matrix::identity(2),
            h,
            Matrix::zeros(2, 2),
            Matrix::from_diag(&[0.5, 1.5, 1.0]),
        );
        let y = [0.4, -1.0, 0.2];
        let x0 = [0.1, 0.1];
        let wls = wls_step(&model, &x0, &[0.0; 2], &y, 0.0).unwrap();
        let wnls = wnls_step(&model, &x0, &[0.0; 2], &y, 0.0, 5, 0.5).unwrap();
        for i in 0..2 {
            assert!((wls[i] - wnls[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn wnls_solves_scalar_quadratic_measurement() {
        // y = x², observed 4, started at 1.5: converges to x = 2.
        let model = StateSpaceModel {
            state_dim: 1,
            obs_dim: 1,
            dt: 1.0,
            dynamics: Dynamics::Discrete(Arc::new(|x, _u, _t| vec![x[0]])),
            measurement: Arc::new(|x, _u, _t| vec![x[0] * x[0]]),
            q: Matrix::zeros(1, 1),
            r: Matrix::identity(1),
            linear: None,
            angular_obs: Vec::new(),
        };
        let x = wnls_step(&model, &[1.5], &[0.0], &[4.0], 0.0, 20, 0.5).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-6, "got {}", x[0]);
    }

    #[test]
    fn wnls_rejects_degenerate_damping() {
        let model = sine_model();
        assert!(matches!(
            wnls_step(&model, &[0.1], &[0.0], &[0.2], 0.0, 5, 0.0),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            wnls_step(&model, &[0.1], &[0.0], &[0.2], 0.0, 5, 1.0),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn ukf_rejects_invalid_alpha() {
        let params = UkfParams {
            alpha: 0.0,
            beta: 2.0,
            kappa: 0.0,
        };
        let belief = GaussianBelief::new(vec![0.0], Matrix::identity(1)).unwrap();
        assert!(sigma_points(&belief, &params).is_err());
    }
}
