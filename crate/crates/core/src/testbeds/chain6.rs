//! Six-DOF mass–spring–damper layout split into three two-mass subsystems.
//!
//! The layout differs from the uniform chain: masses 1, 2, 4 and 5 carry
//! their own ground connections, an extra lumped mass `m*` rides on mass 3,
//! and the 3–4 connection stiffness is the removable defect-site parameter
//! `k*`. Grouping (1,2) / (3,4) / (5,6) into subsystems V1 / V3 / V2 leaves
//! exactly two cut connections, carried by the interface forces
//!
//! ```text
//! e13 = k4 (x2 − x3) + c4 (v2 − v3)      (V1 ↔ V3)
//! e23 = k7 (x4 − x5) + c7 (v4 − v5)      (V3 ↔ V2)
//! ```
//!
//! Each subsystem estimates a slice of the physics jointly with its states:
//! V1 its internal pair (k3, c3), V3 the quadruple (m*, k6, c6, k*) and V2
//! its internal pair (k9, c9). Estimated parameters enter the augmented
//! state normalized by their true scale (random walks starting biased at a
//! configurable fraction), which keeps the augmented covariance well
//! conditioned next to metre-scale kinematics.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::UkfParams;
use crate::graph::{
    build_graph, EstimatorKind, InterfaceEdge, MessageMode, SubsystemNode, SystemGraph,
};
use crate::laws::{InterfaceLaw, SpringDamperLaw};
use crate::models::{GaussianBelief, IntegratorKind, StateSpaceModel};
use crate::numerics::{Matrix, Rng};
use crate::schedules::MeasurementSet;

use super::chain::ChainTruth;

/// Scalar forcing applied at the fourth mass.
pub type ForcingFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// True physics of the six-DOF layout. Connection `j` keeps the layout's
/// fixed role: ground springs `(k1, c1)`, `(k2, c2)`, `(k6, c6)`, `(k8, c8)`
/// on masses 1, 2, 4, 5; inter-mass connections `(k3, c3)`, `(k4, c4)`,
/// `(k*, c5)`, `(k7, c7)`, `(k9, c9)`; mass 6 hangs free.
#[derive(Debug, Clone)]
pub struct Chain6Params {
    pub masses: [f64; 6],
    /// Added lumped mass riding on the third mass.
    pub m_star: f64,
    pub k1: f64,
    pub c1: f64,
    pub k2: f64,
    pub c2: f64,
    pub k3: f64,
    pub c3: f64,
    pub k4: f64,
    pub c4: f64,
    /// Defect-site stiffness of the 3–4 connection.
    pub k_star: f64,
    pub c5: f64,
    pub k6: f64,
    pub c6: f64,
    pub k7: f64,
    pub c7: f64,
    pub k8: f64,
    pub c8: f64,
    pub k9: f64,
    pub c9: f64,
    pub dt: f64,
}

impl Default for Chain6Params {
    fn default() -> Self {
        Chain6Params {
            masses: [500.0; 6],
            m_star: 100.0,
            k1: 5.0e4,
            c1: 300.0,
            k2: 5.0e4,
            c2: 300.0,
            k3: 5.0e4,
            c3: 300.0,
            k4: 5.0e4,
            c4: 300.0,
            k_star: 5.0e4,
            c5: 300.0,
            k6: 5.0e4,
            c6: 300.0,
            k7: 5.0e4,
            c7: 300.0,
            k8: 5.0e4,
            c8: 300.0,
            k9: 5.0e4,
            c9: 300.0,
            dt: 2e-3,
        }
    }
}

impl Chain6Params {
    /// Effective inertia of each equation (`m3 + m*` on the third).
    pub fn effective_masses(&self) -> [f64; 6] {
        let mut m = self.masses;
        m[2] += self.m_star;
        m
    }

    /// Coupled accelerations under forcing `f4` at the fourth mass.
    pub fn accel(&self, x: &[f64], v: &[f64], f4: f64) -> Vec<f64> {
        let e13 = self.k4 * (x[1] - x[2]) + self.c4 * (v[1] - v[2]);
        let e23 = self.k7 * (x[3] - x[4]) + self.c7 * (v[3] - v[4]);
        let f3 = self.k3 * (x[0] - x[1]) + self.c3 * (v[0] - v[1]);
        let f5 = self.k_star * (x[2] - x[3]) + self.c5 * (v[2] - v[3]);
        let f9 = self.k9 * (x[4] - x[5]) + self.c9 * (v[4] - v[5]);
        let m = self.effective_masses();
        vec![
            (-self.k1 * x[0] - self.c1 * v[0] - f3) / m[0],
            (-self.k2 * x[1] - self.c2 * v[1] + f3 - e13) / m[1],
            (-f5 + e13) / m[2],
            (f5 - self.k6 * x[3] - self.c6 * v[3] + f4 - e23) / m[3],
            (-self.k8 * x[4] - self.c8 * v[4] - f9 + e23) / m[4],
            (f9) / m[5],
        ]
    }

    /// Heun integration of the full system from `x0 = [x, v]` (length 12).
    pub fn simulate(&self, x0: &[f64], forcing: &dyn Fn(f64) -> f64, steps: usize) -> Result<ChainTruth> {
        if x0.len() != 12 {
            return Err(Error::length(format!("six-DOF init {} vs 12", x0.len())));
        }
        let deriv = |s: &[f64], f4: f64| -> Vec<f64> {
            let (x, v) = s.split_at(6);
            let a = self.accel(x, v, f4);
            let mut ds = Vec::with_capacity(12);
            ds.extend_from_slice(v);
            ds.extend(a);
            ds
        };
        let mut state = x0.to_vec();
        let mut truth = ChainTruth {
            t: vec![0.0],
            states: vec![state.clone()],
            accels: vec![self.accel(&state[..6], &state[6..], forcing(0.0))],
        };
        for step in 0..steps {
            let t = step as f64 * self.dt;
            let d1 = deriv(&state, forcing(t));
            let mid: Vec<f64> = state
                .iter()
                .zip(&d1)
                .map(|(s, d)| s + self.dt * d)
                .collect();
            let d2 = deriv(&mid, forcing(t + self.dt));
            for i in 0..12 {
                state[i] += 0.5 * self.dt * (d1[i] + d2[i]);
            }
            truth.t.push((step + 1) as f64 * self.dt);
            truth.states.push(state.clone());
            truth
                .accels
                .push(self.accel(&state[..6], &state[6..], forcing((step + 1) as f64 * self.dt)));
        }
        Ok(truth)
    }
}

/// Three-tone forcing at the fourth mass spanning the layout's low modes.
pub fn default_forcing() -> ForcingFn {
    Arc::new(|t: f64| {
        use std::f64::consts::TAU;
        2000.0 * (TAU * 0.7 * t).sin()
            + 1500.0 * (TAU * 1.9 * t).sin()
            + 1000.0 * (TAU * 3.3 * t).sin()
    })
}

/// Estimation settings for the three-subsystem decomposition.
#[derive(Debug, Clone)]
pub struct Chain6Options {
    /// Parameters start at this fraction of their true value.
    pub init_fraction: f64,
    pub q_state: f64,
    /// Random-walk variance of each normalized parameter per step.
    pub q_param: f64,
    pub p0_state: f64,
    /// Prior variance of each normalized parameter.
    pub p0_param: f64,
    /// Acceleration noise variances per subsystem.
    pub r_v1: f64,
    pub r_v3: f64,
    pub r_v2: f64,
    pub estimator: EstimatorKind,
}

impl Default for Chain6Options {
    fn default() -> Self {
        Chain6Options {
            init_fraction: 0.7,
            q_state: 1e-8,
            q_param: 1e-8,
            p0_state: 1e-6,
            p0_param: 0.09,
            r_v1: 1e-3,
            r_v3: 1e-2,
            r_v2: 1e-3,
            estimator: EstimatorKind::Ukf(UkfParams::preset_zero()),
        }
    }
}

/// Node ids of the decomposition.
pub const CHAIN6_V1: &str = "v1";
pub const CHAIN6_V3: &str = "v3";
pub const CHAIN6_V2: &str = "v2";

fn param_block(opts: &Chain6Options, n_kin: usize, n_par: usize) -> (Matrix, Matrix) {
    let dim = n_kin + n_par;
    let mut q = Matrix::zeros(dim, dim);
    let mut p0 = Matrix::zeros(dim, dim);
    for i in 0..dim {
        let (qi, pi) = if i < n_kin {
            (opts.q_state, opts.p0_state)
        } else {
            (opts.q_param, opts.p0_param)
        };
        q.set(i, i, qi);
        p0.set(i, i, pi);
    }
    (q, p0)
}

fn init_belief(kin: &[f64], n_par: usize, opts: &Chain6Options, p0: Matrix) -> Result<GaussianBelief> {
    let mut mean = kin.to_vec();
    mean.extend(std::iter::repeat(opts.init_fraction).take(n_par));
    GaussianBelief::new(mean, p0)
}

/// Build the V1 / V3 / V2 graph around the true parameters in `params`
/// (used for the normalization scales, the known coefficients and the
/// interface laws). `init` is the true initial 12-state `[x, v]` the
/// kinematic beliefs are sliced from.
pub fn chain6_graph(
    params: &Chain6Params,
    forcing: ForcingFn,
    init: &[f64],
    opts: &Chain6Options,
) -> Result<SystemGraph> {
    if init.len() != 12 {
        return Err(Error::length(format!("six-DOF init {} vs 12", init.len())));
    }
    if !(opts.init_fraction > 0.0) {
        return Err(Error::invalid(format!(
            "parameter init fraction {}",
            opts.init_fraction
        )));
    }
    let p = params.clone();
    let dt = p.dt;

    // V1 over [x1, x2, v1, v2, κ3, γ3]: κ3 = k3 / k3_true, γ3 = c3 / c3_true.
    let v1 = {
        let (m1, m2) = (p.masses[0], p.masses[1]);
        let (k1, c1, k2, c2) = (p.k1, p.c1, p.k2, p.c2);
        let (k3_ref, c3_ref) = (p.k3, p.c3);
        let accels = move |x: &[f64], u: &[f64]| -> (f64, f64) {
            let f3 = x[4] * k3_ref * (x[0] - x[1]) + x[5] * c3_ref * (x[2] - x[3]);
            (
                (-k1 * x[0] - c1 * x[2] - f3 + u[2]) / m1,
                (-k2 * x[1] - c2 * x[3] + f3 + u[3]) / m2,
            )
        };
        let dyn_accels = accels;
        let mut model = StateSpaceModel::continuous(
            6,
            dt,
            IntegratorKind::Euler,
            Arc::new(move |x: &[f64], u: &[f64], _t: f64| {
                let (a1, a2) = dyn_accels(x, u);
                vec![x[2], x[3], a1, a2, 0.0, 0.0]
            }),
        );
        model.obs_dim = 1;
        model.measurement =
            Arc::new(move |x: &[f64], u: &[f64], _t: f64| vec![accels(x, u).1]);
        let (q, p0) = param_block(opts, 4, 2);
        model.q = q;
        model.r = Matrix::from_diag(&[opts.r_v1]);
        SubsystemNode::new(
            CHAIN6_V1,
            model,
            opts.estimator.clone(),
            init_belief(&[init[0], init[1], init[6], init[7]], 2, opts, p0)?,
        )
        .with_inertia(vec![1.0, 1.0, m1, m2, 1.0, 1.0])
    };

    // V3 over [x3, x4, v3, v4, μ, κ6, γ6, κ*]: μ = m*/m*_true scales the
    // added mass, κ* the defect-site stiffness; forcing acts on mass 4.
    let v3 = {
        let (m3, m4) = (p.masses[2], p.masses[3]);
        let m_star_ref = p.m_star;
        let (k_star_ref, c5) = (p.k_star, p.c5);
        let (k6_ref, c6_ref) = (p.k6, p.c6);
        let force = Arc::clone(&forcing);
        let accels = move |x: &[f64], u: &[f64], t: f64| -> (f64, f64) {
            let f5 = x[7] * k_star_ref * (x[0] - x[1]) + c5 * (x[2] - x[3]);
            (
                (-f5 + u[2]) / (m3 + x[4] * m_star_ref),
                (f5 - x[5] * k6_ref * x[1] - x[6] * c6_ref * x[3] + force(t) + u[3]) / m4,
            )
        };
        let dyn_accels = accels.clone();
        let mut model = StateSpaceModel::continuous(
            8,
            dt,
            IntegratorKind::Euler,
            Arc::new(move |x: &[f64], u: &[f64], t: f64| {
                let (a3, a4) = dyn_accels(x, u, t);
                vec![x[2], x[3], a3, a4, 0.0, 0.0, 0.0, 0.0]
            }),
        );
        model.obs_dim = 2;
        model.measurement = Arc::new(move |x: &[f64], u: &[f64], t: f64| {
            let (a3, a4) = accels(x, u, t);
            vec![a3, a4]
        });
        let (q, p0) = param_block(opts, 4, 4);
        model.q = q;
        model.r = Matrix::from_diag(&[opts.r_v3, opts.r_v3]);
        SubsystemNode::new(
            CHAIN6_V3,
            model,
            opts.estimator.clone(),
            init_belief(&[init[2], init[3], init[8], init[9]], 4, opts, p0)?,
        )
        .with_inertia(vec![1.0, 1.0, m3 + m_star_ref, m4, 1.0, 1.0, 1.0, 1.0])
    };

    // V2 over [x5, x6, v5, v6, κ9, γ9].
    let v2 = {
        let (m5, m6) = (p.masses[4], p.masses[5]);
        let (k8, c8) = (p.k8, p.c8);
        let (k9_ref, c9_ref) = (p.k9, p.c9);
        let accels = move |x: &[f64], u: &[f64]| -> (f64, f64) {
            let f9 = x[4] * k9_ref * (x[0] - x[1]) + x[5] * c9_ref * (x[2] - x[3]);
            (
                (-k8 * x[0] - c8 * x[2] - f9 + u[2]) / m5,
                (f9 + u[3]) / m6,
            )
        };
        let dyn_accels = accels;
        let mut model = StateSpaceModel::continuous(
            6,
            dt,
            IntegratorKind::Euler,
            Arc::new(move |x: &[f64], u: &[f64], _t: f64| {
                let (a5, a6) = dyn_accels(x, u);
                vec![x[2], x[3], a5, a6, 0.0, 0.0]
            }),
        );
        model.obs_dim = 1;
        model.measurement =
            Arc::new(move |x: &[f64], u: &[f64], _t: f64| vec![accels(x, u).0]);
        let (q, p0) = param_block(opts, 4, 2);
        model.q = q;
        model.r = Matrix::from_diag(&[opts.r_v2]);
        SubsystemNode::new(
            CHAIN6_V2,
            model,
            opts.estimator.clone(),
            init_belief(&[init[4], init[5], init[10], init[11]], 2, opts, p0)?,
        )
        .with_inertia(vec![1.0, 1.0, m5, m6, 1.0, 1.0])
    };

    // Interface forces as paired directed edges, action–reaction signs via
    // the (sender − receiver) orientation of the spring–damper law.
    let law13 = InterfaceLaw::SpringDamper(SpringDamperLaw::new(p.k4, p.c4, 1.0)?);
    let law23 = InterfaceLaw::SpringDamper(SpringDamperLaw::new(p.k7, p.c7, 1.0)?);
    let edges = vec![
        // +e13 on the third mass's equation.
        InterfaceEdge {
            sender: CHAIN6_V1.into(),
            receiver: CHAIN6_V3.into(),
            law: law13.clone(),
            mode: MessageMode::Deterministic,
            sender_selector: vec![1, 3],
            receiver_selector: vec![0, 2],
            target: 2,
        },
        // −e13 on the second mass's equation.
        InterfaceEdge {
            sender: CHAIN6_V3.into(),
            receiver: CHAIN6_V1.into(),
            law: law13,
            mode: MessageMode::Deterministic,
            sender_selector: vec![0, 2],
            receiver_selector: vec![1, 3],
            target: 3,
        },
        // +e23 on the fifth mass's equation.
        InterfaceEdge {
            sender: CHAIN6_V3.into(),
            receiver: CHAIN6_V2.into(),
            law: law23.clone(),
            mode: MessageMode::Deterministic,
            sender_selector: vec![1, 3],
            receiver_selector: vec![0, 2],
            target: 2,
        },
        // −e23 on the fourth mass's equation.
        InterfaceEdge {
            sender: CHAIN6_V2.into(),
            receiver: CHAIN6_V3.into(),
            law: law23,
            mode: MessageMode::Deterministic,
            sender_selector: vec![0, 2],
            receiver_selector: vec![1, 3],
            target: 3,
        },
    ];
    build_graph(vec![v1, v3, v2], edges)
}

/// Noisy per-subsystem acceleration series from a truth run: V1 observes
/// a₂, V3 observes (a₃, a₄), V2 observes a₅; entry `n` is the truth at
/// label `n+1` plus noise at the configured variances.
pub fn chain6_measurements(
    truth: &ChainTruth,
    opts: &Chain6Options,
    rng: &mut Rng,
) -> Result<MeasurementSet> {
    let steps = truth.states.len().saturating_sub(1);
    let mut set = MeasurementSet::empty(steps);
    let (s1, s3, s2) = (opts.r_v1.sqrt(), opts.r_v3.sqrt(), opts.r_v2.sqrt());
    let mut v1 = Vec::with_capacity(steps);
    let mut v3 = Vec::with_capacity(steps);
    let mut v2 = Vec::with_capacity(steps);
    for a in &truth.accels[1..] {
        v1.push(vec![a[1] + s1 * rng.normal()]);
        v3.push(vec![a[2] + s3 * rng.normal(), a[3] + s3 * rng.normal()]);
        v2.push(vec![a[4] + s2 * rng.normal()]);
    }
    set.insert_dense(CHAIN6_V1, v1)?;
    set.insert_dense(CHAIN6_V3, v3)?;
    set.insert_dense(CHAIN6_V2, v2)?;
    Ok(set)
}
