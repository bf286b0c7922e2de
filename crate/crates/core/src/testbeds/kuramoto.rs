//! Oscillator-network testbed: coupled phase dynamics on a bus-coupling
//! matrix drawn from a grid case, plus the estimation graphs over it.
//!
//! The second-order (swing) model per bus `a` is
//! `θ̇_a = ω_a`, `ω̇_a = −d_a·ω_a + Ω_a + Σ_b K_ab·sin(θ_b − θ_a)`;
//! the first-order classical model drops the frequency state and moves the
//! phase directly, `θ̇_a = Ω_a + Σ_b K_ab·sin(θ_b − θ_a)`. Truth runs are
//! Heun-integrated with every phase wrapped to `(−π, π]` after each step.
//!
//! Estimation augments each bus with its natural frequency, giving cluster
//! states `[θ(m), ω(m), Ω(m)]` observed through `y = [θ; ω]` (angular
//! innovations on the phase channels). Couplings that cross a cluster cut
//! are rebuilt from two frozen sender-side aggregates,
//! `Σ_j K_aj·sin(θ̂_j − θ_a) = cos θ_a · Σ_j K_aj·sin θ̂_j − sin θ_a ·
//! Σ_j K_aj·cos θ̂_j`, delivered by [`InterfaceLaw::PhaseSine`] /
//! [`InterfaceLaw::PhaseCosine`] edges into the input slots `a` and
//! `m + a`. The receiver phase therefore stays live inside the local
//! propagation (per sigma point) while neighbour phases stay frozen at the
//! previous step's register — the single-sweep Jacobi discipline.
//!
//! The static least-squares baselines share the predictor and measurement
//! model but do not infer the natural frequencies: their nodes carry only
//! `[θ(m), ω(m)]` with `Ω ≡ 0` in the predictor.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::{wrap_angle, UkfParams};
use crate::graph::{
    build_graph, EstimatorKind, InterfaceEdge, MessageMode, SubsystemNode, SystemGraph,
};
use crate::laws::InterfaceLaw;
use crate::models::{GaussianBelief, IntegratorKind, StateSpaceModel};
use crate::numerics::{Matrix, Rng};
use crate::schedules::{MeasurementSet, RunTrace};
use crate::testbeds::matpower::{CouplingMode, GridCase};
use crate::testbeds::partition::Cluster;

/// Node id of the single-node (centralized) estimation graph.
pub const GRID_NODE: &str = "grid";

/// Node id of cluster `index` in a clustered estimation graph.
pub fn cluster_node_id(index: usize) -> String {
    format!("c{index}")
}

/// Phase-model order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KuramotoOrder {
    /// Classical model: the coupling moves the phase directly.
    First,
    /// Swing model: the coupling accelerates the frequency state.
    Second,
}

/// One drawn oscillator network.
#[derive(Debug, Clone)]
pub struct KuramotoModel {
    /// Coupling gains; `coupling[a][b]` multiplies `sin(θ_b − θ_a)` in bus
    /// `a`'s equation. Zero diagonal, symmetric sparsity pattern.
    pub coupling: Matrix,
    /// Damping `d_a` (second-order model only).
    pub damping: Vec<f64>,
    /// Natural frequencies `Ω_a`.
    pub natural: Vec<f64>,
    pub theta0: Vec<f64>,
    pub omega0: Vec<f64>,
    pub order: KuramotoOrder,
}

impl KuramotoModel {
    pub fn n(&self) -> usize {
        self.damping.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::invalid("oscillator network needs at least one bus"));
        }
        if self.coupling.rows() != n || self.coupling.cols() != n {
            return Err(Error::length(format!(
                "coupling {}x{} vs {n} buses",
                self.coupling.rows(),
                self.coupling.cols()
            )));
        }
        for (name, v) in [
            ("natural", &self.natural),
            ("theta0", &self.theta0),
            ("omega0", &self.omega0),
        ] {
            if v.len() != n {
                return Err(Error::length(format!("{name} len {} vs {n} buses", v.len())));
            }
        }
        if self.damping.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::invalid("bus damping must be positive"));
        }
        for a in 0..n {
            if self.coupling.get(a, a) != 0.0 {
                return Err(Error::invalid(format!("coupling diagonal at bus {a}")));
            }
            for b in 0..a {
                let fwd = self.coupling.get(a, b) != 0.0;
                let back = self.coupling.get(b, a) != 0.0;
                if fwd != back {
                    return Err(Error::invalid(format!(
                        "coupling pattern between buses {b} and {a} is one-sided"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `Σ_b K_ab·sin(θ_b − θ_a)` for bus `a`.
    fn coupling_term(&self, theta: &[f64], a: usize) -> f64 {
        let mut sum = 0.0;
        for b in 0..self.n() {
            let gain = self.coupling.get(a, b);
            if gain != 0.0 {
                sum += gain * (theta[b] - theta[a]).sin();
            }
        }
        sum
    }

    /// Continuous rates `(θ̇, ω̇)`; for the first-order model `ω̇` is zero
    /// and the coupling appears in `θ̇` directly.
    pub fn rates(&self, theta: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut dtheta = vec![0.0; n];
        let mut domega = vec![0.0; n];
        for a in 0..n {
            match self.order {
                KuramotoOrder::First => {
                    dtheta[a] = self.natural[a] + self.coupling_term(theta, a);
                }
                KuramotoOrder::Second => {
                    dtheta[a] = omega[a];
                    domega[a] = -self.damping[a] * omega[a]
                        + self.natural[a]
                        + self.coupling_term(theta, a);
                }
            }
        }
        (dtheta, domega)
    }
}

/// Draw a network over a grid case: coupling from the bus admittance
/// matrix, `d_a ~ U(0.10, 0.30)` rounded to 2 d.p., `Ω_a` uniform on the
/// grid `{−1.0, −0.9, …, 1.0}` rad/s, `θ₀ ~ U(−0.5, 0.5)`,
/// `ω₀ ~ U(−0.2, 0.2)`. Draw order is damping, natural frequencies,
/// initial phases, initial frequencies (each across all buses), so a fixed
/// seed rebuilds the identical model.
pub fn build_kuramoto(
    case: &GridCase,
    mode: CouplingMode,
    order: KuramotoOrder,
    rng: &mut Rng,
) -> Result<KuramotoModel> {
    let coupling = case.coupling(mode)?;
    let n = coupling.rows();
    let damping = (0..n)
        .map(|_| (rng.uniform(0.10, 0.30) * 100.0).round() / 100.0)
        .collect();
    let natural = (0..n)
        .map(|_| (rng.index(21) as f64 - 10.0) / 10.0)
        .collect();
    let theta0 = (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let omega0 = (0..n).map(|_| rng.uniform(-0.2, 0.2)).collect();
    let model = KuramotoModel {
        coupling,
        damping,
        natural,
        theta0,
        omega0,
        order,
    };
    model.validate()?;
    Ok(model)
}

/// Heun-integrated truth: `steps + 1` labels of phases and frequencies.
///
/// For first-order models the `omega` rows hold the instantaneous phase
/// rates `θ̇` at each label (the model has no frequency state).
#[derive(Debug, Clone)]
pub struct NetworkTruth {
    pub t: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

/// Simulate the truth over `t_final` at step `dt` and synthesize the noisy
/// measurement series: row `n` observes label `n + 1` with i.i.d.
/// `N(0, σ²)` on every channel. Second-order rows are `[θ; ω]` (width
/// `2n`), first-order rows are phases only. Measured phases are reported
/// wrapped to `(−π, π]`.
pub fn simulate_truth(
    model: &KuramotoModel,
    t_final: f64,
    dt: f64,
    sigma: f64,
    rng: &mut Rng,
) -> Result<(NetworkTruth, Vec<Vec<f64>>)> {
    model.validate()?;
    if !(t_final > 0.0) || !(dt > 0.0) || !(sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "truth horizon {t_final}, dt {dt}, sigma {sigma}"
        )));
    }
    let steps = (t_final / dt).round() as usize;
    if steps == 0 {
        return Err(Error::invalid("horizon shorter than one step"));
    }
    let n = model.n();

    let mut theta: Vec<f64> = model.theta0.iter().map(|&t| wrap_angle(t)).collect();
    let mut omega = model.omega0.clone();
    let rate_row = |model: &KuramotoModel, theta: &[f64], omega: &[f64]| match model.order {
        KuramotoOrder::First => model.rates(theta, omega).0,
        KuramotoOrder::Second => omega.to_vec(),
    };

    let mut truth = NetworkTruth {
        t: vec![0.0],
        theta: vec![theta.clone()],
        omega: vec![rate_row(model, &theta, &omega)],
    };
    let mut measurements = Vec::with_capacity(steps);

    for step in 0..steps {
        let (k1t, k1w) = model.rates(&theta, &omega);
        let tp: Vec<f64> = (0..n).map(|i| theta[i] + dt * k1t[i]).collect();
        let wp: Vec<f64> = (0..n).map(|i| omega[i] + dt * k1w[i]).collect();
        let (k2t, k2w) = model.rates(&tp, &wp);
        for i in 0..n {
            theta[i] = wrap_angle(theta[i] + 0.5 * dt * (k1t[i] + k2t[i]));
            omega[i] += 0.5 * dt * (k1w[i] + k2w[i]);
        }

        truth.t.push((step + 1) as f64 * dt);
        truth.theta.push(theta.clone());
        truth.omega.push(rate_row(model, &theta, &omega));

        let obs_omega = matches!(model.order, KuramotoOrder::Second);
        let mut row = Vec::with_capacity(if obs_omega { 2 * n } else { n });
        for i in 0..n {
            row.push(wrap_angle(theta[i] + sigma * rng.normal()));
        }
        if obs_omega {
            for i in 0..n {
                row.push(omega[i] + sigma * rng.normal());
            }
        }
        measurements.push(row);
    }
    Ok((truth, measurements))
}

/// Estimator choice for the grid graphs.
#[derive(Debug, Clone)]
pub enum GridEstimator {
    /// Joint state–parameter filter on the augmented `[θ, ω, Ω]` state.
    Ukf(UkfParams),
    /// Mean-only forward propagation on the augmented state
    /// (co-simulation; pair with a truth-valued initial belief).
    Propagate,
    /// One-shot snap-to-measurement baseline on `[θ, ω]` with the natural
    /// frequencies pinned at zero in the predictor.
    Wls,
    /// Re-linearised damped Gauss–Newton variant of the same baseline.
    Wnls { iters: usize, damping: f64 },
}

impl GridEstimator {
    /// Whether nodes carry the augmented `[θ, ω, Ω]` state.
    fn augmented(&self) -> bool {
        matches!(self, GridEstimator::Ukf(_) | GridEstimator::Propagate)
    }

    fn kind(&self) -> EstimatorKind {
        match self {
            GridEstimator::Ukf(p) => EstimatorKind::Ukf(*p),
            GridEstimator::Propagate => EstimatorKind::DeterministicPropagate,
            GridEstimator::Wls => EstimatorKind::Wls,
            GridEstimator::Wnls { iters, damping } => EstimatorKind::Wnls {
                iters: *iters,
                damping: *damping,
            },
        }
    }
}

/// Filter configuration shared by the single-node and clustered builders.
#[derive(Debug, Clone)]
pub struct GridFilterConfig {
    pub estimator: GridEstimator,
    pub integrator: IntegratorKind,
    pub dt: f64,
    /// Measurement noise std on every channel.
    pub sigma: f64,
    pub q_theta: f64,
    pub q_omega: f64,
    pub q_natural: f64,
    pub p0_theta: f64,
    pub p0_omega: f64,
    pub p0_natural: f64,
}

impl GridFilterConfig {
    /// Single-node joint filter defaults: `Q_Ω = 10⁻⁴`.
    pub fn centralized(dt: f64) -> Self {
        GridFilterConfig {
            estimator: GridEstimator::Ukf(UkfParams::preset_unit()),
            integrator: IntegratorKind::Heun,
            dt,
            sigma: 0.02,
            q_theta: 1e-4,
            q_omega: 1e-4,
            q_natural: 1e-4,
            p0_theta: 0.25,
            p0_omega: 0.25,
            p0_natural: 1.0,
        }
    }

    /// Clustered joint filter defaults: the parameter random walk tightens
    /// to `Q_Ω = 10⁻⁹`, reflecting the smaller local state.
    pub fn distributed(dt: f64) -> Self {
        GridFilterConfig {
            q_natural: 1e-9,
            ..GridFilterConfig::centralized(dt)
        }
    }

    pub fn with_estimator(mut self, estimator: GridEstimator) -> Self {
        self.estimator = estimator;
        self
    }
}

/// Initial filter belief means (shared across formulations so comparisons
/// start from the same guess).
#[derive(Debug, Clone)]
pub struct GridInit {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    /// Natural-frequency init for augmented nodes; `None` pins them at 0
    /// (no prior information).
    pub natural: Option<Vec<f64>>,
}

/// Truth initial conditions offset by `N(0, std²)` per phase and frequency
/// channel (phases first, then frequencies); natural frequencies start at
/// zero.
pub fn perturbed_init(model: &KuramotoModel, std: f64, rng: &mut Rng) -> GridInit {
    GridInit {
        theta: model.theta0.iter().map(|&t| t + std * rng.normal()).collect(),
        omega: model.omega0.iter().map(|&w| w + std * rng.normal()).collect(),
        natural: None,
    }
}

/// Build one estimation node over the given buses (global indices; local
/// component `i` is `buses[i]`). Couplings between two listed buses stay
/// inside the node; couplings to unlisted buses are left to edges feeding
/// the aggregate input slots `a` (sine) and `m + a` (cosine).
fn grid_node(
    model: &KuramotoModel,
    buses: &[usize],
    id: &str,
    init: &GridInit,
    cfg: &GridFilterConfig,
) -> Result<SubsystemNode> {
    let m = buses.len();
    if m == 0 {
        return Err(Error::invalid("estimation node over zero buses"));
    }
    let augmented = cfg.estimator.augmented();
    let dim = if augmented { 3 * m } else { 2 * m };

    let local_of: HashMap<usize, usize> =
        buses.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let damping: Vec<f64> = buses.iter().map(|&g| model.damping[g]).collect();
    let internal: Vec<Vec<(usize, f64)>> = buses
        .iter()
        .map(|&ga| {
            (0..model.n())
                .filter_map(|gb| {
                    let gain = model.coupling.get(ga, gb);
                    match local_of.get(&gb) {
                        Some(&b) if gain != 0.0 && gb != ga => Some((b, gain)),
                        _ => None,
                    }
                })
                .collect()
        })
        .collect();

    let dyn_damping = damping;
    let dyn_internal = internal;
    let mut node_model = StateSpaceModel::continuous(
        dim,
        cfg.dt,
        cfg.integrator,
        Arc::new(move |x: &[f64], u: &[f64], _t: f64| {
            let mut dx = vec![0.0; dim];
            for a in 0..m {
                let ta = x[a];
                let wa = x[m + a];
                let mut acc = -dyn_damping[a] * wa;
                if augmented {
                    acc += x[2 * m + a];
                }
                for &(b, gain) in &dyn_internal[a] {
                    acc += gain * (x[b] - ta).sin();
                }
                acc += ta.cos() * u[a] - ta.sin() * u[m + a];
                dx[a] = wa;
                dx[m + a] = acc;
            }
            dx
        }),
    );
    node_model.obs_dim = 2 * m;
    node_model.measurement = Arc::new(move |x: &[f64], _u: &[f64], _t: f64| x[..2 * m].to_vec());
    node_model.angular_obs = (0..m).collect();
    node_model.r = Matrix::identity(2 * m).scale(cfg.sigma * cfg.sigma);
    let mut q_diag = vec![cfg.q_theta; m];
    q_diag.extend(vec![cfg.q_omega; m]);
    let mut p_diag = vec![cfg.p0_theta; m];
    p_diag.extend(vec![cfg.p0_omega; m]);
    if augmented {
        q_diag.extend(vec![cfg.q_natural; m]);
        p_diag.extend(vec![cfg.p0_natural; m]);
    }
    node_model.q = Matrix::from_diag(&q_diag);

    let mut mean: Vec<f64> = buses.iter().map(|&g| init.theta[g]).collect();
    mean.extend(buses.iter().map(|&g| init.omega[g]));
    if augmented {
        mean.extend(
            buses
                .iter()
                .map(|&g| init.natural.as_ref().map_or(0.0, |v| v[g])),
        );
    }
    let belief = GaussianBelief::new(mean, Matrix::from_diag(&p_diag))?;

    Ok(SubsystemNode::new(
        id,
        node_model,
        cfg.estimator.kind(),
        belief,
    ))
}

/// Single-node estimation graph over all buses (bus `g` is local component
/// `g`), node id [`GRID_NODE`].
pub fn centralized_graph(
    model: &KuramotoModel,
    init: &GridInit,
    cfg: &GridFilterConfig,
) -> Result<SystemGraph> {
    check_estimation_model(model)?;
    let buses: Vec<usize> = (0..model.n()).collect();
    let node = grid_node(model, &buses, GRID_NODE, init, cfg)?;
    build_graph(vec![node], Vec::new())
}

/// Clustered estimation graph: one node per cluster (ids from
/// [`cluster_node_id`]), every cut coupling carried by a
/// [`InterfaceLaw::PhaseSine`]/[`InterfaceLaw::PhaseCosine`] edge pair.
pub fn clustered_graph(
    model: &KuramotoModel,
    clusters: &[Cluster],
    init: &GridInit,
    cfg: &GridFilterConfig,
) -> Result<SystemGraph> {
    check_estimation_model(model)?;
    let owner = bus_owners(clusters, model.n())?;

    let mut nodes = Vec::with_capacity(clusters.len());
    for (s, cluster) in clusters.iter().enumerate() {
        nodes.push(grid_node(
            model,
            &cluster.nodes,
            &cluster_node_id(s),
            init,
            cfg,
        )?);
    }

    let mut edges = Vec::new();
    for (s, cluster) in clusters.iter().enumerate() {
        let m = cluster.nodes.len();
        for (a, &ga) in cluster.nodes.iter().enumerate() {
            for gj in 0..model.n() {
                let gain = model.coupling.get(ga, gj);
                let (t, j) = owner[gj];
                if gain == 0.0 || t == s {
                    continue;
                }
                let base = InterfaceEdge {
                    sender: cluster_node_id(t).into(),
                    receiver: cluster_node_id(s).into(),
                    law: InterfaceLaw::PhaseSine { gain },
                    mode: MessageMode::Deterministic,
                    sender_selector: vec![j],
                    receiver_selector: Vec::new(),
                    target: a,
                };
                edges.push(InterfaceEdge {
                    law: InterfaceLaw::PhaseCosine { gain },
                    target: m + a,
                    ..base.clone()
                });
                edges.push(base);
            }
        }
    }
    build_graph(nodes, edges)
}

fn check_estimation_model(model: &KuramotoModel) -> Result<()> {
    model.validate()?;
    if model.order != KuramotoOrder::Second {
        return Err(Error::invalid(
            "estimation graphs need the second-order model",
        ));
    }
    Ok(())
}

/// `owner[g] = (cluster index, local index)`; errors unless the clusters
/// are a disjoint cover of `0..n`.
fn bus_owners(clusters: &[Cluster], n: usize) -> Result<Vec<(usize, usize)>> {
    let mut owner = vec![None; n];
    for (s, cluster) in clusters.iter().enumerate() {
        for (i, &g) in cluster.nodes.iter().enumerate() {
            if g >= n {
                return Err(Error::invalid(format!("cluster bus {g} out of range")));
            }
            if owner[g].replace((s, i)).is_some() {
                return Err(Error::invalid(format!("bus {g} in two clusters")));
            }
        }
    }
    owner
        .into_iter()
        .enumerate()
        .map(|(g, o)| o.ok_or_else(|| Error::invalid(format!("bus {g} in no cluster"))))
        .collect()
}

/// Dense measurement set for the single-node graph from global `[θ; ω]`
/// rows.
pub fn measurement_set_central(measurements: &[Vec<f64>]) -> Result<MeasurementSet> {
    let mut set = MeasurementSet::empty(measurements.len());
    set.insert_dense(GRID_NODE, measurements.to_vec())?;
    Ok(set)
}

/// Per-cluster measurement set sliced out of global `[θ; ω]` rows.
pub fn measurement_set_clustered(
    measurements: &[Vec<f64>],
    clusters: &[Cluster],
) -> Result<MeasurementSet> {
    let mut set = MeasurementSet::empty(measurements.len());
    for (s, cluster) in clusters.iter().enumerate() {
        let rows = measurements
            .iter()
            .map(|row| {
                if row.len() % 2 != 0 {
                    return Err(Error::length("odd measurement row width"));
                }
                let n = row.len() / 2;
                let mut local = Vec::with_capacity(2 * cluster.nodes.len());
                for &g in &cluster.nodes {
                    if g >= n {
                        return Err(Error::invalid(format!("cluster bus {g} out of range")));
                    }
                    local.push(row[g]);
                }
                for &g in &cluster.nodes {
                    local.push(row[n + g]);
                }
                Ok(local)
            })
            .collect::<Result<Vec<_>>>()?;
        set.insert_dense(cluster_node_id(s), rows)?;
    }
    Ok(set)
}

/// Global per-bus series reassembled from a run trace: `steps + 1` rows of
/// means and marginal stds in bus order. `natural` is present only for
/// augmented (joint state–parameter) runs.
#[derive(Debug, Clone)]
pub struct GridSeries {
    pub theta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub natural: Option<Vec<Vec<f64>>>,
    pub theta_std: Vec<Vec<f64>>,
    pub omega_std: Vec<Vec<f64>>,
    pub natural_std: Option<Vec<Vec<f64>>>,
}

impl GridSeries {
    fn empty(rows: usize, n: usize, augmented: bool) -> GridSeries {
        let block = || vec![vec![0.0; n]; rows];
        GridSeries {
            theta: block(),
            omega: block(),
            natural: augmented.then(block),
            theta_std: block(),
            omega_std: block(),
            natural_std: augmented.then(block),
        }
    }

    fn fill(
        &mut self,
        means: &[Vec<f64>],
        stds: &[Vec<f64>],
        buses: &[usize],
    ) -> Result<()> {
        let m = buses.len();
        for (row, (mean, std)) in means.iter().zip(stds).enumerate() {
            for (i, &g) in buses.iter().enumerate() {
                self.theta[row][g] = mean[i];
                self.omega[row][g] = mean[m + i];
                self.theta_std[row][g] = std[i];
                self.omega_std[row][g] = std[m + i];
                if let (Some(nat), Some(nat_std)) =
                    (self.natural.as_mut(), self.natural_std.as_mut())
                {
                    nat[row][g] = mean[2 * m + i];
                    nat_std[row][g] = std[2 * m + i];
                }
            }
        }
        Ok(())
    }
}

/// Reassemble a single-node run.
pub fn gather_central(trace: &RunTrace, n: usize) -> Result<GridSeries> {
    let buses: Vec<usize> = (0..n).collect();
    let node = trace
        .node(&GRID_NODE.into())
        .ok_or_else(|| Error::MissingRegisterEntry {
            node: GRID_NODE.into(),
        })?;
    let augmented = node_width(node.means.first(), n)?;
    let mut series = GridSeries::empty(node.means.len(), n, augmented);
    series.fill(&node.means, &node.stds, &buses)?;
    Ok(series)
}

/// Reassemble a clustered run into global bus order.
pub fn gather_clustered(
    trace: &RunTrace,
    clusters: &[Cluster],
    n: usize,
) -> Result<GridSeries> {
    bus_owners(clusters, n)?;
    let mut series: Option<GridSeries> = None;
    for (s, cluster) in clusters.iter().enumerate() {
        let id = cluster_node_id(s);
        let node = trace
            .node(&id.as_str().into())
            .ok_or_else(|| Error::MissingRegisterEntry { node: id })?;
        let augmented = node_width(node.means.first(), cluster.nodes.len())?;
        let series = series.get_or_insert_with(|| {
            GridSeries::empty(node.means.len(), n, augmented)
        });
        if series.natural.is_some() != augmented {
            return Err(Error::invalid("clusters mix augmented and plain layouts"));
        }
        series.fill(&node.means, &node.stds, &cluster.nodes)?;
    }
    series.ok_or_else(|| Error::invalid("no clusters to gather"))
}

/// `true` for the augmented `3m` layout, `false` for `2m`.
fn node_width(first_row: Option<&Vec<f64>>, m: usize) -> Result<bool> {
    match first_row.map(|r| r.len()) {
        Some(w) if w == 3 * m => Ok(true),
        Some(w) if w == 2 * m => Ok(false),
        w => Err(Error::length(format!(
            "trace row width {w:?} vs {m} buses"
        ))),
    }
}
