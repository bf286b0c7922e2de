//! Coupled stepping schedules over a system graph.
//!
//! One outer step advances every node from label `n` to `n+1`. The three
//! schedules differ in which register the interface messages are read from:
//!
//! * **Jacobi** — all nodes read the frozen register at label `n`, so the
//!   per-node work is order-independent and can run in parallel.
//! * **Gauss–Seidel** — nodes step in a fixed order against a live register,
//!   so later nodes see the fresh states of earlier ones within the sweep.
//! * **AB2** — the extrapolation-based coupling variant: each law reads its
//!   *sender* interface states through the two-step Adams–Bashforth predictor
//!   `1.5·x_n − 0.5·x_{n−1}` (compensating the staleness of remote data)
//!   while the receiver keeps its own current-label states; nodes then
//!   advance with their model integrator. Forward co-simulation only: every
//!   node must propagate deterministically from a continuous model. Models
//!   that select the AB2 *integrator* additionally keep their previous
//!   derivative here (first step bootstraps with Heun).
//!
//! A step may run `inner_iterations` relaxation sweeps: every sweep
//! recomputes candidate states *from the committed label-`n` beliefs* with
//! messages refreshed from the previous sweep's candidates, and only the
//! final sweep applies measurements and is committed. Probabilistic edges
//! feed the incremental-variance pipeline: per (receiver, target) channel a
//! tracker releases `max(0, var_n − var_{n−1})` into the receiver's process
//! noise as `(dt/m)²·Δvar` on the committed sweep.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimators::{ekf_step_with_q, kf_step_with_q, ukf_step_with_q, wls_step, wnls_step};
use crate::graph::{
    EstimatorKind, GlobalRegister, Message, NodeId, NodeInputs, SubsystemNode, SystemGraph,
};
use crate::laws::{inject_process_noise, VarianceTracker};
use crate::models::{integrate_step, Dynamics, GaussianBelief, IntegratorKind};

/// Hard limit on any state component; beyond it a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Message-exchange discipline for the outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Jacobi,
    GaussSeidel,
    Ab2,
}

/// Outer-loop configuration.
#[derive(Debug, Clone)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// Number of outer steps; the trace has `steps + 1` rows.
    pub steps: usize,
    /// Relaxation sweeps per step (≥ 1); measurements apply on the last.
    pub inner_iterations: usize,
    /// Gauss–Seidel node order; `None` means declaration order.
    pub gs_order: Option<Vec<NodeId>>,
    /// `Some(n)`: run Jacobi/AB2 candidate computation on an `n`-thread
    /// pool. Results are bit-identical to the sequential path.
    pub threads: Option<usize>,
}

impl ScheduleConfig {
    pub fn new(kind: ScheduleKind, steps: usize) -> Self {
        ScheduleConfig {
            kind,
            steps,
            inner_iterations: 1,
            gs_order: None,
            threads: None,
        }
    }

    pub fn with_inner_iterations(mut self, k: usize) -> Self {
        self.inner_iterations = k;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Per-node measurement series: entry `n` is the observation used in the
/// update at the end of outer step `n` (state label `n+1`).
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    steps: usize,
    per_node: HashMap<NodeId, Vec<Option<Vec<f64>>>>,
}

impl MeasurementSet {
    pub fn empty(steps: usize) -> Self {
        MeasurementSet {
            steps,
            per_node: HashMap::new(),
        }
    }

    /// Series with gaps; must cover every step.
    pub fn insert_series(
        &mut self,
        id: impl Into<NodeId>,
        series: Vec<Option<Vec<f64>>>,
    ) -> Result<()> {
        if series.len() != self.steps {
            return Err(Error::length(format!(
                "measurement series len {} vs steps {}",
                series.len(),
                self.steps
            )));
        }
        self.per_node.insert(id.into(), series);
        Ok(())
    }

    /// Dense series: one observation per step.
    pub fn insert_dense(&mut self, id: impl Into<NodeId>, series: Vec<Vec<f64>>) -> Result<()> {
        self.insert_series(id, series.into_iter().map(Some).collect())
    }

    pub fn get(&self, id: &NodeId, step: usize) -> Option<&[f64]> {
        self.per_node
            .get(id)
            .and_then(|s| s.get(step))
            .and_then(|o| o.as_deref())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn measured_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.per_node.keys()
    }
}

/// Belief history of one node: `steps + 1` rows of means and marginal
/// standard deviations (row 0 is the initial belief).
#[derive(Debug, Clone)]
pub struct NodeTrace {
    pub id: NodeId,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
}

/// Committed message history of one edge: `steps` rows, row `n` being the
/// force applied while stepping from label `n` to `n+1` (variance 0 on
/// deterministic edges).
#[derive(Debug, Clone, Default)]
pub struct EdgeTrace {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Full run record.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub t: Vec<f64>,
    pub nodes: Vec<NodeTrace>,
    pub edges: Vec<EdgeTrace>,
    /// Wall-clock seconds spent inside the stepping loop.
    pub sweep_seconds: f64,
}

impl RunTrace {
    pub fn node(&self, id: &NodeId) -> Option<&NodeTrace> {
        self.nodes.iter().find(|n| &n.id == id)
    }
}

/// Run `config.steps` outer steps of the chosen schedule.
pub fn run_schedule(
    graph: &SystemGraph,
    config: &ScheduleConfig,
    measurements: &MeasurementSet,
) -> Result<RunTrace> {
    let dt = validate_run(graph, config, measurements)?;
    let n = graph.nodes().len();
    let incoming: Vec<Vec<usize>> = graph
        .nodes()
        .iter()
        .map(|node| graph.incoming_edges(&node.id))
        .collect();
    let gs_order = resolve_gs_order(graph, config)?;

    let mut beliefs: Vec<GaussianBelief> =
        graph.nodes().iter().map(|node| node.init.clone()).collect();
    let mut trackers: Vec<HashMap<usize, VarianceTracker>> = vec![HashMap::new(); n];
    let mut prev_f: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut register = GlobalRegister::init_from(graph);
    // Label n−1 register, kept only by the AB2 schedule for its sender-side
    // extrapolation; None on the first step (which degenerates to Jacobi).
    let mut prev_register: Option<GlobalRegister> = None;

    let mut trace = RunTrace {
        t: vec![0.0],
        nodes: graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| NodeTrace {
                id: node.id.clone(),
                means: vec![beliefs[i].mean.clone()],
                stds: vec![beliefs[i].marginal_std()],
            })
            .collect(),
        edges: vec![EdgeTrace::default(); graph.edges().len()],
        sweep_seconds: 0.0,
    };

    let pool = match config.threads {
        Some(threads) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
        ),
        None => None,
    };

    let clock = Instant::now();
    for step in 0..config.steps {
        let t = step as f64 * dt;
        let stash = match config.kind {
            ScheduleKind::Ab2 => Some(register.clone()),
            _ => None,
        };
        match config.kind {
            ScheduleKind::Jacobi | ScheduleKind::Ab2 => step_frozen(
                graph,
                config,
                measurements,
                pool.as_ref(),
                step,
                t,
                dt,
                &incoming,
                &mut beliefs,
                &register,
                prev_register.as_ref(),
                &mut trackers,
                &mut prev_f,
                &mut trace.edges,
            )?,
            ScheduleKind::GaussSeidel => step_live(
                graph,
                config,
                measurements,
                &gs_order,
                step,
                t,
                dt,
                &incoming,
                &mut beliefs,
                &register,
                &mut trackers,
                &mut prev_f,
                &mut trace.edges,
            )?,
        }

        for (i, node) in graph.nodes().iter().enumerate() {
            guard_belief(&node.id, step, &beliefs[i])?;
            register.set_belief(node.id.clone(), &beliefs[i]);
            trace.nodes[i].means.push(beliefs[i].mean.clone());
            trace.nodes[i].stds.push(beliefs[i].marginal_std());
        }
        trace.t.push((step + 1) as f64 * dt);
        if stash.is_some() {
            prev_register = stash;
        }
    }
    trace.sweep_seconds = clock.elapsed().as_secs_f64();
    Ok(trace)
}

fn validate_run(
    graph: &SystemGraph,
    config: &ScheduleConfig,
    measurements: &MeasurementSet,
) -> Result<f64> {
    if config.inner_iterations == 0 {
        return Err(Error::invalid("inner_iterations must be at least 1"));
    }
    if config.threads == Some(0) {
        return Err(Error::invalid("thread count must be at least 1"));
    }
    if measurements.steps() != config.steps {
        return Err(Error::length(format!(
            "measurement set covers {} steps, schedule runs {}",
            measurements.steps(),
            config.steps
        )));
    }
    let mut dt = None;
    for node in graph.nodes() {
        match dt {
            None => dt = Some(node.model.dt),
            Some(d) if d == node.model.dt => {}
            Some(d) => {
                return Err(Error::invalid(format!(
                    "node `{}` steps at dt {} while the schedule runs at {}",
                    node.id, node.model.dt, d
                )))
            }
        }
        let is_ab2_model = matches!(
            node.model.dynamics,
            Dynamics::Continuous {
                integrator: IntegratorKind::Ab2,
                ..
            }
        );
        if is_ab2_model && config.kind != ScheduleKind::Ab2 {
            return Err(Error::invalid(format!(
                "node `{}` uses AB2 integration; only the AB2 schedule manages its history",
                node.id
            )));
        }
        if config.kind == ScheduleKind::Ab2 {
            if !matches!(node.estimator, EstimatorKind::DeterministicPropagate) {
                return Err(Error::invalid(format!(
                    "node `{}`: the AB2 schedule is a forward co-simulation \
                     device and supports deterministic propagation only",
                    node.id
                )));
            }
            if !matches!(node.model.dynamics, Dynamics::Continuous { .. }) {
                return Err(Error::invalid(format!(
                    "node `{}`: the AB2 schedule needs a continuous model",
                    node.id
                )));
            }
        }
    }
    if config.kind == ScheduleKind::Ab2 && config.inner_iterations != 1 {
        return Err(Error::invalid(
            "inner iterations are a Jacobi/Gauss-Seidel notion; AB2 steps once",
        ));
    }
    for id in measurements.measured_ids() {
        let node = graph
            .node(id)
            .map_err(|_| Error::invalid(format!("measurements reference unknown node `{id}`")))?;
        if matches!(node.estimator, EstimatorKind::DeterministicPropagate) {
            return Err(Error::invalid(format!(
                "node `{id}` propagates deterministically and cannot consume measurements"
            )));
        }
    }
    dt.ok_or_else(|| Error::invalid("schedule needs at least one node"))
}

fn resolve_gs_order(graph: &SystemGraph, config: &ScheduleConfig) -> Result<Vec<usize>> {
    match &config.gs_order {
        None => Ok((0..graph.nodes().len()).collect()),
        Some(order) => {
            if order.len() != graph.nodes().len() {
                return Err(Error::invalid(format!(
                    "gs_order lists {} nodes, graph has {}",
                    order.len(),
                    graph.nodes().len()
                )));
            }
            let mut seen = vec![false; graph.nodes().len()];
            let mut idx = Vec::with_capacity(order.len());
            for id in order {
                let i = graph
                    .node_index(id)
                    .ok_or_else(|| Error::invalid(format!("gs_order names unknown node `{id}`")))?;
                if seen[i] {
                    return Err(Error::invalid(format!("gs_order repeats node `{id}`")));
                }
                seen[i] = true;
                idx.push(i);
            }
            Ok(idx)
        }
    }
}

fn guard_belief(id: &NodeId, step: usize, belief: &GaussianBelief) -> Result<()> {
    let finite = belief.mean.iter().all(|v| v.is_finite()) && belief.cov.is_finite();
    let bounded = belief.mean.iter().all(|v| v.abs() <= DIVERGENCE_LIMIT);
    if finite && bounded {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("node `{id}` diverged at step {step} (schedule guard)"),
        })
    }
}

/// Evaluate every edge once, reading sender and receiver sides from
/// (possibly distinct) frozen registers.
fn eval_all_edges(
    graph: &SystemGraph,
    sender_register: &GlobalRegister,
    receiver_register: &GlobalRegister,
) -> Result<Vec<Message>> {
    (0..graph.edges().len())
        .map(|e| crate::graph::edge_message_between(graph, e, sender_register, receiver_register))
        .collect()
}

/// Register whose means are the AB2 sender predictor `1.5·cur − 0.5·prev`;
/// covariances are carried over from the current label (AB2 runs are
/// deterministic, so no law consumes them).
fn extrapolated_register(
    graph: &SystemGraph,
    cur: &GlobalRegister,
    prev: &GlobalRegister,
) -> Result<GlobalRegister> {
    let mut out = cur.clone();
    for node in graph.nodes() {
        let c = cur.get(&node.id)?;
        let p = prev.get(&node.id)?;
        let mean = c
            .mean
            .iter()
            .zip(&p.mean)
            .map(|(&xc, &xp)| 1.5 * xc - 0.5 * xp)
            .collect();
        out.set(
            node.id.clone(),
            crate::graph::RegisterEntry {
                mean,
                cov: c.cov.clone(),
            },
        );
    }
    Ok(out)
}

fn aggregate_inputs(
    graph: &SystemGraph,
    node_index: usize,
    incoming: &[usize],
    messages: &[Message],
) -> NodeInputs {
    let dim = graph.nodes()[node_index].model.state_dim;
    let mut inputs = NodeInputs {
        mean: vec![0.0; dim],
        variance: vec![0.0; dim],
    };
    for &e in incoming {
        let edge = &graph.edges()[e];
        inputs.mean[edge.target] += messages[e].mean;
        if let Some(var) = messages[e].variance {
            inputs.variance[edge.target] += var;
        }
    }
    inputs
}

/// Advance one node from its committed belief.
///
/// `commit` marks the final relaxation sweep: measurements are consumed and
/// the incremental interface variance is released into the process noise.
/// Intermediate sweeps predict with the model's own noise and leave the
/// trackers untouched. Returns the candidate belief and, for continuous
/// models, the dynamics evaluation at the step start (AB2 history).
fn node_step(
    node: &SubsystemNode,
    belief: &GaussianBelief,
    inputs: &NodeInputs,
    y: Option<&[f64]>,
    t: f64,
    dt: f64,
    commit: bool,
    trackers: &mut HashMap<usize, VarianceTracker>,
    prev_f: Option<&[f64]>,
) -> Result<(GaussianBelief, Option<Vec<f64>>)> {
    let mut q_eff = node.model.q.clone();
    if commit {
        for (target, &var) in inputs.variance.iter().enumerate() {
            if var == 0.0 && !trackers.contains_key(&target) {
                continue;
            }
            let used = trackers
                .entry(target)
                .or_insert_with(VarianceTracker::new)
                .increment(var);
            if used > 0.0 {
                q_eff = inject_process_noise(&q_eff, used, dt, node.inertia[target], target)?;
            }
        }
    }

    let u = &inputs.mean;
    match &node.estimator {
        EstimatorKind::DeterministicPropagate => match &node.model.dynamics {
            Dynamics::Continuous { f, integrator } => {
                let (next, f0) =
                    integrate_step(f.as_ref(), &belief.mean, u, t, dt, *integrator, prev_f)?;
                Ok((
                    GaussianBelief {
                        mean: next,
                        cov: belief.cov.clone(),
                    },
                    Some(f0),
                ))
            }
            Dynamics::Discrete(_) => {
                let next = node.model.discrete_step(&belief.mean, u, t)?;
                Ok((
                    GaussianBelief {
                        mean: next,
                        cov: belief.cov.clone(),
                    },
                    None,
                ))
            }
        },
        EstimatorKind::Kf => Ok((kf_step_with_q(&node.model, belief, u, y, &q_eff)?, None)),
        EstimatorKind::Ekf => Ok((
            ekf_step_with_q(&node.model, belief, u, y, t, None, &q_eff)?,
            None,
        )),
        EstimatorKind::Ukf(params) => Ok((
            ukf_step_with_q(&node.model, belief, u, y, t, params, &q_eff)?,
            None,
        )),
        EstimatorKind::Wls => {
            let x_pred = node.model.discrete_step(&belief.mean, u, t)?;
            let mean = match y {
                Some(y) => wls_step(&node.model, &x_pred, u, y, t + dt)?,
                None => x_pred,
            };
            Ok((
                GaussianBelief {
                    mean,
                    cov: belief.cov.clone(),
                },
                None,
            ))
        }
        EstimatorKind::Wnls { iters, damping } => {
            let x_pred = node.model.discrete_step(&belief.mean, u, t)?;
            let mean = match y {
                Some(y) => wnls_step(&node.model, &x_pred, u, y, t + dt, *iters, *damping)?,
                None => x_pred,
            };
            Ok((
                GaussianBelief {
                    mean,
                    cov: belief.cov.clone(),
                },
                None,
            ))
        }
    }
}

/// One Jacobi/AB2 outer step: all sweeps read frozen registers.
#[allow(clippy::too_many_arguments)]
fn step_frozen(
    graph: &SystemGraph,
    config: &ScheduleConfig,
    measurements: &MeasurementSet,
    pool: Option<&rayon::ThreadPool>,
    step: usize,
    t: f64,
    dt: f64,
    incoming: &[Vec<usize>],
    beliefs: &mut [GaussianBelief],
    register: &GlobalRegister,
    ab2_prev: Option<&GlobalRegister>,
    trackers: &mut [HashMap<usize, VarianceTracker>],
    prev_f: &mut [Option<Vec<f64>>],
    edge_traces: &mut [EdgeTrace],
) -> Result<()> {
    let ab2_sender = match (config.kind, ab2_prev) {
        (ScheduleKind::Ab2, Some(prev)) => Some(extrapolated_register(graph, register, prev)?),
        _ => None,
    };
    let mut msg_register = register.clone();
    for sweep in 0..config.inner_iterations {
        let commit = sweep + 1 == config.inner_iterations;
        let messages = match &ab2_sender {
            Some(sender) => eval_all_edges(graph, sender, register)?,
            None => eval_all_edges(graph, &msg_register, &msg_register)?,
        };
        let inputs: Vec<NodeInputs> = (0..graph.nodes().len())
            .map(|i| aggregate_inputs(graph, i, &incoming[i], &messages))
            .collect();

        let compute = |(i, trk): (usize, &mut HashMap<usize, VarianceTracker>)| {
            let node = &graph.nodes()[i];
            let y = if commit {
                measurements.get(&node.id, step)
            } else {
                None
            };
            node_step(
                node,
                &beliefs[i],
                &inputs[i],
                y,
                t,
                dt,
                commit,
                trk,
                prev_f[i].as_deref(),
            )
        };
        let results: Vec<Result<(GaussianBelief, Option<Vec<f64>>)>> = match pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                trackers
                    .par_iter_mut()
                    .enumerate()
                    .map(compute)
                    .collect()
            }),
            None => trackers.iter_mut().enumerate().map(compute).collect(),
        };

        if commit {
            for (i, res) in results.into_iter().enumerate() {
                let (belief, f0) = res?;
                beliefs[i] = belief;
                if f0.is_some() {
                    prev_f[i] = f0;
                }
            }
            for (e, msg) in messages.iter().enumerate() {
                edge_traces[e].mean.push(msg.mean);
                edge_traces[e].variance.push(msg.variance.unwrap_or(0.0));
            }
        } else {
            let mut next_register = msg_register;
            for (i, res) in results.into_iter().enumerate() {
                let (belief, _) = res?;
                next_register.set_belief(graph.nodes()[i].id.clone(), &belief);
            }
            msg_register = next_register;
        }
    }
    Ok(())
}

/// One Gauss–Seidel outer step: nodes step in order against a live register.
#[allow(clippy::too_many_arguments)]
fn step_live(
    graph: &SystemGraph,
    config: &ScheduleConfig,
    measurements: &MeasurementSet,
    order: &[usize],
    step: usize,
    t: f64,
    dt: f64,
    incoming: &[Vec<usize>],
    beliefs: &mut [GaussianBelief],
    register: &GlobalRegister,
    trackers: &mut [HashMap<usize, VarianceTracker>],
    prev_f: &mut [Option<Vec<f64>>],
    edge_traces: &mut [EdgeTrace],
) -> Result<()> {
    let mut live = register.clone();
    for sweep in 0..config.inner_iterations {
        let commit = sweep + 1 == config.inner_iterations;
        for &i in order {
            let node = &graph.nodes()[i];
            let mut inputs = NodeInputs {
                mean: vec![0.0; node.model.state_dim],
                variance: vec![0.0; node.model.state_dim],
            };
            for &e in &incoming[i] {
                let msg = crate::graph::edge_message(graph, e, &live)?;
                let edge = &graph.edges()[e];
                inputs.mean[edge.target] += msg.mean;
                if let Some(var) = msg.variance {
                    inputs.variance[edge.target] += var;
                }
                if commit {
                    edge_traces[e].mean.push(msg.mean);
                    edge_traces[e].variance.push(msg.variance.unwrap_or(0.0));
                }
            }
            let y = if commit {
                measurements.get(&node.id, step)
            } else {
                None
            };
            let (belief, f0) = node_step(
                node,
                &beliefs[i],
                &inputs,
                y,
                t,
                dt,
                commit,
                &mut trackers[i],
                prev_f[i].as_deref(),
            )?;
            live.set_belief(node.id.clone(), &belief);
            if commit {
                beliefs[i] = belief;
                if f0.is_some() {
                    prev_f[i] = f0;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, InterfaceEdge, MessageMode};
    use crate::laws::{InterfaceLaw, SpringDamperLaw};
    use crate::models::{LinearParts, StateSpaceModel};
    use crate::numerics::Matrix;
    use std::sync::Arc;

    const DT: f64 = 1e-2;

    /// Unit mass with grounding spring k=10: state [x, v], input force on v̇.
    fn mass_dynamics() -> crate::models::DynamicsFn {
        Arc::new(|x: &[f64], u: &[f64], _t: f64| vec![x[1], -10.0 * x[0] + u[1]])
    }

    fn mass_node(id: &str, x0: f64, integrator: IntegratorKind) -> SubsystemNode {
        SubsystemNode::new(
            id,
            StateSpaceModel::continuous(2, DT, integrator, mass_dynamics()),
            EstimatorKind::DeterministicPropagate,
            GaussianBelief::deterministic(vec![x0, 0.0]),
        )
    }

    fn spring_edge(sender: &str, receiver: &str, mode: MessageMode) -> InterfaceEdge {
        InterfaceEdge {
            sender: sender.into(),
            receiver: receiver.into(),
            law: InterfaceLaw::SpringDamper(SpringDamperLaw::new(3.0, 0.2, 1.0).unwrap()),
            mode,
            sender_selector: vec![0, 1],
            receiver_selector: vec![0, 1],
            target: 1,
        }
    }

    fn two_mass_graph(mode: MessageMode) -> SystemGraph {
        build_graph(
            vec![
                mass_node("a", 0.5, IntegratorKind::Euler),
                mass_node("b", -0.2, IntegratorKind::Euler),
            ],
            vec![spring_edge("a", "b", mode), spring_edge("b", "a", mode)],
        )
        .unwrap()
    }

    /// Hand-rolled Euler map of one mass under coupling force f.
    fn euler_mass(x: &[f64], f: f64) -> Vec<f64> {
        vec![x[0] + DT * x[1], x[1] + DT * (-10.0 * x[0] + f)]
    }

    fn coupling(sender: &[f64], receiver: &[f64]) -> f64 {
        3.0 * (sender[0] - receiver[0]) + 0.2 * (sender[1] - receiver[1])
    }

    #[test]
    fn jacobi_matches_hand_rolled_cosimulation() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let config = ScheduleConfig::new(ScheduleKind::Jacobi, 50);
        let trace = run_schedule(&graph, &config, &MeasurementSet::empty(50)).unwrap();

        let mut a = vec![0.5, 0.0];
        let mut b = vec![-0.2, 0.0];
        for _ in 0..50 {
            let f_ab = coupling(&a, &b);
            let f_ba = coupling(&b, &a);
            let a_next = euler_mass(&a, f_ba);
            let b_next = euler_mass(&b, f_ab);
            a = a_next;
            b = b_next;
        }
        let ta = trace.node(&"a".into()).unwrap();
        let tb = trace.node(&"b".into()).unwrap();
        assert_eq!(ta.means.len(), 51);
        for k in 0..2 {
            assert!((ta.means[50][k] - a[k]).abs() < 1e-14);
            assert!((tb.means[50][k] - b[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_seidel_feeds_fresh_states_forward() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let config = ScheduleConfig::new(ScheduleKind::GaussSeidel, 40);
        let trace = run_schedule(&graph, &config, &MeasurementSet::empty(40)).unwrap();

        let mut a = vec![0.5, 0.0];
        let mut b = vec![-0.2, 0.0];
        for _ in 0..40 {
            // Node a steps against b's old state; b then sees the new a.
            a = euler_mass(&a, coupling(&b, &a));
            b = euler_mass(&b, coupling(&a, &b));
        }
        let ta = trace.node(&"a".into()).unwrap();
        let tb = trace.node(&"b".into()).unwrap();
        for k in 0..2 {
            assert!((ta.means[40][k] - a[k]).abs() < 1e-14);
            assert!((tb.means[40][k] - b[k]).abs() < 1e-14);
        }

        // And the two schedules genuinely differ.
        let jac = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, 40),
            &MeasurementSet::empty(40),
        )
        .unwrap();
        let diff = (jac.node(&"b".into()).unwrap().means[40][0] - tb.means[40][0]).abs();
        assert!(diff > 1e-12, "Jacobi and GS should not coincide, diff {diff}");
    }

    #[test]
    fn inner_sweeps_relax_messages_toward_fixed_point() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let config =
            ScheduleConfig::new(ScheduleKind::Jacobi, 1).with_inner_iterations(2);
        let trace = run_schedule(&graph, &config, &MeasurementSet::empty(1)).unwrap();

        // Sweep 1 candidates from the initial register; sweep 2 recomputes
        // from the *initial* states with messages from those candidates.
        let a0 = vec![0.5, 0.0];
        let b0 = vec![-0.2, 0.0];
        let a1 = euler_mass(&a0, coupling(&b0, &a0));
        let b1 = euler_mass(&b0, coupling(&a0, &b0));
        let a2 = euler_mass(&a0, coupling(&b1, &a1));
        let b2 = euler_mass(&b0, coupling(&a1, &b1));

        let ta = trace.node(&"a".into()).unwrap();
        let tb = trace.node(&"b".into()).unwrap();
        for k in 0..2 {
            assert!((ta.means[1][k] - a2[k]).abs() < 1e-15);
            assert!((tb.means[1][k] - b2[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn ab2_extrapolates_sender_states_into_the_coupling() {
        // First step has no history and must equal a Jacobi step; afterwards
        // each law reads its sender through 1.5·x_n − 0.5·x_{n−1} while the
        // receiver side stays at the current label.
        let graph = two_mass_graph(MessageMode::Deterministic);
        let steps = 6;
        let trace = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Ab2, steps),
            &MeasurementSet::empty(steps),
        )
        .unwrap();

        let mut a = vec![0.5, 0.0];
        let mut b = vec![-0.2, 0.0];
        let (mut a_prev, mut b_prev) = (a.clone(), b.clone());
        for step in 0..steps {
            let (ext_a, ext_b) = if step == 0 {
                (a.clone(), b.clone())
            } else {
                (
                    vec![1.5 * a[0] - 0.5 * a_prev[0], 1.5 * a[1] - 0.5 * a_prev[1]],
                    vec![1.5 * b[0] - 0.5 * b_prev[0], 1.5 * b[1] - 0.5 * b_prev[1]],
                )
            };
            let f_on_a = coupling(&ext_b, &a);
            let f_on_b = coupling(&ext_a, &b);
            a_prev = a.clone();
            b_prev = b.clone();
            a = euler_mass(&a_prev, f_on_a);
            b = euler_mass(&b_prev, f_on_b);
        }
        let ta = trace.node(&"a".into()).unwrap();
        let tb = trace.node(&"b".into()).unwrap();
        for k in 0..2 {
            assert!((ta.means[steps][k] - a[k]).abs() < 1e-14);
            assert!((tb.means[steps][k] - b[k]).abs() < 1e-14);
        }

        // The extrapolation must actually move the coupling off Jacobi.
        let jac = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, steps),
            &MeasurementSet::empty(steps),
        )
        .unwrap();
        let diff = (jac.node(&"a".into()).unwrap().means[steps][0] - ta.means[steps][0]).abs();
        assert!(diff > 1e-12, "AB2 should differ from Jacobi, diff {diff}");
    }

    #[test]
    fn ab2_rejects_inner_iterations() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let err = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Ab2, 1).with_inner_iterations(2),
            &MeasurementSet::empty(1),
        );
        assert!(matches!(err, Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn ab2_matches_scalar_history_oracle() {
        // ẋ = −x, dt = 0.1: step 0 bootstraps with Heun, then AB2 proper.
        let dt = 0.1;
        let node = SubsystemNode::new(
            "s",
            StateSpaceModel::continuous(
                1,
                dt,
                IntegratorKind::Ab2,
                Arc::new(|x: &[f64], _u: &[f64], _t: f64| vec![-x[0]]),
            ),
            EstimatorKind::DeterministicPropagate,
            GaussianBelief::deterministic(vec![1.0]),
        );
        let graph = build_graph(vec![node], vec![]).unwrap();
        let config = ScheduleConfig::new(ScheduleKind::Ab2, 3);
        let trace = run_schedule(&graph, &config, &MeasurementSet::empty(3)).unwrap();

        let x0 = 1.0_f64;
        let x1 = x0 * (1.0 - dt + dt * dt / 2.0);
        let x2 = x1 + dt * (1.5 * (-x1) - 0.5 * (-x0));
        let x3 = x2 + dt * (1.5 * (-x2) - 0.5 * (-x1));
        let ts = trace.node(&"s".into()).unwrap();
        assert!((ts.means[1][0] - x1).abs() < 1e-15);
        assert!((ts.means[2][0] - x2).abs() < 1e-15);
        assert!((ts.means[3][0] - x3).abs() < 1e-15);
    }

    #[test]
    fn ab2_model_needs_ab2_schedule() {
        let graph = build_graph(
            vec![mass_node("a", 0.1, IntegratorKind::Ab2)],
            vec![],
        )
        .unwrap();
        let err = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, 1),
            &MeasurementSet::empty(1),
        );
        assert!(matches!(err, Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn ab2_model_rejects_stochastic_estimators() {
        let mut node = mass_node("a", 0.1, IntegratorKind::Ab2);
        node.estimator = EstimatorKind::Ekf;
        let graph = build_graph(vec![node], vec![]).unwrap();
        let err = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Ab2, 1),
            &MeasurementSet::empty(1),
        );
        assert!(matches!(err, Err(Error::InvalidParam { .. })));
    }

    /// Static linear-Gaussian node: x' = x, measured directly.
    fn static_kf_node(id: &str, p0: f64, q: f64, r: f64) -> SubsystemNode {
        let mut model = StateSpaceModel::continuous(
            1,
            DT,
            IntegratorKind::Euler,
            Arc::new(|_x: &[f64], _u: &[f64], _t: f64| vec![0.0]),
        );
        model.obs_dim = 1;
        model.measurement = Arc::new(|x: &[f64], _u: &[f64], _t: f64| vec![x[0]]);
        model.q = Matrix::from_diag(&[q]);
        model.r = Matrix::from_diag(&[r]);
        model.linear = Some(LinearParts {
            m: Matrix::identity(1),
            h: Matrix::from_rows(&[vec![1.0]]).unwrap(),
            b: None,
        });
        SubsystemNode::new(
            id,
            model,
            EstimatorKind::Kf,
            GaussianBelief::new(vec![0.0], Matrix::from_diag(&[p0])).unwrap(),
        )
    }

    #[test]
    fn scheduled_kf_equals_direct_filter_loop_and_ignores_sweep_count() {
        let ys = vec![vec![0.4], vec![0.3], vec![0.5], vec![0.35]];
        let run = |sweeps: usize| {
            let graph = build_graph(vec![static_kf_node("f", 1.0, 0.01, 0.25)], vec![]).unwrap();
            let mut ms = MeasurementSet::empty(4);
            ms.insert_dense("f", ys.clone()).unwrap();
            let config = ScheduleConfig::new(ScheduleKind::Jacobi, 4)
                .with_inner_iterations(sweeps);
            run_schedule(&graph, &config, &ms).unwrap()
        };
        let t1 = run(1);
        let t3 = run(3);

        // Direct filter loop as the oracle.
        let node = static_kf_node("f", 1.0, 0.01, 0.25);
        let mut belief = node.init.clone();
        for y in &ys {
            belief =
                kf_step_with_q(&node.model, &belief, &[0.0], Some(y), &node.model.q).unwrap();
        }
        let tf = t1.node(&"f".into()).unwrap();
        assert!((tf.means[4][0] - belief.mean[0]).abs() < 1e-15);
        assert!((tf.stds[4][0] - belief.cov.get(0, 0).sqrt()).abs() < 1e-15);

        // Without coupling, extra sweeps must change nothing at all.
        assert_eq!(
            t1.node(&"f".into()).unwrap().means,
            t3.node(&"f".into()).unwrap().means
        );
    }

    #[test]
    fn probabilistic_edge_releases_incremental_variance() {
        // Sender: static KF whose x-variance grows by q0 per step (no
        // measurements). Receiver: static 2-state KF with zero process
        // noise; the edge (k=3, c=0) targets v̇, so after N steps
        // P_recv[1,1] = (dt/m)²·k²·Ps at label N−1, by telescoping.
        let q0 = 0.002;
        let p0 = 0.04;
        let steps = 5;

        let mut sender_model = StateSpaceModel::continuous(
            2,
            DT,
            IntegratorKind::Euler,
            Arc::new(|_x: &[f64], _u: &[f64], _t: f64| vec![0.0, 0.0]),
        );
        sender_model.q = Matrix::from_diag(&[q0, 0.0]);
        sender_model.linear = Some(LinearParts {
            m: Matrix::identity(2),
            h: Matrix::zeros(0, 2),
            b: None,
        });
        let sender = SubsystemNode::new(
            "s",
            sender_model,
            EstimatorKind::Kf,
            GaussianBelief::new(vec![0.0, 0.0], Matrix::from_diag(&[p0, 0.0])).unwrap(),
        );

        let mut recv_model = StateSpaceModel::continuous(
            2,
            DT,
            IntegratorKind::Euler,
            Arc::new(|_x: &[f64], u: &[f64], _t: f64| vec![0.0, u[1]]),
        );
        recv_model.linear = Some(LinearParts {
            m: Matrix::identity(2),
            h: Matrix::zeros(0, 2),
            b: Some(Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, DT]]).unwrap()),
        });
        let receiver = SubsystemNode::new(
            "r",
            recv_model,
            EstimatorKind::Kf,
            GaussianBelief::deterministic(vec![0.0, 0.0]),
        );

        let edge = InterfaceEdge {
            sender: "s".into(),
            receiver: "r".into(),
            law: InterfaceLaw::SpringDamper(SpringDamperLaw::new(3.0, 0.0, 1.0).unwrap()),
            mode: MessageMode::Probabilistic,
            sender_selector: vec![0, 1],
            receiver_selector: vec![0, 1],
            target: 1,
        };
        let graph = build_graph(vec![sender, receiver], vec![edge]).unwrap();
        let config = ScheduleConfig::new(ScheduleKind::Jacobi, steps);
        let trace = run_schedule(&graph, &config, &MeasurementSet::empty(steps)).unwrap();

        let expected_var = DT * DT * 9.0 * (p0 + (steps as f64 - 1.0) * q0);
        let got_std = trace.node(&"r".into()).unwrap().stds[steps][1];
        assert!(
            (got_std - expected_var.sqrt()).abs() < 1e-12,
            "std {} vs {}",
            got_std,
            expected_var.sqrt()
        );
        // Edge trace reports the variance level, not the increment.
        let level = trace.edges[0].variance[steps - 1];
        let expected_level = 9.0 * (p0 + (steps as f64 - 1.0) * q0);
        assert!((level - expected_level).abs() < 1e-12);
    }

    #[test]
    fn parallel_jacobi_is_bit_identical_to_sequential() {
        let build = || {
            let mut nodes = vec![
                mass_node("a", 0.5, IntegratorKind::Heun),
                mass_node("b", -0.2, IntegratorKind::Heun),
                mass_node("c", 0.1, IntegratorKind::Heun),
            ];
            for node in &mut nodes {
                node.model.q = Matrix::from_diag(&[1e-6, 1e-6]);
            }
            let edges = vec![
                spring_edge("a", "b", MessageMode::Deterministic),
                spring_edge("b", "c", MessageMode::Deterministic),
                spring_edge("c", "a", MessageMode::Deterministic),
            ];
            build_graph(nodes, edges).unwrap()
        };
        let seq = run_schedule(
            &build(),
            &ScheduleConfig::new(ScheduleKind::Jacobi, 30).with_inner_iterations(2),
            &MeasurementSet::empty(30),
        )
        .unwrap();
        let par = run_schedule(
            &build(),
            &ScheduleConfig::new(ScheduleKind::Jacobi, 30)
                .with_inner_iterations(2)
                .with_threads(4),
            &MeasurementSet::empty(30),
        )
        .unwrap();
        for (ns, np) in seq.nodes.iter().zip(&par.nodes) {
            assert_eq!(ns.means, np.means);
            assert_eq!(ns.stds, np.stds);
        }
    }

    #[test]
    fn divergence_guard_reports_node_and_step() {
        let node = SubsystemNode::new(
            "boom",
            StateSpaceModel::continuous(
                1,
                DT,
                IntegratorKind::Euler,
                Arc::new(|x: &[f64], _u: &[f64], _t: f64| vec![1e4 * x[0]]),
            ),
            EstimatorKind::DeterministicPropagate,
            GaussianBelief::deterministic(vec![1.0]),
        );
        let graph = build_graph(vec![node], vec![]).unwrap();
        let err = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, 400),
            &MeasurementSet::empty(400),
        );
        match err {
            Err(Error::NonFinite { context }) => {
                assert!(context.contains("boom"), "context: {context}")
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn measurements_on_deterministic_nodes_are_rejected() {
        let graph = build_graph(vec![mass_node("a", 0.1, IntegratorKind::Euler)], vec![])
            .unwrap();
        let mut ms = MeasurementSet::empty(2);
        ms.insert_dense("a", vec![vec![0.0], vec![0.0]]).unwrap();
        let err = run_schedule(&graph, &ScheduleConfig::new(ScheduleKind::Jacobi, 2), &ms);
        assert!(matches!(err, Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn mixed_step_sizes_are_rejected() {
        let mut slow = mass_node("slow", 0.1, IntegratorKind::Euler);
        slow.model.dt = 2.0 * DT;
        let graph =
            build_graph(vec![mass_node("a", 0.1, IntegratorKind::Euler), slow], vec![]).unwrap();
        let err = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, 1),
            &MeasurementSet::empty(1),
        );
        assert!(matches!(err, Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn gs_order_must_be_a_permutation() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let mut config = ScheduleConfig::new(ScheduleKind::GaussSeidel, 1);
        config.gs_order = Some(vec!["a".into(), "a".into()]);
        let err = run_schedule(&graph, &config, &MeasurementSet::empty(1));
        assert!(matches!(err, Err(Error::InvalidParam { .. })));

        // Reversing the order changes which node sees fresh data.
        let mut rev = ScheduleConfig::new(ScheduleKind::GaussSeidel, 10);
        rev.gs_order = Some(vec!["b".into(), "a".into()]);
        let fwd = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::GaussSeidel, 10),
            &MeasurementSet::empty(10),
        )
        .unwrap();
        let bwd = run_schedule(&graph, &rev, &MeasurementSet::empty(10)).unwrap();
        assert!(
            (fwd.node(&"a".into()).unwrap().means[10][0]
                - bwd.node(&"a".into()).unwrap().means[10][0])
                .abs()
                > 1e-12
        );
    }

    #[test]
    fn edge_trace_records_committed_forces() {
        let graph = two_mass_graph(MessageMode::Deterministic);
        let trace = run_schedule(
            &graph,
            &ScheduleConfig::new(ScheduleKind::Jacobi, 5),
            &MeasurementSet::empty(5),
        )
        .unwrap();
        assert_eq!(trace.edges.len(), 2);
        assert_eq!(trace.edges[0].mean.len(), 5);
        // First step: F(a→b) from the initial states, 3·(0.5 − (−0.2)) = 2.1.
        assert!((trace.edges[0].mean[0] - 2.1).abs() < 1e-14);
        assert_eq!(trace.edges[0].variance[0], 0.0);
    }

    #[test]
    fn wls_node_snaps_to_identity_measurements() {
        let mut node = static_kf_node("w", 1.0, 0.0, 1e-4);
        node.estimator = EstimatorKind::Wls;
        let graph = build_graph(vec![node], vec![]).unwrap();
        let mut ms = MeasurementSet::empty(2);
        ms.insert_dense("w", vec![vec![0.7], vec![-0.3]]).unwrap();
        let trace = run_schedule(&graph, &ScheduleConfig::new(ScheduleKind::Jacobi, 2), &ms)
            .unwrap();
        let tw = trace.node(&"w".into()).unwrap();
        assert!((tw.means[1][0] - 0.7).abs() < 1e-12);
        assert!((tw.means[2][0] - -0.3).abs() < 1e-12);
    }
}
