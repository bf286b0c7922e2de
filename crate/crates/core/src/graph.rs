//! The system graph: subsystem nodes joined by directed interface edges.
//!
//! Nodes own a local model, an estimator choice, and an initial belief.
//! Edges say how a scalar coupling is computed (law + one selector per
//! endpoint picking the boundary components out of each state) and which
//! receiver state equation it drives (`target`). Message aggregation is
//! additive per target: generalized forces from several senders superpose.
//!
//! A [`GlobalRegister`] snapshots each node's belief at a schedule label;
//! message collection reads exclusively from a register, never from live
//! node state, which is what makes Jacobi sweeps order-independent.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::UkfParams;
use crate::laws::{interface_force_variance, InterfaceLaw};
use crate::models::{GaussianBelief, StateSpaceModel};
use crate::numerics::Matrix;

/// Node identifier. Hierarchical embedding composes ids with `.`, so ids
/// read like paths once a sub-graph has been flattened into its parent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Estimator assigned to a node.
#[derive(Debug, Clone)]
pub enum EstimatorKind {
    /// Forward simulation of the mean only (zero covariance maintained).
    DeterministicPropagate,
    /// Linear Kalman filter (model must carry exact linear parts).
    Kf,
    /// Extended Kalman filter with numeric Jacobians.
    Ekf,
    /// Unscented Kalman filter.
    Ukf(UkfParams),
    /// Single linearized weighted-least-squares correction per step; tracks
    /// no covariance.
    Wls,
    /// Re-linearized damped Gauss–Newton correction per step.
    Wnls { iters: usize, damping: f64 },
}

/// One subsystem.
#[derive(Debug, Clone)]
pub struct SubsystemNode {
    pub id: NodeId,
    pub model: StateSpaceModel,
    pub estimator: EstimatorKind,
    pub init: GaussianBelief,
    /// Inertia dividing the input channel of each state equation; used by
    /// probabilistic edges to convert force variance into process noise.
    /// Entries default to 1 (unit-inertia equations).
    pub inertia: Vec<f64>,
}

impl SubsystemNode {
    pub fn new(
        id: impl Into<String>,
        model: StateSpaceModel,
        estimator: EstimatorKind,
        init: GaussianBelief,
    ) -> Self {
        let inertia = vec![1.0; model.state_dim];
        SubsystemNode {
            id: NodeId::new(id),
            model,
            estimator,
            init,
            inertia,
        }
    }

    pub fn with_inertia(mut self, inertia: Vec<f64>) -> Self {
        self.inertia = inertia;
        self
    }
}

/// Whether an edge carries only a mean force or a mean plus variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageMode {
    Deterministic,
    Probabilistic,
}

/// Directed interface edge.
#[derive(Debug, Clone)]
pub struct InterfaceEdge {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub law: InterfaceLaw,
    pub mode: MessageMode,
    /// Indices into the sender's state vector selecting its boundary
    /// components, in the order the law expects them.
    pub sender_selector: Vec<usize>,
    /// Same for the receiver.
    pub receiver_selector: Vec<usize>,
    /// Receiver state equation the force drives.
    pub target: usize,
}

/// One scalar message: the signed force and, on probabilistic edges, its
/// first-order variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub mean: f64,
    pub variance: Option<f64>,
}

/// Aggregated node inputs: one additive force channel per state component
/// and the summed force variance per channel (independent sources).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInputs {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Validated system graph.
#[derive(Debug, Clone)]
pub struct SystemGraph {
    nodes: Vec<SubsystemNode>,
    edges: Vec<InterfaceEdge>,
    index: HashMap<NodeId, usize>,
}

impl SystemGraph {
    pub fn nodes(&self) -> &[SubsystemNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[InterfaceEdge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Result<&SubsystemNode> {
        self.index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| Error::MissingRegisterEntry {
                node: id.to_string(),
            })
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Indices of the edges pointing into `receiver`, in declaration order.
    pub fn incoming_edges(&self, receiver: &NodeId) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| &e.receiver == receiver)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Validate nodes and edges into a [`SystemGraph`].
///
/// Checks: unique node ids, edge endpoints exist, selector/target indices in
/// range, selector lengths match the law's arity, per-node inertia shape and
/// positivity, and that probabilistic edges use a law with linear
/// coefficients (required for variance propagation).
pub fn build_graph(nodes: Vec<SubsystemNode>, edges: Vec<InterfaceEdge>) -> Result<SystemGraph> {
    let mut index = HashMap::new();
    for (i, node) in nodes.iter().enumerate() {
        if index.insert(node.id.clone(), i).is_some() {
            return Err(Error::DuplicateNodeId {
                id: node.id.to_string(),
            });
        }
        node.model.validate()?;
        if node.inertia.len() != node.model.state_dim {
            return Err(Error::length(format!(
                "node `{}` inertia len {} vs state dim {}",
                node.id,
                node.inertia.len(),
                node.model.state_dim
            )));
        }
        if node.inertia.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::invalid(format!(
                "node `{}` has non-positive inertia",
                node.id
            )));
        }
        if node.init.dim() != node.model.state_dim {
            return Err(Error::length(format!(
                "node `{}` init belief dim {} vs state dim {}",
                node.id,
                node.init.dim(),
                node.model.state_dim
            )));
        }
    }

    for (e_idx, edge) in edges.iter().enumerate() {
        let sender = index.get(&edge.sender).ok_or_else(|| Error::DanglingEdge {
            edge: e_idx,
            id: edge.sender.to_string(),
        })?;
        let receiver = index
            .get(&edge.receiver)
            .ok_or_else(|| Error::DanglingEdge {
                edge: e_idx,
                id: edge.receiver.to_string(),
            })?;
        let s_dim = nodes[*sender].model.state_dim;
        let r_dim = nodes[*receiver].model.state_dim;
        if edge.sender_selector.len() != edge.law.sender_arity()
            || edge.receiver_selector.len() != edge.law.receiver_arity()
        {
            return Err(Error::length(format!(
                "edge {e_idx}: selector lengths {}/{} vs law arity {}/{}",
                edge.sender_selector.len(),
                edge.receiver_selector.len(),
                edge.law.sender_arity(),
                edge.law.receiver_arity()
            )));
        }
        for &idx in &edge.sender_selector {
            if idx >= s_dim {
                return Err(Error::SelectorOutOfRange {
                    node: edge.sender.to_string(),
                    index: idx,
                    dim: s_dim,
                });
            }
        }
        for &idx in &edge.receiver_selector {
            if idx >= r_dim {
                return Err(Error::SelectorOutOfRange {
                    node: edge.receiver.to_string(),
                    index: idx,
                    dim: r_dim,
                });
            }
        }
        if edge.target >= r_dim {
            return Err(Error::SelectorOutOfRange {
                node: edge.receiver.to_string(),
                index: edge.target,
                dim: r_dim,
            });
        }
        if edge.mode == MessageMode::Probabilistic && edge.law.linear_coeffs().is_none() {
            return Err(Error::invalid(format!(
                "edge {e_idx}: probabilistic mode needs a law with linear coefficients"
            )));
        }
    }

    Ok(SystemGraph {
        nodes,
        edges,
        index,
    })
}

/// Belief snapshot of one node at a register label.
#[derive(Debug, Clone)]
pub struct RegisterEntry {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Snapshot of every node's belief at one schedule label.
#[derive(Debug, Clone)]
pub struct GlobalRegister {
    entries: HashMap<NodeId, RegisterEntry>,
}

impl GlobalRegister {
    /// Register at the initial label: each node's initial belief.
    pub fn init_from(graph: &SystemGraph) -> Self {
        let entries = graph
            .nodes()
            .iter()
            .map(|n| {
                (
                    n.id.clone(),
                    RegisterEntry {
                        mean: n.init.mean.clone(),
                        cov: n.init.cov.clone(),
                    },
                )
            })
            .collect();
        GlobalRegister { entries }
    }

    pub fn get(&self, id: &NodeId) -> Result<&RegisterEntry> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::MissingRegisterEntry {
                node: id.to_string(),
            })
    }

    pub fn set(&mut self, id: NodeId, entry: RegisterEntry) {
        self.entries.insert(id, entry);
    }

    pub fn set_belief(&mut self, id: NodeId, belief: &GaussianBelief) {
        self.set(
            id,
            RegisterEntry {
                mean: belief.mean.clone(),
                cov: belief.cov.clone(),
            },
        );
    }
}

/// Evaluate every edge into `receiver` against a frozen register and
/// aggregate per target channel.
///
/// Message means sum additively; probabilistic edges also contribute their
/// first-order force variance (independent sources, so variances add).
pub fn collect_messages(
    graph: &SystemGraph,
    receiver: &NodeId,
    register: &GlobalRegister,
) -> Result<NodeInputs> {
    let node = graph.node(receiver)?;
    let mut inputs = NodeInputs {
        mean: vec![0.0; node.model.state_dim],
        variance: vec![0.0; node.model.state_dim],
    };
    for &e_idx in &graph.incoming_edges(receiver) {
        let msg = edge_message(graph, e_idx, register)?;
        let edge = &graph.edges()[e_idx];
        inputs.mean[edge.target] += msg.mean;
        if let Some(var) = msg.variance {
            inputs.variance[edge.target] += var;
        }
    }
    Ok(inputs)
}

/// Evaluate a single edge against a register.
pub fn edge_message(
    graph: &SystemGraph,
    edge_index: usize,
    register: &GlobalRegister,
) -> Result<Message> {
    edge_message_between(graph, edge_index, register, register)
}

/// Evaluate a single edge reading the sender side from one register and the
/// receiver side from another. The AB2 schedule uses this to feed the law
/// sender states extrapolated half a step ahead while the receiver keeps its
/// own current-label states.
pub fn edge_message_between(
    graph: &SystemGraph,
    edge_index: usize,
    sender_register: &GlobalRegister,
    receiver_register: &GlobalRegister,
) -> Result<Message> {
    let edge = &graph.edges()[edge_index];
    let s_entry = sender_register.get(&edge.sender)?;
    let r_entry = receiver_register.get(&edge.receiver)?;
    let s_sel: Vec<f64> = edge
        .sender_selector
        .iter()
        .map(|&i| s_entry.mean[i])
        .collect();
    let r_sel: Vec<f64> = edge
        .receiver_selector
        .iter()
        .map(|&i| r_entry.mean[i])
        .collect();
    let mean = edge.law.eval(&s_sel, &r_sel)?;
    let variance = match edge.mode {
        MessageMode::Deterministic => None,
        MessageMode::Probabilistic => {
            let (k, c) = edge
                .law
                .linear_coeffs()
                .expect("validated at build_graph");
            let p_s = s_entry
                .cov
                .select(&edge.sender_selector, &edge.sender_selector);
            let p_r = r_entry
                .cov
                .select(&edge.receiver_selector, &edge.receiver_selector);
            Some(interface_force_variance(&p_s, &p_r, k, c)?)
        }
    };
    Ok(Message { mean, variance })
}

/// Rebinding table for [`embed_subgraph`], keyed by the *other* endpoint of
/// each outer edge that touched the replaced node.
#[derive(Debug, Clone, Default)]
pub struct BoundaryMap {
    /// Outer edges `other -> replaced`: which inner node receives them,
    /// through which selector, driving which target equation.
    pub inbound: HashMap<NodeId, (NodeId, Vec<usize>, usize)>,
    /// Outer edges `replaced -> other`: which inner node sends them,
    /// through which selector.
    pub outbound: HashMap<NodeId, (NodeId, Vec<usize>)>,
}

/// Replace `replaced` in `outer` by the whole of `inner`, rebinding the
/// boundary edges through `boundary`.
///
/// Inner node ids are prefixed `"{replaced}.{id}"` so the flattened graph
/// cannot collide with outer ids. The result is an ordinary flat graph —
/// scheduling does not distinguish former intra- from inter-subsystem
/// edges — and is re-validated from scratch.
pub fn embed_subgraph(
    outer: &SystemGraph,
    replaced: &NodeId,
    inner: &SystemGraph,
    boundary: &BoundaryMap,
) -> Result<SystemGraph> {
    if outer.node_index(replaced).is_none() {
        return Err(Error::BoundaryMismatch {
            context: format!("outer graph has no node `{replaced}`"),
        });
    }
    let compose = |id: &NodeId| NodeId::new(format!("{replaced}.{id}"));

    let mut nodes: Vec<SubsystemNode> = outer
        .nodes()
        .iter()
        .filter(|n| &n.id != replaced)
        .cloned()
        .collect();
    for inner_node in inner.nodes() {
        let mut n = inner_node.clone();
        n.id = compose(&inner_node.id);
        nodes.push(n);
    }

    let mut edges = Vec::new();
    for (e_idx, edge) in outer.edges().iter().enumerate() {
        let touches_sender = &edge.sender == replaced;
        let touches_receiver = &edge.receiver == replaced;
        if touches_sender && touches_receiver {
            return Err(Error::BoundaryMismatch {
                context: format!("outer edge {e_idx} is a self-loop on the replaced node"),
            });
        }
        let mut e = edge.clone();
        if touches_receiver {
            let (inner_id, selector, target) =
                boundary.inbound.get(&edge.sender).ok_or_else(|| {
                    Error::BoundaryMismatch {
                        context: format!(
                            "no inbound binding for outer edge {e_idx} from `{}`",
                            edge.sender
                        ),
                    }
                })?;
            if inner.node_index(inner_id).is_none() {
                return Err(Error::BoundaryMismatch {
                    context: format!("inbound binding names unknown inner node `{inner_id}`"),
                });
            }
            e.receiver = compose(inner_id);
            e.receiver_selector = selector.clone();
            e.target = *target;
        }
        if touches_sender {
            let (inner_id, selector) =
                boundary.outbound.get(&edge.receiver).ok_or_else(|| {
                    Error::BoundaryMismatch {
                        context: format!(
                            "no outbound binding for outer edge {e_idx} to `{}`",
                            edge.receiver
                        ),
                    }
                })?;
            if inner.node_index(inner_id).is_none() {
                return Err(Error::BoundaryMismatch {
                    context: format!("outbound binding names unknown inner node `{inner_id}`"),
                });
            }
            e.sender = compose(inner_id);
            e.sender_selector = selector.clone();
        }
        edges.push(e);
    }
    for edge in inner.edges() {
        let mut e = edge.clone();
        e.sender = compose(&edge.sender);
        e.receiver = compose(&edge.receiver);
        edges.push(e);
    }

    build_graph(nodes, edges)
}
