//! Coupled-subsystem state and parameter estimation on interface graphs.
//!
//! A system is decomposed into subsystem nodes, each owning a local
//! state-space model and an estimator, joined by directed interface edges
//! that exchange generalized-force messages under a relaxation schedule.
//! Edges may carry deterministic forces, first-order force variances that
//! feed the receiver's process noise, or laws fitted from data.
//!
//! The crate layers as: [`numerics`] (dense kernels, RNG), [`models`] /
//! [`estimators`] / [`laws`] (the per-node and per-edge building blocks),
//! [`graph`] / [`schedules`] (composition and stepping), [`sindy`] /
//! [`diffusion`] (interface-law regression and defect localization),
//! [`metrics`] (run diagnostics), and [`testbeds`] (reference systems).

pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod laws;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod schedules;
pub mod sindy;
pub mod testbeds;

pub use error::{Error, Result};
pub use estimators::{wrap_angle, UkfParams};
pub use graph::{
    build_graph, collect_messages, embed_subgraph, BoundaryMap, EstimatorKind, GlobalRegister,
    InterfaceEdge, MessageMode, NodeId, SubsystemNode, SystemGraph,
};
pub use laws::{InterfaceLaw, LearnedLaw, SpringDamperLaw};
pub use metrics::MetricReport;
pub use models::{Dynamics, GaussianBelief, IntegratorKind, StateSpaceModel};
pub use numerics::{Matrix, Rng};
pub use schedules::{
    run_schedule, EdgeTrace, MeasurementSet, NodeTrace, RunTrace, ScheduleConfig, ScheduleKind,
};
