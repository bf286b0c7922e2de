//! Reference systems the estimation stack is exercised on: mass–spring
//! chains (uniform N-DOF and a six-DOF three-subsystem layout with a
//! structural defect), second-order oscillator networks on power-grid
//! topologies, the grid case-file parser feeding them, and the
//! generator-seeded partitioner that turns a grid into subsystem clusters.

pub mod chain;
pub mod chain6;
pub mod kuramoto;
pub mod matpower;
pub mod partition;
