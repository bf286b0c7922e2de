//! Generator-seeded greedy partitioning of a coupling graph.
//!
//! Every generator bus seeds a cluster; clusters grow in rounds, each
//! eligible cluster (size < `s_max`) claiming the unassigned node with the
//! largest total coupling into the cluster,
//!
//! ```text
//! w_int(c, v) = Σ_{u ∈ C_c} K[v, u]
//! ```
//!
//! ties broken by the internal-to-cut ratio
//! `ρ(c, v) = w_int / (Σ_{u ∉ C_c} K[v, u] + ε)` and then by lowest node
//! index. Clusters are visited in ascending seed order, reading the live
//! assignment state, so a node claimed earlier in a round is gone for the
//! clusters after it. Nodes left unassigned when no cluster can grow are
//! attached to the non-full cluster maximising the same objective (lowest
//! cluster index on exact ties); if every cluster is full, they become
//! singletons.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Partition limits.
#[derive(Debug, Clone, Copy)]
pub struct PartitionConfig {
    /// Hard cap on cluster size.
    pub s_max: usize,
    /// Regularizer in the internal-to-cut ratio denominator.
    pub epsilon: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            s_max: 5,
            epsilon: 1e-12,
        }
    }
}

/// One cluster: member node indices (ascending) and the generator that
/// seeded it (`None` for residual singletons).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub seed: Option<usize>,
    pub nodes: Vec<usize>,
}

fn w_int(k: &Matrix, cluster: &[usize], v: usize) -> f64 {
    cluster.iter().map(|&u| k.get(v, u)).sum()
}

fn w_ext(k: &Matrix, cluster: &[usize], v: usize) -> f64 {
    let inside: f64 = w_int(k, cluster, v);
    let total: f64 = (0..k.cols()).map(|u| k.get(v, u)).sum();
    total - inside
}

/// `(w_int, ρ)` objective of attaching `v` to `cluster`.
fn objective(k: &Matrix, cluster: &[usize], v: usize, epsilon: f64) -> (f64, f64) {
    let wi = w_int(k, cluster, v);
    (wi, wi / (w_ext(k, cluster, v) + epsilon))
}

/// Lexicographic comparison with a lowest-index final tie-break baked in by
/// iteration order: callers scan candidates ascending and only replace on a
/// strict improvement.
fn improves(best: (f64, f64), cand: (f64, f64)) -> bool {
    cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1)
}

/// Partition nodes `0..k.rows()` into generator-seeded clusters.
pub fn partition_generator_seeded(
    k: &Matrix,
    generators: &[usize],
    cfg: &PartitionConfig,
) -> Result<Vec<Cluster>> {
    let n = k.rows();
    if k.cols() != n {
        return Err(Error::length(format!(
            "coupling matrix {}x{} not square",
            k.rows(),
            k.cols()
        )));
    }
    if generators.is_empty() {
        return Err(Error::invalid("no generator seeds"));
    }
    if cfg.s_max < 1 || !(cfg.epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "partition config s_max {}, epsilon {}",
            cfg.s_max, cfg.epsilon
        )));
    }
    let mut seen = vec![false; n];
    for &g in generators {
        if g >= n {
            return Err(Error::invalid(format!(
                "generator seed {g} out of range for {n} nodes"
            )));
        }
        if seen[g] {
            return Err(Error::invalid(format!("duplicate generator seed {g}")));
        }
        seen[g] = true;
    }

    let mut clusters: Vec<Cluster> = generators
        .iter()
        .map(|&g| Cluster {
            seed: Some(g),
            nodes: vec![g],
        })
        .collect();
    let mut assigned = seen;

    // Greedy expansion rounds: stop when a full round adds nothing.
    loop {
        let mut grew = false;
        for c in 0..clusters.len() {
            if clusters[c].nodes.len() >= cfg.s_max {
                continue;
            }
            let mut best: Option<(usize, (f64, f64))> = None;
            for v in 0..n {
                if assigned[v] {
                    continue;
                }
                let obj = objective(k, &clusters[c].nodes, v, cfg.epsilon);
                if obj.0 <= 0.0 {
                    continue; // not coupled to this cluster
                }
                if best.map_or(true, |(_, b)| improves(b, obj)) {
                    best = Some((v, obj));
                }
            }
            if let Some((v, _)) = best {
                clusters[c].nodes.push(v);
                assigned[v] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    // Residual assignment: best feasible cluster per node, else singleton.
    for v in 0..n {
        if assigned[v] {
            continue;
        }
        let mut best: Option<(usize, (f64, f64))> = None;
        for (c, cl) in clusters.iter().enumerate() {
            if cl.nodes.len() >= cfg.s_max || cl.seed.is_none() {
                continue;
            }
            let obj = objective(k, &cl.nodes, v, cfg.epsilon);
            if best.map_or(true, |(_, b)| improves(b, obj)) {
                best = Some((c, obj));
            }
        }
        match best {
            Some((c, _)) => clusters[c].nodes.push(v),
            None => clusters.push(Cluster {
                seed: None,
                nodes: vec![v],
            }),
        }
        assigned[v] = true;
    }

    for cl in &mut clusters {
        cl.nodes.sort_unstable();
    }
    Ok(clusters)
}

/// Mean cluster size.
pub fn average_cluster_size(clusters: &[Cluster]) -> f64 {
    let total: usize = clusters.iter().map(|c| c.nodes.len()).sum();
    total as f64 / clusters.len() as f64
}
