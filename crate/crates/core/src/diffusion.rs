//! Defect localization by diffusing residual-force intensity over the
//! interface graph.
//!
//! When a subsystem's internal model is wrong, the estimator absorbs the
//! model error through the interface forces; the RMS of the residual force
//! is a scalar defect intensity `q` attached to the node where it was
//! observed. Two redistribution rules spread that intensity to candidate
//! locations without re-running any estimation:
//!
//! * **one-hop** — the source keeps `q/(1+α)` and the neighbors share
//!   `α·q/(1+α)` proportionally to edge weight;
//! * **heat kernel** — `s = exp(−βL)·(q·e_src)` with `L = D − W` the
//!   weighted graph Laplacian, evaluated spectrally.
//!
//! Both rules conserve the total intensity (`exp(−βL)` is row-stochastic on
//! the all-ones vector since `L·𝟙 = 0`). Scores scale reported uncertainty
//! envelopes around a baseline trajectory: wider where suspicion is higher.

use crate::error::{Error, Result};
use crate::numerics::{matrix_exp_neg, Matrix};

/// Undirected weighted graph for intensity redistribution. Node indices
/// mirror the estimation graph's node order; weights are typically RMS
/// interface-force magnitudes over the analysis window.
#[derive(Debug, Clone)]
pub struct DiffusionGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl DiffusionGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(a, b, w) in &edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "diffusion edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("diffusion self-loop on node {a}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("diffusion edge weight {w}")));
            }
        }
        Ok(DiffusionGraph { n, edges })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Weighted degree of one node.
    pub fn degree(&self, i: usize) -> f64 {
        self.edges
            .iter()
            .filter(|&&(a, b, _)| a == i || b == i)
            .map(|&(_, _, w)| w)
            .sum()
    }

    /// Graph Laplacian `L = D − W`.
    pub fn laplacian(&self) -> Matrix {
        let mut l = Matrix::zeros(self.n, self.n);
        for &(a, b, w) in &self.edges {
            l.add_at(a, a, w);
            l.add_at(b, b, w);
            l.add_at(a, b, -w);
            l.add_at(b, a, -w);
        }
        l
    }
}

/// RMS of a residual series: the scalar defect intensity / edge weight.
pub fn rms_intensity(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let ss: f64 = series.iter().map(|v| v * v).sum();
    Ok((ss / series.len() as f64).sqrt())
}

/// Forcing left behind when a stiffness `k_star` acting on the relative
/// displacement `x_a − x_b` is removed: `−k*(x_a − x_b)` elementwise.
pub fn defect_force_stiffness(k_star: f64, x_a: &[f64], x_b: &[f64]) -> Result<Vec<f64>> {
    if x_a.len() != x_b.len() {
        return Err(Error::length(format!(
            "defect displacement series {} vs {}",
            x_a.len(),
            x_b.len()
        )));
    }
    Ok(x_a
        .iter()
        .zip(x_b)
        .map(|(a, b)| -k_star * (a - b))
        .collect())
}

/// Inertial forcing from removing an added mass: `−m*·a_base` elementwise.
pub fn defect_force_mass(m_star: f64, a_base: &[f64]) -> Vec<f64> {
    a_base.iter().map(|a| -m_star * a).collect()
}

fn check_source(graph: &DiffusionGraph, source: usize, q: f64) -> Result<()> {
    if source >= graph.n {
        return Err(Error::invalid(format!(
            "diffusion source {source} out of range for {} nodes",
            graph.n
        )));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::invalid(format!("defect intensity {q}")));
    }
    Ok(())
}

/// One-hop redistribution of intensity `q` observed at `source`.
///
/// The source keeps `q/(1+α)`; each neighbor `j` receives
/// `(w_sj/deg_s)·α·q/(1+α)`. An isolated source keeps everything.
pub fn one_hop_scores(
    graph: &DiffusionGraph,
    source: usize,
    q: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_source(graph, source, q)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("one-hop spread factor {alpha}")));
    }
    let mut scores = vec![0.0; graph.n];
    let deg = graph.degree(source);
    if deg == 0.0 {
        scores[source] = q;
        return Ok(scores);
    }
    scores[source] = q / (1.0 + alpha);
    let pool = alpha * q / (1.0 + alpha);
    for &(a, b, w) in &graph.edges {
        if a == source {
            scores[b] += pool * w / deg;
        } else if b == source {
            scores[a] += pool * w / deg;
        }
    }
    Ok(scores)
}

/// Heat-kernel redistribution `s = exp(−βL)·(q·e_src)`.
pub fn heat_kernel_scores(
    graph: &DiffusionGraph,
    source: usize,
    q: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    check_source(graph, source, q)?;
    let h = matrix_exp_neg(&graph.laplacian(), beta)?;
    Ok((0..graph.n).map(|i| q * h.get(i, source)).collect())
}

/// Score-scaled uncertainty envelope `(lower, upper)` around a baseline:
/// `baseline[t] ∓ score·σ[t]`.
pub fn envelope(baseline: &[f64], score: f64, sigma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if baseline.len() != sigma.len() {
        return Err(Error::length(format!(
            "envelope lengths {} vs {}",
            baseline.len(),
            sigma.len()
        )));
    }
    if !(score >= 0.0) || !score.is_finite() {
        return Err(Error::invalid(format!("envelope score {score}")));
    }
    let lower = baseline
        .iter()
        .zip(sigma)
        .map(|(b, s)| b - score * s)
        .collect();
    let upper = baseline
        .iter()
        .zip(sigma)
        .map(|(b, s)| b + score * s)
        .collect();
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> DiffusionGraph {
        DiffusionGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_of_a_path() {
        let l = path3().laplacian();
        let expect = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn defect_forces_match_hand_values() {
        // Stiffness removal: k* = 1e4, x_a − x_b = 1e-3 → −10 N.
        let f = defect_force_stiffness(1.0e4, &[2e-3, 0.0], &[1e-3, 0.0]).unwrap();
        assert!((f[0] + 10.0).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
        // Equal series → zero defect.
        let z = defect_force_stiffness(1.0e4, &[0.3, -0.1], &[0.3, -0.1]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        // Mass removal: m* = 100 kg, a = 0.2 m/s² → −20 N.
        let f = defect_force_mass(100.0, &[0.2, 0.0]);
        assert!((f[0] + 20.0).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
        // Length mismatch is rejected.
        assert!(defect_force_stiffness(1.0, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn one_hop_hand_values() {
        // Star: source 0, neighbors with weights 2 and 3, α = 0.6, q = 5.
        let g = DiffusionGraph::new(3, vec![(0, 1, 2.0), (0, 2, 3.0)]).unwrap();
        let s = one_hop_scores(&g, 0, 5.0, 0.6).unwrap();
        assert!((s[0] - 3.125).abs() < 1e-15);
        assert!((s[1] - 0.75).abs() < 1e-15);
        assert!((s[2] - 1.125).abs() < 1e-15);
        assert!((s.iter().sum::<f64>() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn one_hop_isolated_source_keeps_everything() {
        let g = DiffusionGraph::new(2, vec![]).unwrap();
        let s = one_hop_scores(&g, 1, 4.0, 0.6).unwrap();
        assert_eq!(s, vec![0.0, 4.0]);
    }

    #[test]
    fn one_hop_symmetric_neighbors_split_evenly() {
        let g = DiffusionGraph::new(3, vec![(1, 0, 2.5), (1, 2, 2.5)]).unwrap();
        let s = one_hop_scores(&g, 1, 1.0, 0.6).unwrap();
        assert_eq!(s[0], s[2]);
    }

    #[test]
    fn heat_kernel_conserves_intensity() {
        let g = DiffusionGraph::new(
            4,
            vec![(0, 1, 0.8), (1, 2, 1.4), (2, 3, 0.5), (0, 3, 0.3)],
        )
        .unwrap();
        let s = heat_kernel_scores(&g, 2, 7.0, 0.9).unwrap();
        assert!((s.iter().sum::<f64>() - 7.0).abs() < 1e-10);
        assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn heat_kernel_beta_zero_is_identity() {
        let s = heat_kernel_scores(&path3(), 1, 2.0, 0.0).unwrap();
        assert!((s[1] - 2.0).abs() < 1e-12);
        assert!(s[0].abs() < 1e-12 && s[2].abs() < 1e-12);
    }

    #[test]
    fn heat_kernel_matches_taylor_series() {
        // Independent oracle: 30-term Taylor series of exp(−βL) e_src.
        let g = DiffusionGraph::new(
            4,
            vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.7), (1, 3, 0.4)],
        )
        .unwrap();
        let beta = 0.9;
        let l = g.laplacian();
        let mut term = vec![0.0; 4];
        term[0] = 1.0; // e_src
        let mut sum = term.clone();
        for k in 1..30 {
            let lt = l.matvec(&term).unwrap();
            for (t, v) in term.iter_mut().zip(lt) {
                *t = -beta * v / k as f64;
            }
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
        }
        let got = heat_kernel_scores(&g, 0, 1.0, beta).unwrap();
        for i in 0..4 {
            assert!(
                (got[i] - sum[i]).abs() < 1e-10,
                "node {i}: {} vs {}",
                got[i],
                sum[i]
            );
        }
    }

    #[test]
    fn heat_kernel_decays_with_graph_distance() {
        let g = DiffusionGraph::new(
            4,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
        )
        .unwrap();
        let s = heat_kernel_scores(&g, 0, 1.0, 0.4).unwrap();
        assert!(s[0] > s[1] && s[1] > s[2] && s[2] > s[3]);
    }

    #[test]
    fn envelopes_scale_with_score() {
        let (lo, hi) = envelope(&[1.0, 2.0], 2.0, &[0.1, 0.2]).unwrap();
        assert_eq!(lo, vec![0.8, 1.6]);
        assert_eq!(hi, vec![1.2, 2.4]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(DiffusionGraph::new(2, vec![(0, 2, 1.0)]).is_err());
        assert!(DiffusionGraph::new(2, vec![(1, 1, 1.0)]).is_err());
        assert!(DiffusionGraph::new(2, vec![(0, 1, -1.0)]).is_err());
        let g = path3();
        assert!(one_hop_scores(&g, 9, 1.0, 0.6).is_err());
        assert!(one_hop_scores(&g, 0, -1.0, 0.6).is_err());
        assert!(heat_kernel_scores(&g, 0, 1.0, -0.1).is_err());
        assert!(rms_intensity(&[]).is_err());
    }

    #[test]
    fn rms_intensity_hand_value() {
        let q = rms_intensity(&[3.0, -4.0]).unwrap();
        assert!((q - (12.5_f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn laplacian_matvec_rejects_wrong_length() {
        let l = path3().laplacian();
        assert!(l.matvec(&[1.0, 2.0]).is_err());
    }
}
