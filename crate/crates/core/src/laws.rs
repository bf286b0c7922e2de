//! Interface laws: how one subsystem's boundary state becomes a scalar
//! generalized force on a neighbour, and how the uncertainty of that force
//! is propagated.
//!
//! The probabilistic message pipeline is first-order: with interface force
//! `F = k·Δx + c·Δv = aᵀ δz`, `a = [k, c]ᵀ`, the force variance is
//! `aᵀ (P_s + P_r) a` from the sender's and receiver's marginal interface
//! covariances (cross-covariances between subsystems are neglected). A
//! per-target [`VarianceTracker`] turns the variance series into
//! non-negative increments, and [`inject_process_noise`] maps an increment
//! onto the receiver's process noise through one Euler step of the driven
//! velocity equation: `Q[t,t] += (dt/m)² · var`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Linear spring–damper coupling `F = sign · (k·(x_s − x_r) + c·(v_s − v_r))`.
///
/// `sign` encodes the orientation with which the force enters the receiver's
/// equation of motion, so both directions of a physical interface can share
/// one parameter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringDamperLaw {
    pub k: f64,
    pub c: f64,
    pub sign: f64,
}

impl SpringDamperLaw {
    pub fn new(k: f64, c: f64, sign: f64) -> Result<Self> {
        if !(sign == 1.0 || sign == -1.0) {
            return Err(Error::invalid(format!("spring-damper sign {sign}")));
        }
        if !k.is_finite() || !c.is_finite() {
            return Err(Error::invalid("spring-damper coefficients must be finite"));
        }
        Ok(SpringDamperLaw { k, c, sign })
    }
}

/// Learned polynomial interface law over the displacement and velocity
/// differences `Δx = x_s − x_r`, `Δv = v_s − v_r`, in the fixed basis order
/// `[Δx, Δv, Δx³, |Δv|·Δv, Δx·Δv, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedLaw {
    pub coeffs: [f64; 6],
    pub sign: f64,
}

impl LearnedLaw {
    pub fn new(coeffs: [f64; 6], sign: f64) -> Result<Self> {
        if !(sign == 1.0 || sign == -1.0) {
            return Err(Error::invalid(format!("learned law sign {sign}")));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("learned law coefficients must be finite"));
        }
        Ok(LearnedLaw { coeffs, sign })
    }

    /// Basis evaluation shared with the regression library.
    pub fn basis(dx: f64, dv: f64) -> [f64; 6] {
        [dx, dv, dx * dx * dx, dv.abs() * dv, dx * dv, 1.0]
    }
}

/// Concrete edge laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterfaceLaw {
    SpringDamper(SpringDamperLaw),
    Learned(LearnedLaw),
    /// Sender-side phase aggregate `F = gain · sin(θ_s)`, reading nothing
    /// from the receiver. Paired with [`InterfaceLaw::PhaseCosine`] on the
    /// same sender it lets a phase-coupled receiver rebuild the swing-type
    /// boundary term inside its own dynamics,
    /// `Σ gain·sin(θ_s − θ_r) = cos(θ_r)·Σ gain·sin θ_s − sin(θ_r)·Σ gain·cos θ_s`,
    /// so the receiver phase `θ_r` stays live during propagation (per sigma
    /// point) while the sender phases stay frozen in the register.
    PhaseSine { gain: f64 },
    /// Sender-side phase aggregate `F = gain · cos(θ_s)`; the counterpart of
    /// [`InterfaceLaw::PhaseSine`].
    PhaseCosine { gain: f64 },
}

impl InterfaceLaw {
    /// Number of interface components the law reads from the sender.
    pub fn sender_arity(&self) -> usize {
        match self {
            InterfaceLaw::SpringDamper(_) | InterfaceLaw::Learned(_) => 2,
            InterfaceLaw::PhaseSine { .. } | InterfaceLaw::PhaseCosine { .. } => 1,
        }
    }

    /// Number of interface components the law reads from the receiver.
    pub fn receiver_arity(&self) -> usize {
        match self {
            InterfaceLaw::SpringDamper(_) | InterfaceLaw::Learned(_) => 2,
            InterfaceLaw::PhaseSine { .. } | InterfaceLaw::PhaseCosine { .. } => 0,
        }
    }

    /// Evaluate the signed interface force from the two selected boundary
    /// states.
    pub fn eval(&self, sender: &[f64], receiver: &[f64]) -> Result<f64> {
        if sender.len() != self.sender_arity() || receiver.len() != self.receiver_arity() {
            return Err(Error::length(format!(
                "interface law arity {}/{} vs selections {}/{}",
                self.sender_arity(),
                self.receiver_arity(),
                sender.len(),
                receiver.len()
            )));
        }
        let f = match self {
            InterfaceLaw::SpringDamper(law) => {
                law.sign * (law.k * (sender[0] - receiver[0]) + law.c * (sender[1] - receiver[1]))
            }
            InterfaceLaw::Learned(law) => {
                let basis = LearnedLaw::basis(sender[0] - receiver[0], sender[1] - receiver[1]);
                law.sign
                    * basis
                        .iter()
                        .zip(&law.coeffs)
                        .map(|(b, c)| b * c)
                        .sum::<f64>()
            }
            InterfaceLaw::PhaseSine { gain } => gain * sender[0].sin(),
            InterfaceLaw::PhaseCosine { gain } => gain * sender[0].cos(),
        };
        if !f.is_finite() {
            return Err(Error::NonFinite {
                context: "interface force".into(),
            });
        }
        Ok(f)
    }

    /// `(k, c)` pair driving first-order variance propagation; `None` for
    /// laws that only support deterministic messaging.
    pub fn linear_coeffs(&self) -> Option<(f64, f64)> {
        match self {
            InterfaceLaw::SpringDamper(law) => Some((law.k, law.c)),
            InterfaceLaw::Learned(law) => Some((law.coeffs[0], law.coeffs[1])),
            InterfaceLaw::PhaseSine { .. } | InterfaceLaw::PhaseCosine { .. } => None,
        }
    }
}

/// First-order variance of a spring–damper-shaped interface force:
/// `aᵀ (P_s + P_r) a` with `a = [k, c]ᵀ` and 2×2 marginal covariances of
/// the two boundary states. Cross-covariance between the subsystems is
/// neglected by construction.
pub fn interface_force_variance(p_s: &Matrix, p_r: &Matrix, k: f64, c: f64) -> Result<f64> {
    for (name, p) in [("sender", p_s), ("receiver", p_r)] {
        if p.rows() != 2 || p.cols() != 2 {
            return Err(Error::length(format!(
                "{name} interface covariance must be 2x2, got {}x{}",
                p.rows(),
                p.cols()
            )));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{name} interface covariance"),
            });
        }
    }
    let sum = p_s.add(p_r)?;
    let a = [k, c];
    let mut var = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            var += a[i] * sum.get(i, j) * a[j];
        }
    }
    // A PSD input cannot produce a negative quadratic form; tiny negatives
    // from roundoff are clamped so downstream variance stays admissible.
    Ok(var.max(0.0))
}

/// Running tracker converting a force-variance series into the non-negative
/// increments that are actually injected: `max(0, var_k − var_{k-1})`, with
/// the stored level updated every step regardless of sign.
#[derive(Debug, Clone, Default)]
pub struct VarianceTracker {
    prev: f64,
}

impl VarianceTracker {
    pub fn new() -> Self {
        VarianceTracker { prev: 0.0 }
    }

    /// Increment to inject this step.
    pub fn increment(&mut self, var: f64) -> f64 {
        let used = (var - self.prev).max(0.0);
        self.prev = var;
        used
    }

    /// Last variance level seen.
    pub fn level(&self) -> f64 {
        self.prev
    }
}

/// Add one step of interface-force variance to the receiver's process
/// noise: `Q'[target, target] = Q[target, target] + (dt/mass)² · var_used`.
///
/// Every other entry is untouched; `mass` is the inertia dividing the force
/// in the target state equation (1 for unit-inertia equations).
pub fn inject_process_noise(
    q: &Matrix,
    var_used: f64,
    dt: f64,
    mass: f64,
    target: usize,
) -> Result<Matrix> {
    if !(mass > 0.0) {
        return Err(Error::invalid(format!("injection mass {mass}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("injection dt {dt}")));
    }
    if var_used < 0.0 || !var_used.is_finite() {
        return Err(Error::invalid(format!("injected variance {var_used}")));
    }
    if target >= q.rows() || !q.is_square() {
        return Err(Error::length(format!(
            "injection target {target} for {}x{} q",
            q.rows(),
            q.cols()
        )));
    }
    let mut out = q.clone();
    let gain = dt / mass;
    out.add_at(target, target, gain * gain * var_used);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mvn_sample, Rng};

    #[test]
    fn spring_damper_vanishes_on_equal_states() {
        let law = InterfaceLaw::SpringDamper(SpringDamperLaw::new(5e4, 300.0, 1.0).unwrap());
        let f = law.eval(&[0.02, -0.1], &[0.02, -0.1]).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn spring_damper_matches_hand_value() {
        // k·Δx = 5e4 · 0.01 = 500 N with no velocity difference.
        let law = InterfaceLaw::SpringDamper(SpringDamperLaw::new(5e4, 300.0, 1.0).unwrap());
        let f = law.eval(&[0.01, 0.0], &[0.0, 0.0]).unwrap();
        assert!((f - 500.0).abs() < 1e-12);
    }

    #[test]
    fn spring_damper_sign_flips_orientation() {
        let pos = InterfaceLaw::SpringDamper(SpringDamperLaw::new(1e3, 10.0, 1.0).unwrap());
        let neg = InterfaceLaw::SpringDamper(SpringDamperLaw::new(1e3, 10.0, -1.0).unwrap());
        let s = [0.01, 0.2];
        let r = [-0.01, 0.1];
        assert_eq!(
            pos.eval(&s, &r).unwrap(),
            -neg.eval(&s, &r).unwrap()
        );
    }

    #[test]
    fn learned_law_with_zero_coefficients_is_silent() {
        let law = InterfaceLaw::Learned(LearnedLaw::new([0.0; 6], 1.0).unwrap());
        assert_eq!(law.eval(&[0.3, -0.2], &[0.1, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn learned_law_matches_hand_evaluation() {
        // Recovered chain coefficients at Δx = 1e-4, Δv = 0:
        // 5.613034e4·1e-4 + (−2.863096e8)·1e-12 ≈ 5.6127 N.
        let law = InterfaceLaw::Learned(
            LearnedLaw::new(
                [5.613034e4, 3.308257e2, -2.863096e8, 6.696752e3, 0.0, 0.0],
                1.0,
            )
            .unwrap(),
        );
        let f = law.eval(&[1e-4, 0.0], &[0.0, 0.0]).unwrap();
        assert!((f - 5.6127).abs() < 1e-3, "got {f}");
    }

    #[test]
    fn learned_law_reduces_to_spring_damper_when_linear() {
        let spring = InterfaceLaw::SpringDamper(SpringDamperLaw::new(2e3, 15.0, 1.0).unwrap());
        let learned = InterfaceLaw::Learned(
            LearnedLaw::new([2e3, 15.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap(),
        );
        for (s, r) in [([0.01, 0.3], [0.0, 0.0]), ([-0.2, 0.5], [0.1, -0.1])] {
            let a = spring.eval(&s, &r).unwrap();
            let b = learned.eval(&s, &r).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_aggregates_read_only_the_sender() {
        let sine = InterfaceLaw::PhaseSine { gain: 17.36 };
        let cosine = InterfaceLaw::PhaseCosine { gain: 17.36 };
        assert!((sine.eval(&[0.3], &[]).unwrap() - 17.36 * 0.3_f64.sin()).abs() < 1e-12);
        assert!((cosine.eval(&[0.3], &[]).unwrap() - 17.36 * 0.3_f64.cos()).abs() < 1e-12);
        // A receiver selection is rejected outright: the whole point of the
        // pair is that the receiver side stays live in the local dynamics.
        assert!(sine.eval(&[0.3], &[0.1]).is_err());
    }

    #[test]
    fn phase_aggregate_pair_reconstructs_the_difference_sine() {
        // cos(θ_r)·gain·sin(θ_s) − sin(θ_r)·gain·cos(θ_s) = gain·sin(θ_s − θ_r).
        let gain = 11.684;
        let sine = InterfaceLaw::PhaseSine { gain };
        let cosine = InterfaceLaw::PhaseCosine { gain };
        for (ts, tr) in [(0.3_f64, 0.1_f64), (-2.9, 3.0), (1.2, -0.7)] {
            let s = sine.eval(&[ts], &[]).unwrap();
            let c = cosine.eval(&[ts], &[]).unwrap();
            let rebuilt = tr.cos() * s - tr.sin() * c;
            assert!((rebuilt - gain * (ts - tr).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn force_variance_zero_for_zero_covariances() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(interface_force_variance(&z, &z, 5e4, 300.0).unwrap(), 0.0);
    }

    #[test]
    fn force_variance_matches_hand_value_for_isotropic_covariance() {
        // P_s = P_r = 1e-6·I: var = 2e-6·(k² + c²) = 5000.18.
        let p = Matrix::identity(2).scale(1e-6);
        let var = interface_force_variance(&p, &p, 5e4, 300.0).unwrap();
        assert!((var - 5000.18).abs() < 1e-9, "got {var}");
    }

    #[test]
    fn force_variance_is_symmetric_in_endpoints() {
        let p_s = Matrix::from_rows(&[vec![2e-6, 1e-7], vec![1e-7, 3e-6]]).unwrap();
        let p_r = Matrix::from_rows(&[vec![1e-6, -2e-7], vec![-2e-7, 5e-6]]).unwrap();
        let a = interface_force_variance(&p_s, &p_r, 5e4, 300.0).unwrap();
        let b = interface_force_variance(&p_r, &p_s, 5e4, 300.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn force_variance_matches_monte_carlo_oracle() {
        // Sample δz_s ~ N(0, P_s), δz_r ~ N(0, P_r) independently and
        // compare the empirical variance of k·Δx + c·Δv with the analytic
        // quadratic form; 10^6 samples keep the error well under 1%.
        let mut rng = Rng::from_seed(42);
        let p_s = Matrix::from_rows(&[vec![4e-6, 5e-7], vec![5e-7, 2e-6]]).unwrap();
        let p_r = Matrix::from_rows(&[vec![1e-6, -3e-7], vec![-3e-7, 6e-6]]).unwrap();
        let (k, c) = (5e4, 300.0);
        let analytic = interface_force_variance(&p_s, &p_r, k, c).unwrap();

        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let zs = mvn_sample(&[0.0, 0.0], &p_s, &mut rng).unwrap();
            let zr = mvn_sample(&[0.0, 0.0], &p_r, &mut rng).unwrap();
            let f = k * (zs[0] - zr[0]) + c * (zs[1] - zr[1]);
            sum += f;
            sum2 += f * f;
        }
        let mean = sum / n as f64;
        let emp = sum2 / n as f64 - mean * mean;
        assert!(
            (emp - analytic).abs() / analytic < 0.01,
            "mc {emp} vs analytic {analytic}"
        );
    }

    #[test]
    fn tracker_emits_positive_increments_only() {
        let mut tr = VarianceTracker::new();
        assert_eq!(tr.increment(7.0), 7.0);
        assert_eq!(tr.increment(7.0), 0.0);
        assert_eq!(tr.increment(3.0), 0.0); // decrease clamps to zero
        assert_eq!(tr.level(), 3.0);
        assert_eq!(tr.increment(10.0), 7.0); // measured from the new level
    }

    #[test]
    fn tracker_telescopes_on_monotone_series() {
        let mut tr = VarianceTracker::new();
        let series = [0.5, 1.5, 2.0, 4.5, 4.5, 9.0];
        let total: f64 = series.iter().map(|&v| tr.increment(v)).sum();
        assert!((total - 9.0).abs() < 1e-12);
    }

    #[test]
    fn inject_touches_only_the_target_diagonal() {
        let q = Matrix::identity(4).scale(1e-8);
        let out = inject_process_noise(&q, 5000.18, 1e-3, 500.0, 2).unwrap();
        // (dt/m)²·var = (2e-6)²·5000.18 ≈ 2.000072e-8 added on top of 1e-8.
        assert!((out.get(2, 2) - (1e-8 + 2.000072e-8)).abs() < 1e-14);
        for i in 0..4 {
            for j in 0..4 {
                if (i, j) != (2, 2) {
                    assert_eq!(out.get(i, j), q.get(i, j));
                }
            }
        }
    }

    #[test]
    fn inject_zero_variance_is_identity() {
        let q = Matrix::identity(3).scale(1e-8);
        let out = inject_process_noise(&q, 0.0, 1e-3, 500.0, 1).unwrap();
        assert_eq!(out, q);
    }

    #[test]
    fn inject_rejects_bad_mass_and_target() {
        let q = Matrix::identity(2);
        assert!(inject_process_noise(&q, 1.0, 1e-3, 0.0, 0).is_err());
        assert!(inject_process_noise(&q, 1.0, 1e-3, 1.0, 5).is_err());
        assert!(inject_process_noise(&q, -1.0, 1e-3, 1.0, 0).is_err());
    }

    #[test]
    fn injection_preserves_positive_semidefiniteness() {
        let mut rng = Rng::from_seed(9);
        for _ in 0..20 {
            let g = Matrix::from_fn(3, 3, |_, _| rng.normal());
            let q = g.matmul(&g.transpose()).unwrap();
            let out = inject_process_noise(&q, rng.uniform(0.0, 10.0), 1e-3, 2.0, 1).unwrap();
            let (vals, _) = crate::numerics::sym_eig(&out).unwrap();
            assert!(vals[0] > -1e-10, "min eigenvalue {}", vals[0]);
        }
    }
}
