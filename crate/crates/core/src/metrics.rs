//! Run diagnostics: accuracy, calibration, and scaling measurements.
//!
//! Accuracy is reported as RMSE and range-normalized RMSE. Calibration uses
//! two views of the reported marginal uncertainty: empirical interval
//! coverage at a confidence level (the fraction of steps whose error lies
//! within `z·σ`, `z` the two-sided Gaussian quantile) and the mean Gaussian
//! negative log-likelihood `½·(ln 2πσ² + e²/σ²)`, which punishes both over-
//! and under-confidence. Scaling studies fit a power-law exponent by least
//! squares in log–log space over median-of-three wall-clock timings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named metric bundle for one estimation method within one experiment;
/// serialized as-is into run reports. Keys are sorted so serialization
/// order is stable across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub values: BTreeMap<String, f64>,
    /// Caveats attached to specific metrics (e.g. an NRMSE that fell back
    /// to magnitude normalization because the truth has zero range).
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn new(method: impl Into<String>) -> Self {
        MetricReport {
            method: method.into(),
            ..MetricReport::default()
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn flag(&mut self, note: impl Into<String>) {
        self.flags.push(note.into());
    }

    /// Record a normalized RMSE, flagging the zero-range fallback.
    pub fn insert_nrmse(&mut self, name: &str, n: &Nrmse) {
        self.values.insert(name.to_string(), n.value);
        if n.zero_range_fallback {
            self.flags
                .push(format!("{name}: zero-range truth, normalized by magnitude"));
        }
    }
}

/// Root-mean-square difference between two equal-length series.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::length(format!("rmse lengths {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Range-normalized RMSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    /// Set when the reference series has (numerically) zero range; `value`
    /// is then the raw RMSE instead of a normalized one.
    pub zero_range_fallback: bool,
}

/// RMSE of `estimate` against `truth`, divided by the range of `truth`.
pub fn nrmse(estimate: &[f64], truth: &[f64]) -> Result<Nrmse> {
    let e = rmse(estimate, truth)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in truth {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range > 0.0 {
        Ok(Nrmse {
            value: e / range,
            zero_range_fallback: false,
        })
    } else {
        Ok(Nrmse {
            value: e,
            zero_range_fallback: true,
        })
    }
}

/// Inverse standard-normal CDF (Acklam's rational approximation, absolute
/// error below `1.2e-9` over the open unit interval).
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("normal quantile of p = {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    Ok(x)
}

/// Fraction of steps whose error magnitude lies inside the two-sided
/// Gaussian interval `z·σ` at confidence `level` (e.g. 0.95).
pub fn coverage(errors: &[f64], stds: &[f64], level: f64) -> Result<f64> {
    if errors.len() != stds.len() {
        return Err(Error::length(format!(
            "coverage lengths {} vs {}",
            errors.len(),
            stds.len()
        )));
    }
    if errors.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("coverage level {level}")));
    }
    let z = inverse_normal_cdf(0.5 * (1.0 + level))?;
    let mut hits = 0usize;
    for (&e, &s) in errors.iter().zip(stds) {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("coverage std {s}")));
        }
        if e.abs() <= z * s {
            hits += 1;
        }
    }
    Ok(hits as f64 / errors.len() as f64)
}

/// Mean Gaussian negative log-likelihood `½·(ln 2πσ² + e²/σ²)` of an error
/// series under the reported marginal standard deviations.
pub fn nll(errors: &[f64], stds: &[f64]) -> Result<f64> {
    if errors.len() != stds.len() {
        return Err(Error::length(format!(
            "nll lengths {} vs {}",
            errors.len(),
            stds.len()
        )));
    }
    if errors.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    for (&e, &s) in errors.iter().zip(stds) {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("nll std {s}")));
        }
        total += 0.5 * ((two_pi * s * s).ln() + (e * e) / (s * s));
    }
    Ok(total / errors.len() as f64)
}

/// One scaling measurement: problem size against wall-clock seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub size: usize,
    pub seconds: f64,
}

/// Wall-clock seconds of `f`, the median of three runs.
pub fn time_median_of_three<F: FnMut()>(mut f: F) -> f64 {
    let mut times = [0.0; 3];
    for t in &mut times {
        let start = Instant::now();
        f();
        *t = start.elapsed().as_secs_f64();
    }
    times.sort_by(|a, b| a.total_cmp(b));
    times[1]
}

/// Least-squares slope of `ln seconds` against `ln size`: the empirical
/// power-law exponent of a scaling study.
pub fn log_log_slope(points: &[ScalingPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for p in points {
        if p.size == 0 || !(p.seconds > 0.0) {
            return Err(Error::invalid(format!(
                "scaling point ({}, {}) not loggable",
                p.size, p.seconds
            )));
        }
        xs.push((p.size as f64).ln());
        ys.push(p.seconds.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("scaling sizes are all identical"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn metric_report_keeps_sorted_keys_and_flags() {
        let mut r = MetricReport::new("ukf");
        r.insert("rmse_x", 0.5);
        r.insert("coverage", 0.95);
        assert_eq!(r.get("rmse_x"), Some(0.5));
        assert_eq!(
            r.values.keys().collect::<Vec<_>>(),
            vec!["coverage", "rmse_x"]
        );
        r.insert_nrmse(
            "nrmse_k",
            &Nrmse {
                value: 0.1,
                zero_range_fallback: true,
            },
        );
        assert_eq!(r.flags.len(), 1);
        assert!(r.flags[0].contains("nrmse_k"));
    }

    #[test]
    fn rmse_hand_value() {
        let e = rmse(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((e - 2.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn nrmse_divides_by_truth_range() {
        let truth = [0.0, 2.0, 4.0];
        let est = [1.0, 2.0, 3.0];
        let out = nrmse(&est, &truth).unwrap();
        let expect = ((1.0 + 0.0 + 1.0) / 3.0_f64).sqrt() / 4.0;
        assert!((out.value - expect).abs() < 1e-15);
        assert!(!out.zero_range_fallback);
    }

    #[test]
    fn nrmse_flags_zero_range() {
        let out = nrmse(&[1.0, 1.5], &[3.0, 3.0]).unwrap();
        assert!(out.zero_range_fallback);
        let expect = (0.5_f64 * (4.0 + 2.25)).sqrt();
        assert!((out.value - expect).abs() < 1e-15);
    }

    #[test]
    fn normal_quantiles_match_tabulated_values() {
        // Reference values of Φ⁻¹ to more digits than the approximation.
        let cases = [
            (0.5, 0.0),
            (0.975, 1.9599639845400545),
            (0.95, 1.6448536269514722),
            (0.99, 2.3263478740408408),
            (0.9995, 3.2905267314919255),
            (0.01, -2.3263478740408408),
            (0.0005, -3.2905267314919255),
        ];
        for (p, z) in cases {
            let got = inverse_normal_cdf(p).unwrap();
            // The approximation is good to ~1.2e-9 relative error.
            assert!(
                (got - z).abs() < 2e-9 * z.abs().max(1.0),
                "Φ⁻¹({p}) = {got}, want {z}"
            );
        }
        // Symmetry across the tails.
        let lo = inverse_normal_cdf(0.003).unwrap();
        let hi = inverse_normal_cdf(0.997).unwrap();
        assert!((lo + hi).abs() < 1e-12);
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
    }

    #[test]
    fn coverage_counts_interval_hits() {
        // z(0.95) ≈ 1.96: errors 0.5 and 1.5 are inside, 3.0 outside.
        let got = coverage(&[0.5, 1.5, 3.0], &[1.0, 1.0, 1.0], 0.95).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_of_calibrated_gaussian_errors_matches_level() {
        let mut rng = Rng::from_seed(17);
        let n = 100_000;
        let errors: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let stds = vec![1.0; n];
        let got = coverage(&errors, &stds, 0.95).unwrap();
        assert!((got - 0.95).abs() < 5e-3, "coverage {got}");
    }

    #[test]
    fn nll_hand_values() {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let v = nll(&[0.0], &[1.0]).unwrap();
        assert!((v - half_ln_2pi).abs() < 1e-15);
        let v = nll(&[1.0], &[1.0]).unwrap();
        assert!((v - (half_ln_2pi + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn nll_penalizes_overconfidence() {
        let mut rng = Rng::from_seed(23);
        let errors: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
        let calibrated = nll(&errors, &vec![1.0; 2000]).unwrap();
        let overconfident = nll(&errors, &vec![0.1; 2000]).unwrap();
        let underconfident = nll(&errors, &vec![10.0; 2000]).unwrap();
        assert!(calibrated < overconfident);
        assert!(calibrated < underconfident);
    }

    #[test]
    fn log_log_slope_recovers_a_cubic() {
        let points: Vec<ScalingPoint> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| ScalingPoint {
                size: n,
                seconds: 3e-7 * (n as f64).powi(3),
            })
            .collect();
        let slope = log_log_slope(&points).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_log_slope_tolerates_timing_noise() {
        let mut rng = Rng::from_seed(31);
        let points: Vec<ScalingPoint> = [8usize, 16, 32, 64, 128]
            .iter()
            .map(|&n| ScalingPoint {
                size: n,
                seconds: 1e-6 * (n as f64).powi(2) * (1.0 + 0.05 * rng.normal()),
            })
            .collect();
        let slope = log_log_slope(&points).unwrap();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn scaling_points_must_be_loggable() {
        let bad = [
            ScalingPoint { size: 0, seconds: 1.0 },
            ScalingPoint { size: 2, seconds: 1.0 },
        ];
        assert!(log_log_slope(&bad).is_err());
        assert!(log_log_slope(&[ScalingPoint { size: 4, seconds: 1.0 }]).is_err());
    }

    #[test]
    fn median_timing_is_positive() {
        let t = time_median_of_three(|| {
            let mut acc = 0.0;
            for i in 0..1000 {
                acc += (i as f64).sqrt();
            }
            std::hint::black_box(acc);
        });
        assert!(t >= 0.0);
    }
}
