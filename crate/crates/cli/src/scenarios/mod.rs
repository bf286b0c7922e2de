//! Scenario registry and dispatch. Every runner is pure in
//! `(config, seeds)`: two runs of the same config differ only in measured
//! wall-clock metrics and the report timestamp. Comparison scenarios build
//! one truth per replicate and feed every compared method the same noisy
//! measurement bytes.

use kalgraph::numerics::Rng;

use crate::{CliError, RunConfig, ScenarioOutput};

mod chain6;
mod chain_forward;
mod chain_inverse;
mod grid;
mod hierarchy;
mod scaling;

/// Registered scenario names, in listing order.
pub const SCENARIOS: &[&str] = &[
    "chain4-forward",
    "chain4-inverse-det",
    "chain4-inverse-prob",
    "chain4-inverse-learned",
    "chain4-centralized",
    "chain6-inverse",
    "chain6-diffusion",
    "chain-scaling",
    "grid-case9-centralized",
    "grid-case9-distributed",
    "grid-case9-wls",
    "grid-case9-wnls",
    "grid-case14-centralized",
    "grid-case14-distributed",
    "grid-case14-wls",
    "grid-case14-wnls",
    "grid-scaling",
    "hierarchy-toy",
];

pub fn run_scenario(config: &RunConfig) -> Result<ScenarioOutput, CliError> {
    use chain_inverse::Variant;
    match config.scenario.as_str() {
        "chain4-forward" => chain_forward::run(config),
        "chain4-inverse-det" => chain_inverse::run(config, Variant::Deterministic),
        "chain4-inverse-prob" => chain_inverse::run(config, Variant::Probabilistic),
        "chain4-inverse-learned" => chain_inverse::run(config, Variant::Learned),
        "chain4-centralized" => chain_inverse::run(config, Variant::CentralizedOnly),
        "chain6-inverse" => chain6::run_inverse(config),
        "chain6-diffusion" => chain6::run_diffusion(config),
        "chain-scaling" => scaling::run_chain(config),
        "grid-scaling" => scaling::run_grid(config),
        "hierarchy-toy" => hierarchy::run(config),
        name => {
            if let Some(rest) = name.strip_prefix("grid-") {
                if let Some((case, method)) = rest.rsplit_once('-') {
                    if let Some(method) = grid::Method::parse(method) {
                        return grid::run(config, case, method);
                    }
                }
            }
            Err(unknown_scenario(name))
        }
    }
}

pub(crate) fn unknown_scenario(name: &str) -> CliError {
    CliError::UnknownScenario {
        name: name.to_string(),
        valid: SCENARIOS.join(", "),
    }
}

/// Noise stream of replicate `r`: explicit seed when configured, an
/// independent derived stream otherwise.
pub(crate) fn replicate_rng(config: &RunConfig, r: usize) -> Rng {
    match config.seeds.get(r) {
        Some(&seed) => Rng::from_seed(seed),
        None => Rng::from_seed(config.seeds[0]).derive(&format!("replicate-{r}")),
    }
}

/// Schedule length covering `t_final` at step `dt`.
pub(crate) fn steps_for(t_final: f64, dt: f64) -> usize {
    (t_final / dt).round() as usize
}

/// Median of a sample (mean of the middle pair on even lengths).
pub(crate) fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean of a sample.
pub(crate) fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "mean of empty sample");
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_streams_differ_and_reproduce() {
        let mut cfg = RunConfig::default();
        cfg.seeds = vec![7, 9];
        let mut a0 = replicate_rng(&cfg, 0);
        let mut b0 = replicate_rng(&cfg, 0);
        assert_eq!(a0.normal(), b0.normal());
        let mut a1 = replicate_rng(&cfg, 1);
        let mut a5 = replicate_rng(&cfg, 5);
        let x = a1.normal();
        assert_ne!(x, a5.normal());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn malformed_grid_names_fall_through_to_unknown() {
        for name in ["grid-case9", "grid-case9-bogus", "grid--"] {
            let err = run_scenario(&RunConfig {
                scenario: name.into(),
                ..RunConfig::default()
            });
            assert!(
                matches!(err, Err(CliError::UnknownScenario { .. })),
                "{name} should be unknown"
            );
        }
    }
}
