//! Run configuration: one plain JSON document per experiment, every field
//! defaulted so a config file only states what it changes. The echo of the
//! parsed struct is embedded in the run report, making the report
//! self-describing.

use std::path::{Path, PathBuf};

use kalgraph::{ScheduleConfig, ScheduleKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Top-level run configuration. `seeds` feeds replicate noise streams:
/// replicate `r` uses `seeds[r]` when present and an independent stream
/// derived from `seeds[0]` otherwise, so one seed already yields any number
/// of reproducible replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub replicates: usize,
    /// Report directory; each run writes into `out/<scenario>/`.
    pub out: PathBuf,
    /// Intra-sweep Jacobi parallelism; `None` runs sequentially.
    pub threads: Option<usize>,
    pub schedule: ScheduleCfg,
    pub chain: ChainCfg,
    pub chain6: Chain6Cfg,
    pub grid: GridCfg,
    pub scaling: ScalingCfg,
    pub diffusion: DiffusionCfg,
    pub sindy: SindyTrainCfg,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: String::new(),
            seeds: vec![42],
            replicates: 1,
            out: PathBuf::from("runs"),
            threads: None,
            schedule: ScheduleCfg::default(),
            chain: ChainCfg::default(),
            chain6: Chain6Cfg::default(),
            grid: GridCfg::default(),
            scaling: ScalingCfg::default(),
            diffusion: DiffusionCfg::default(),
            sindy: SindyTrainCfg::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !crate::scenarios::SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(CliError::UnknownScenario {
                name: self.scenario.clone(),
                valid: crate::scenarios::SCENARIOS.join(", "),
            });
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be ≥ 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be ≥ 1".into()));
        }
        for (name, v) in [
            ("chain.dt", self.chain.dt),
            ("chain.t_final", self.chain.t_final),
            ("chain.mass", self.chain.mass),
            ("chain6.dt", self.chain6.dt),
            ("chain6.t_final", self.chain6.t_final),
            ("grid.dt", self.grid.dt),
            ("grid.t_final", self.grid.t_final),
            ("sindy.train_t_final", self.sindy.train_t_final),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.scaling.sizes.iter().any(|&n| n < 4 || n % 2 != 0) {
            return Err(CliError::Config(
                "scaling.sizes entries must be even and ≥ 4".into(),
            ));
        }
        if self.scaling.sizes.is_empty() || self.scaling.grid_copies.is_empty() {
            return Err(CliError::Config("scaling size lists must be nonempty".into()));
        }
        Ok(())
    }

    /// Schedule for `steps` labels with the configured kind, inner sweeps
    /// and thread count applied.
    pub fn schedule(&self, steps: usize) -> ScheduleConfig {
        self.schedule_of(self.schedule.kind.to_core(), steps)
    }

    /// Same, overriding the kind (comparison scenarios sweep all kinds).
    pub fn schedule_of(&self, kind: ScheduleKind, steps: usize) -> ScheduleConfig {
        let mut sched = ScheduleConfig::new(kind, steps)
            .with_inner_iterations(self.schedule.inner_iterations);
        if let Some(threads) = self.threads {
            sched = sched.with_threads(threads);
        }
        sched
    }
}

/// Serializable mirror of [`ScheduleKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKindCfg {
    Jacobi,
    GaussSeidel,
    Ab2,
}

impl ScheduleKindCfg {
    pub fn to_core(self) -> ScheduleKind {
        match self {
            ScheduleKindCfg::Jacobi => ScheduleKind::Jacobi,
            ScheduleKindCfg::GaussSeidel => ScheduleKind::GaussSeidel,
            ScheduleKindCfg::Ab2 => ScheduleKind::Ab2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleCfg {
    pub kind: ScheduleKindCfg,
    pub inner_iterations: usize,
}

impl Default for ScheduleCfg {
    fn default() -> Self {
        ScheduleCfg {
            kind: ScheduleKindCfg::Jacobi,
            inner_iterations: 1,
        }
    }
}

/// Four-DOF chain testbed settings (also reused by the six-mass
/// hierarchy demo and the chain scaling sweep, which override sizes).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainCfg {
    pub dt: f64,
    pub t_final: f64,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Accelerometer noise standard deviation (the measurement variance is
    /// its square).
    pub accel_noise_std: f64,
    pub x1_init: f64,
    pub v1_init: f64,
    pub kappa_init: f64,
    pub kappa_prior_std: f64,
    pub q_kappa: f64,
    pub q_state: f64,
    pub p0_state: f64,
}

impl Default for ChainCfg {
    fn default() -> Self {
        ChainCfg {
            dt: 1e-3,
            t_final: 10.0,
            mass: 500.0,
            stiffness: 5.0e4,
            damping: 300.0,
            accel_noise_std: 0.01,
            x1_init: 0.01,
            v1_init: 0.01,
            kappa_init: 0.6,
            kappa_prior_std: 0.5,
            q_kappa: 1e-8,
            q_state: 1e-8,
            p0_state: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Chain6Cfg {
    pub dt: f64,
    pub t_final: f64,
}

impl Default for Chain6Cfg {
    fn default() -> Self {
        Chain6Cfg {
            dt: 2e-3,
            t_final: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCfg {
    /// Base case file stem under the data directory (`case9`, `case14`).
    pub case: String,
    pub t_final: f64,
    pub dt: f64,
    /// Measurement noise std on every phase/frequency channel.
    pub sigma: f64,
    /// Partition size cap.
    pub s_max: usize,
    /// Std of the initial filter-mean perturbation around the truth.
    pub init_std: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg {
            case: "case9".into(),
            t_final: 3.0,
            dt: 0.01,
            sigma: 0.02,
            s_max: 5,
            init_std: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingCfg {
    /// Chain sizes (total masses) for the runtime sweep.
    pub sizes: Vec<usize>,
    /// Schedule length of each timed run.
    pub steps: usize,
    /// Std of the piecewise-constant random excitation (an unknown
    /// disturbance to the filters).
    pub forcing_std: f64,
    /// Steps each random force level is held.
    pub hold_steps: usize,
    /// Network copies for the grid runtime sweep.
    pub grid_copies: Vec<usize>,
    pub grid_steps: usize,
}

impl Default for ScalingCfg {
    fn default() -> Self {
        ScalingCfg {
            sizes: vec![8, 16, 32, 64],
            steps: 200,
            forcing_std: 100.0,
            hold_steps: 50,
            grid_copies: vec![1, 2, 4, 8],
            grid_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionCfg {
    /// One-hop spread fraction.
    pub alpha: f64,
    /// Heat-kernel time scale.
    pub beta: f64,
}

impl Default for DiffusionCfg {
    fn default() -> Self {
        DiffusionCfg {
            alpha: 0.6,
            beta: 0.9,
        }
    }
}

/// Interface-law training settings for the learned-message scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyTrainCfg {
    pub cutoff_hz: f64,
    pub threshold: f64,
    pub max_iters: usize,
    pub train_t_final: f64,
    /// Leading seconds dropped from the regression to clear the
    /// reconstruction filter's warmup transient.
    pub trim_s: f64,
}

impl Default for SindyTrainCfg {
    fn default() -> Self {
        SindyTrainCfg {
            cutoff_hz: 0.05,
            threshold: 1.0,
            max_iters: 10,
            train_t_final: 10.0,
            trim_s: 2.0,
        }
    }
}
