//! Experiment runner around the [`kalgraph`] library: a run configuration
//! picks a registered scenario, the runner builds the testbed and graph,
//! executes the schedules and estimators, and emits a JSON report plus
//! deterministic trajectory CSVs. Identical `(config, seeds)` reproduce
//! identical CSV bytes; wall-clock data lives only in the JSON metadata.

use std::path::PathBuf;

pub mod config;
pub mod report;
pub mod scenarios;

pub use config::RunConfig;
pub use report::{ExperimentReport, ScenarioOutput, Table};

/// Runner-level error; library errors keep their scenario context.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown scenario `{name}`; valid scenarios: {valid}")]
    UnknownScenario { name: String, valid: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] kalgraph::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Directory holding the bundled network case files. Resolution order:
/// `KALGRAPH_DATA_DIR`, `./data`, then the repository copy next to the
/// workspace manifest.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("KALGRAPH_DATA_DIR") {
        return dir.into();
    }
    let local = PathBuf::from("data");
    if local.is_dir() {
        return local;
    }
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

/// Run a configured scenario end to end and write its report files under
/// `config.out/<scenario>/`.
pub fn execute(config: &RunConfig) -> Result<ExperimentReport, CliError> {
    config.validate()?;
    let output = scenarios::run_scenario(config)?;
    report::emit(config, output)
}
