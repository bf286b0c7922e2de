//! Report emission: trajectory tables as deterministic CSVs plus one JSON
//! summary per run. CSV cells use the shortest decimal that parses back to
//! the identical `f64`, so re-running a config reproduces the files byte
//! for byte; the JSON carries the config echo, metrics, file hashes and the
//! only wall-clock field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use kalgraph::MetricReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, RunConfig};

/// One trajectory table: a header row and homogeneous `f64` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Table {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    /// Append a row; widths are a programming invariant, not user input.
    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "table `{}` row width", self.name);
        self.rows.push(row);
    }

    /// Render the CSV body. `f64` Display prints the shortest string that
    /// round-trips, which keeps the bytes deterministic and the parse-back
    /// exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                write!(out, "{v}").expect("write to String");
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

/// What a scenario runner hands back for emission.
#[derive(Debug, Default)]
pub struct ScenarioOutput {
    pub metrics: Vec<MetricReport>,
    pub tables: Vec<Table>,
    /// Input data files whose content hashes belong in the report.
    pub data_files: Vec<PathBuf>,
}

/// JSON summary of one run. `generated_unix_ms` is the only field that
/// varies between identical reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario: String,
    pub generated_unix_ms: u64,
    pub config: RunConfig,
    pub metrics: Vec<MetricReport>,
    /// Table name → CSV file name next to the report.
    pub csv_files: BTreeMap<String, String>,
    /// File name → SHA-256 of its bytes, for inputs and emitted CSVs alike.
    pub data_hashes: BTreeMap<String, String>,
}

impl ExperimentReport {
    pub fn metric(&self, method: &str, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.method == method)
            .and_then(|m| m.get(name))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("write to String");
    }
    out
}

/// Write the run's CSVs and `report.json` under `config.out/<scenario>/`.
pub fn emit(config: &RunConfig, output: ScenarioOutput) -> Result<ExperimentReport, CliError> {
    let dir = config.out.join(&config.scenario);
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;

    let mut csv_files = BTreeMap::new();
    let mut data_hashes = BTreeMap::new();
    for table in &output.tables {
        let file = format!("{}.csv", table.name);
        let path = dir.join(&file);
        let body = table.to_csv();
        std::fs::write(&path, body.as_bytes()).map_err(CliError::io(&path))?;
        data_hashes.insert(file.clone(), sha256_hex(body.as_bytes()));
        csv_files.insert(table.name.clone(), file);
    }
    for input in &output.data_files {
        let bytes = std::fs::read(input).map_err(CliError::io(input))?;
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| input.display().to_string());
        data_hashes.insert(name, sha256_hex(&bytes));
    }

    let report = ExperimentReport {
        schema_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: config.scenario.clone(),
        generated_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        config: config.clone(),
        metrics: output.metrics,
        csv_files,
        data_hashes,
    };
    let path = report_path(config);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(report)
}

/// Path of the JSON summary `emit` writes for this config.
pub fn report_path(config: &RunConfig) -> PathBuf {
    config.out.join(&config.scenario).join("report.json")
}

/// Parse a CSV produced by [`Table::to_csv`] back into a table.
pub fn parse_csv(name: &str, text: &str) -> Result<Table, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("CSV `{name}` is empty")))?;
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut table = Table::new(name, columns);
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|e| {
                    CliError::Config(format!("CSV `{name}` row {}: {e}", i + 1))
                })
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        if row.len() != table.columns.len() {
            return Err(CliError::Config(format!(
                "CSV `{name}` row {} width {} vs header {}",
                i + 1,
                row.len(),
                table.columns.len()
            )));
        }
        table.rows.push(row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new("demo", vec!["t".into(), "x".into()]);
        t.push(vec![0.1, -3.0e-7]);
        t.push(vec![std::f64::consts::PI * 1e-13, 1.0 / 3.0]);
        let text = t.to_csv();
        let back = parse_csv("demo", &text).unwrap();
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn csv_bytes_are_stable() {
        let mut t = Table::new("demo", vec!["a".into()]);
        t.push(vec![2.5]);
        assert_eq!(t.to_csv(), "a\n2.5\n");
        assert_eq!(t.to_csv(), t.clone().to_csv());
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
