//! Scenario files, built-in presets, execution and reporting.

use std::path::PathBuf;

use thiserror::Error;

use crate::graph::GraphError;
use crate::riccati::RiccatiError;
use crate::sync::SyncError;
use crate::system::SystemError;

pub mod config;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, AgentConfig, DesignConfig, InitialState, Mode, ScenarioConfig, SystemSpec, Violation};
pub use presets::{example1, example2, preset, PRESETS};
pub use report::{compare_runs, Comparison, MetricsReport, SyncMetrics};
pub use run::{run_scenario, CsvTable, RunDetail, ScenarioRun};

fn join_lines(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {message}", line.map_or("parse error".to_string(), |l| format!("parse error at line {l}")))]
    Parse { line: Option<usize>, message: String },
    #[error("invalid scenario:\n{}", join_lines(.0))]
    Validation(Vec<Violation>),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("step {k}{}: {message}", agent.map_or(String::new(), |i| format!(", agent {}", i + 1)))]
    Step { k: usize, agent: Option<usize>, message: String },
    #[error("no circle in the open right half plane encloses the coupling eigenvalues")]
    NoEnclosingCircle,
    #[error("malformed metrics: {0}")]
    Report(String),
    #[error("comparison needs at least two runs, got {0}")]
    NotEnoughRuns(usize),
    #[error("horizon mismatch: {first} versus {other} in `{name}`")]
    HorizonMismatch { first: usize, name: String, other: usize },
}

#[cfg(test)]
mod tests;
