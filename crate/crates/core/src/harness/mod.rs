//! Scenario scripts, experiment execution, reports and comparison.

mod compare;
mod config;
mod report;
mod runner;
mod script;

use thiserror::Error;

use crate::plant::PlantError;
use crate::rm::RmError;

pub use compare::{compare, saving_pct, write_comparison, Saving, COMPARE_FORMAT};
pub use config::{Config, CostModel, DecentralizedConfig, LatencyConfig, ValidationReport};
pub use report::{
    build_report, read_structured, run_experiment, write_csv, write_structured, write_trace, Alternative, BinTally,
    RunReport, ScenarioRecord, FORMAT_VERSION, REPORT_FORMAT, TRACE_FORMAT,
};
pub use runner::{execute, EntryRun, Execution};
pub use script::{canonical_injections, canonical_script, ScenarioScript, ScriptEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n{0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("reports are not comparable: {0}")]
    DigestMismatch(String),
    #[error("bad report: {0}")]
    Format(String),
}

impl HarnessError {
    /// Process exit status: 1 for a failed validation, 2 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

impl From<PlantError> for HarnessError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::Config(_) => HarnessError::Validation(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<RmError> for HarnessError {
    fn from(e: RmError) -> Self {
        match e {
            RmError::Topology(_) => HarnessError::Validation(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}
