//! Scenario loading, check orchestration and reporting for `rhoconn`.

pub mod report;
pub mod run;
pub mod schema;

use std::fmt;
use std::path::Path;

pub use report::{emit_report, parse_report, Format, Report, Status};
pub use run::{run_checks, select, validate_scenario, Overrides};
pub use schema::{parse_scenario, Scenario, SchemaError};

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Schema(SchemaError),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read scenario: {e}"),
            LoadError::Schema(e) => write!(f, "scenario schema error at {e}"),
        }
    }
}

impl std::error::Error for LoadError {}

pub fn load_scenario(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, stem).map_err(LoadError::Schema)
}

/// Loads a scenario and runs the named checks (`all` or none for every check).
pub fn run_scenario(path: &Path, checks: &[String], overrides: &Overrides) -> Result<Report, Box<dyn std::error::Error>> {
    let scenario = load_scenario(path)?;
    let selected = select(&scenario, checks)?;
    Ok(run_checks(&scenario, &selected, overrides))
}
