//! Scenario orchestration behind the command-line front end.

pub mod config;
pub mod report;
mod scenarios;

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::error::LabError;
pub use config::{ConfigError, Scenario, ScenarioConfig};
pub use report::{Criterion, RunReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Lab { context: String, source: LabError },
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERIA: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Lab { source, .. } if source.is_numerical_abort() => EXIT_ABORT,
            _ => EXIT_CONFIG,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for Result<T, LabError> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Lab { context: what.to_string(), source })
    }
}

/// Execute a scenario in memory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let mut report = match cfg.scenario {
        Scenario::VerifyResiduals => scenarios::verify_residuals(cfg),
        Scenario::SolitonPropagation => scenarios::soliton_propagation(cfg),
        Scenario::FreeSpreading => scenarios::free_spreading(cfg),
        Scenario::ChoquardStationary => scenarios::choquard_stationary(cfg),
        Scenario::YukawaOracle => scenarios::yukawa_oracle(cfg),
        Scenario::PerturbationStability => scenarios::perturbation_stability(cfg),
        Scenario::ParamSweep => scenarios::param_sweep(cfg),
    }?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Run, write artifacts into `out`, and return the process exit code.
/// Failed runs still leave a report carrying a `FAILED` marker.
pub fn run_and_write(cfg: &ScenarioConfig, out: &Path) -> (i32, Result<RunReport, RunError>) {
    match run_scenario(cfg) {
        Ok(report) => {
            if let Err(e) = report::write_artifacts(&report, out) {
                return (EXIT_CONFIG, Err(RunError::Io(e)));
            }
            let code = if report.all_passed() { EXIT_OK } else { EXIT_CRITERIA };
            (code, Ok(report))
        }
        Err(err) => {
            let mut failed = RunReport::new(cfg.scenario.name(), cfg.to_text());
            failed.status = "FAILED".into();
            failed.error = Some(err.to_string());
            let _ = report::write_artifacts(&failed, out);
            (err.exit_code(), Err(err))
        }
    }
}
