use std::process::ExitCode;

use ocbic::{BicError, ConstraintError, GlmError, ModelError, MvnError, OracleError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Bic(#[from] BicError),
    #[error(transparent)]
    Mvn(#[from] MvnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model list: {0}")]
    Spec(#[from] serde_json::Error),
}

fn oracle_is_numerical(e: &OracleError) -> bool {
    matches!(e, OracleError::AcceptanceTooLow { .. } | OracleError::NonFinite(_) | OracleError::NotConcave(_))
}

impl CliError {
    /// 3 when the inputs were valid but the computation failed, 2 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        let numerical = match self {
            CliError::Bic(e) => e.is_numerical(),
            CliError::Glm(e) => matches!(e, GlmError::Separation | GlmError::NotConverged(_) | GlmError::DegenerateVariance),
            CliError::Sim(SimError::Bic(e)) => e.is_numerical(),
            CliError::Sim(SimError::Oracle(e)) => oracle_is_numerical(e),
            CliError::Sim(SimError::Glm(_)) => true,
            _ => false,
        };
        ExitCode::from(if numerical { 3 } else { 2 })
    }
}
