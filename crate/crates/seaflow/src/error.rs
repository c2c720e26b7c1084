use std::path::PathBuf;

use seaflow_core::Error as ModelError;
use serde::Serialize;

/// Exit status for malformed or inconsistent inputs.
pub const EXIT_INPUT: u8 = 1;
/// Exit status for numerical failures of the solver or the inference.
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}:{line}: negative quantity {value}")]
    NegativeQuantity { path: PathBuf, line: u64, value: f64 },

    #[error("distance labels do not match the network (missing {missing:?}, extra {extra:?})")]
    LabelMismatch { missing: Vec<String>, extra: Vec<String> },

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Model(#[from] ModelError),

    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "Io",
            CliError::Parse { .. } => "ParseError",
            CliError::NegativeQuantity { .. } => "NegativeQuantity",
            CliError::LabelMismatch { .. } => "LabelMismatch",
            CliError::Config(_) => "Config",
            CliError::Verification(_) => "VerificationFailed",
            CliError::Model(e) => model_kind(e),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => EXIT_NUMERICAL,
            CliError::Model(e) if is_numerical(e) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }

    pub fn record(&self, command: &str) -> ErrorRecord {
        ErrorRecord {
            status: "error",
            command: command.to_string(),
            kind: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

/// Contents of the error document written next to the outputs.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub command: String,
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

fn model_kind(e: &ModelError) -> &'static str {
    match e {
        ModelError::InvalidInput(_) => "InvalidInput",
        ModelError::DimensionMismatch { .. } => "DimensionMismatch",
        ModelError::NonPositiveDenominator { .. } => "NonPositiveDenominator",
        ModelError::ZeroOccupancy { .. } => "ZeroOccupancy",
        ModelError::NotRowStochastic { .. } => "NotRowStochastic",
        ModelError::NonUniqueStationary { .. } => "NonUniqueStationary",
        ModelError::UnnormalizableStationary { .. } => "UnnormalizableStationary",
        ModelError::DivergedField { .. } => "DivergedField",
        ModelError::NotConverged { .. } => "NotConverged",
        ModelError::DegenerateSystem { .. } => "DegenerateSystem",
        ModelError::InsufficientHistory { .. } => "InsufficientHistory",
        ModelError::EmptyDataset { .. } => "EmptyDataset",
        ModelError::TooFewObservations { .. } => "TooFewObservations",
        ModelError::RankDeficient { .. } => "RankDeficient",
        ModelError::InsufficientRoutes { .. } => "InsufficientRoutes",
        ModelError::GaugeInfeasible { .. } => "GaugeInfeasible",
        ModelError::SolverFailure { .. } => "SolverFailure",
        ModelError::ProxyInversionFailure { .. } => "ProxyInversionFailure",
        ModelError::UnknownPort(_) => "UnknownPort",
    }
}

/// Failures of the numerics rather than of the inputs handed to them.
fn is_numerical(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::ZeroOccupancy { .. }
            | ModelError::NotRowStochastic { .. }
            | ModelError::NonUniqueStationary { .. }
            | ModelError::UnnormalizableStationary { .. }
            | ModelError::DivergedField { .. }
            | ModelError::NotConverged { .. }
            | ModelError::DegenerateSystem { .. }
            | ModelError::RankDeficient { .. }
            | ModelError::SolverFailure { .. }
            | ModelError::ProxyInversionFailure { .. }
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_inputs_from_numerics() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_INPUT);
        assert_eq!(CliError::Model(ModelError::UnknownPort("Z".into())).exit_code(), EXIT_INPUT);
        let e = CliError::Model(ModelError::SolverFailure { starts: 16 });
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
        assert_eq!(e.record("infer").kind, "SolverFailure");
    }
}
