//! CLI error classes mapped onto process exit codes: 1 usage, 2 data,
//! 3 infrastructure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Infra(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infra(_) => 3,
        }
    }

    pub fn data(err: impl fmt::Display) -> Self {
        CliError::Data(err.to_string())
    }

    pub fn infra(err: impl fmt::Display) -> Self {
        CliError::Infra(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Infra(msg) => write!(f, "infrastructure error: {msg}"),
        }
    }
}

impl From<frontier_core::verifier::VerifierError> for CliError {
    fn from(err: frontier_core::verifier::VerifierError) -> Self {
        if err.is_infrastructure() {
            CliError::Infra(err.to_string())
        } else {
            CliError::Data(err.to_string())
        }
    }
}

impl From<frontier_core::store::StoreError> for CliError {
    fn from(err: frontier_core::store::StoreError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<frontier_core::arith::ArithError> for CliError {
    fn from(err: frontier_core::arith::ArithError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<frontier_core::geometry::GeomError> for CliError {
    fn from(err: frontier_core::geometry::GeomError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<frontier_core::reward::RewardError> for CliError {
    fn from(err: frontier_core::reward::RewardError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<frontier_core::metrics::MetricsError> for CliError {
    fn from(err: frontier_core::metrics::MetricsError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<frontier_core::ensemble::EnsembleError> for CliError {
    fn from(err: frontier_core::ensemble::EnsembleError) -> Self {
        CliError::Data(err.to_string())
    }
}
