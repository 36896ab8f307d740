//! Error type with the documented process exit codes: 0 success, 2 config
//! error, 3 data error, 4 numerical failure (1 for plain I/O).

use rdnp::confounder::ConfounderError;
use rdnp::dataset::DataError;
use rdnp::local::LocalError;
use rdnp::oracle::OracleError;
use rdnp::partition::ModelError;
use rdnp::sampler::SamplerError;
use rdnp::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SynthError::Data(inner) => inner.into(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidHyperparameters(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SamplerError::Model(inner) => inner.into(),
            SamplerError::TraceTooShort { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ConfounderError> for CliError {
    fn from(e: ConfounderError) -> Self {
        match e {
            ConfounderError::NonPositiveV | ConfounderError::InvalidBasis => {
                CliError::Config(e.to_string())
            }
            ConfounderError::SolveFailure(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LocalError> for CliError {
    fn from(e: LocalError) -> Self {
        match e {
            LocalError::NoDraws => CliError::Data(e.to_string()),
            LocalError::InvalidLevel => CliError::Config(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge { .. } => CliError::Data(e.to_string()),
            OracleError::Model(inner) => inner.into(),
        }
    }
}
