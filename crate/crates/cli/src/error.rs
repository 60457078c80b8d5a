use ionize_core::{
    AlphaError, AsymptoticsError, DynamicsError, ModelError, PropagatorError, SpectralError, VolterraError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {0}: {1}")]
    ConfigRead(String, std::io::Error),
    #[error("cannot parse config: {0}")]
    ConfigParse(serde_json::Error),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("acceptance failed: {0} of {1} criteria")]
    Acceptance(usize, usize),
    #[error("i/o error on {0}: {1}")]
    Io(String, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead(..) | CliError::ConfigParse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Acceptance(..) => 5,
            CliError::Io(..) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AlphaError> for CliError {
    fn from(e: AlphaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<VolterraError> for CliError {
    fn from(e: VolterraError) -> Self {
        match e {
            VolterraError::BadGrid(_)
            | VolterraError::BadStartup(_)
            | VolterraError::UnsupportedState(_)
            | VolterraError::Model(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::LeftHalfPlane(_)
            | SpectralError::SingularAtI { .. }
            | SpectralError::RefusedPoint { .. }
            | SpectralError::BadTruncation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NeedsBoundState(_) | DynamicsError::BadRadius(_) | DynamicsError::OutOfWindow { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<AsymptoticsError> for CliError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::BadWindow(..) | AsymptoticsError::LengthMismatch(..) | AsymptoticsError::NonPositive(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
