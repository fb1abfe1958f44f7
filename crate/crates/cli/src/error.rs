//! CLI error classes and their process exit codes.

use thiserror::Error;
use unstable_entropy::Error as CoreError;

/// Exit codes: 0 success, 1 property violation, 2 config error, 3 resource
/// budget or other runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("property violation: {0}")]
    Violation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Sort a core error into the config or runtime class. Parameter and model
/// problems are config errors; work that starts and cannot finish is a
/// runtime error.
pub fn classify(e: CoreError) -> CliError {
    match e {
        CoreError::NotUnimodular(_)
        | CoreError::NoUnstableDirection
        | CoreError::NoStableDirection
        | CoreError::UnsupportedSpectrum(_)
        | CoreError::UnsupportedLeafDimension { .. }
        | CoreError::DiameterExceeded { .. }
        | CoreError::LeafTooShort { .. }
        | CoreError::ThetaTooLarge { .. }
        | CoreError::EpsilonOutOfRange(_)
        | CoreError::WindowTooSmall(_)
        | CoreError::IncompatibleScheme(_)
        | CoreError::InvalidStochastic(_)
        | CoreError::InvalidParameter(_) => CliError::Config(e.to_string()),
        CoreError::BudgetExceeded { .. }
        | CoreError::TooManyCandidates { .. }
        | CoreError::CoverageImpossible { .. }
        | CoreError::MatrixPowerOverflow(_)
        | CoreError::StepsOutOfRange(..)
        | CoreError::DifferentLeaf
        | CoreError::WindowTooShort { .. }
        | CoreError::LengthMismatch(..)
        | CoreError::MassDeficit(_)
        | CoreError::ZeroMassCell
        | CoreError::RegionOutsideSupport => CliError::Runtime(e.to_string()),
    }
}
