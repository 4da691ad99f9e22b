use mec_auth::codec::CodecError;
use mec_auth::crypto::CryptoError;
use mec_auth::handshake::HandshakeError;
use mec_auth::registry::RegistryError;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Crypto(String),
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    ClaimViolation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Crypto(_) => 3,
            CliError::Protocol(_) => 4,
            CliError::ClaimViolation(_) => 5,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Crypto(c) => c.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::UnknownCurve(_) => CliError::Config(e.to_string()),
            other => CliError::Crypto(other.to_string()),
        }
    }
}

impl From<HandshakeError> for CliError {
    fn from(e: HandshakeError) -> Self {
        CliError::Protocol(format!("{}: {e}", e.name()))
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        HandshakeError::from(e).into()
    }
}
