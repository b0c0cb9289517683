use std::fmt;
use std::process::ExitCode;

use rnsgc::garble::GarbleError;
use rnsgc::nn::NnError;
use rnsgc::protocol::ProtocolError;
use rnsgc::quantizer::QuantError;
use rnsgc::rns::RnsError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad parameters, models or inputs.
    Validation(String),
    /// Protocol violations, authentication failures and version mismatches.
    Protocol(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Io(_) => 4,
        })
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Protocol(m) => write!(f, "protocol error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<RnsError> for CliError {
    fn from(e: RnsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GarbleError> for CliError {
    fn from(e: GarbleError) -> Self {
        match e {
            GarbleError::AuthFailure { .. } | GarbleError::Malformed(_) => CliError::Protocol(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Garble(g) => g.into(),
            NnError::VersionMismatch { .. } | NnError::Malformed(_) => CliError::Protocol(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::Io(e) => e.into(),
            QuantError::Nn(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Transport(m) => CliError::Io(m),
            ProtocolError::Nn(e) => e.into(),
            e => CliError::Protocol(e.to_string()),
        }
    }
}
