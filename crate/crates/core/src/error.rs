use std::fmt;

use thiserror::Error;

/// Which edge of the phase-space box a quantity touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    XLeft,
    XRight,
    VLow,
    VHigh,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Boundary::XLeft => "x-left",
            Boundary::XRight => "x-right",
            Boundary::VLow => "v-low",
            Boundary::VHigh => "v-high",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("support of species {species} reached the {boundary} boundary at t = {t}")]
    SupportEscape {
        species: &'static str,
        boundary: Boundary,
        t: f64,
    },

    #[error("non-finite value in species {species} at step {step} (t = {t})")]
    NonFinite {
        species: &'static str,
        step: usize,
        t: f64,
    },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("comparison failed: {0}")]
    ToleranceExceeded(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => 2,
            Error::SupportEscape { .. } => 3,
            Error::NonFinite { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
