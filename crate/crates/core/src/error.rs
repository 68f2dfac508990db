use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported layout: {cells} cells (only 1 or 7 are supported)")]
    UnsupportedLayout { cells: usize },

    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate placement: terminal {terminal} of cell {cell} coincides with base station {bs}")]
    DegeneratePlacement { bs: usize, cell: usize, terminal: usize },

    #[error("invalid fading snapshot: {0}")]
    InvalidSnapshot(String),

    #[error("antenna count {0} is too small (need at least 2)")]
    InvalidAntennaCount(usize),

    #[error("invalid rate coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid energy budget: {0}")]
    InvalidBudget(String),

    #[error("data power {p_u} outside the feasible bracket [0, {upper}]")]
    OutOfBracket { p_u: f64, upper: f64 },

    #[error("objective is not finite at p_u = {0}")]
    NonFiniteObjective(f64),

    #[error("sum spectral efficiency is zero; bit energy undefined")]
    ZeroSpectralEfficiency,

    #[error("pilot power must be positive, got {0}")]
    InvalidPilot(f64),

    #[error("at least {min} trials required, got {got}")]
    TooFewTrials { min: usize, got: usize },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV output failure on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
