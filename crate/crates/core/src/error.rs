use thiserror::Error;

use crate::geometry::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("perturbation {delta_nm} nm exceeds the limit of {max_nm} nm")]
    DeltaTooLarge { delta_nm: f64, max_nm: f64 },
    #[error("invalid geometry: {0}")]
    Invalid(ValidationReport),
    #[error("raster resolution {0} is below the minimum of 16")]
    ResolutionTooSmall(usize),
    #[error("expected 7 rings for the optimizer parameter vector, found {0}")]
    RingCount(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmeError {
    #[error("invalid geometry: {0}")]
    Invalid(ValidationReport),
    #[error("empty basis: gmax {gmax} admits no guided modes")]
    EmptyBasis { gmax: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("dielectric matrix is not positive definite")]
    DielectricMatrix,
    #[error("no candidate modes to track")]
    NoCandidates,
    #[error("basis mismatch: reference has {reference} coefficients, candidate has {candidate}")]
    BasisMismatch { reference: usize, candidate: usize },
    #[error("mode at {frequency} c/a lies below the light line of every channel (Q is infinite)")]
    NoRadiativeChannels { frequency: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Solver(#[from] GmeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("channel list is empty")]
    NoChannels,
    #[error("all channel amplitudes are zero")]
    ZeroAmplitude,
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error("gradient probe for parameter {index} stayed invalid after shrinking the step")]
    ProbeInvalid { index: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("gradient component {0} is not finite")]
    NonFiniteGradient(usize),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("initial geometry: {0}")]
    Init(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 3 channels, got {0}")]
    TooFewChannels(usize),
    #[error("channel positions are collinear")]
    Degenerate,
    #[error("total channel power is zero")]
    ZeroPower,
    #[error("numerical aperture {0} outside [0, 1]")]
    NumericalAperture(f64),
    #[error("NA list must be sorted ascending")]
    Unsorted,
    #[error(transparent)]
    Solver(#[from] GmeError),
}
