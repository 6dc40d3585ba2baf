use thiserror::Error;

/// Errors produced by the geometry, solver, estimation and benchmark layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("camera centers coincide (baseline {baseline:e})")]
    CoincidentCenters { baseline: f64 },
    #[error("frame is numerically singular (|det| = {det:e})")]
    SingularFrame { det: f64 },
    #[error("epipolar constraint vanishes (|(a, b)| = {norm:e}); point is at an epipole")]
    DegenerateConstraint { norm: f64 },
    #[error("partial frame scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("pair ({i}, {j}) references an invalid view (track has {n_views} views)")]
    InvalidPairIndex { i: usize, j: usize, n_views: usize },
    #[error("pair ({i}, {j}) appears more than once")]
    DuplicatePair { i: usize, j: usize },
    #[error("insufficient constraints: {0}")]
    InsufficientConstraints(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no visible scene found after {attempts} attempts")]
    VisibilityFailure { attempts: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
