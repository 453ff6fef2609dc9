use thiserror::Error;

/// Errors raised by the engine.
///
/// Numerical failure modes of individual trajectories (nodes, leaving the
/// grid) are not errors; they are recorded as trajectory status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expected a field in the {expected} representation, got {found}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("ill-posed Poisson source: integral {integral:e} exceeds {tolerance:e}")]
    IllPosedSource { integral: f64, tolerance: f64 },

    #[error("potential `{0}` has no momentum-space operator form")]
    UnsupportedPotential(&'static str),

    #[error("state is not normalized: norm {norm} deviates from 1 by more than {tolerance:e}")]
    NotNormalized { norm: f64, tolerance: f64 },

    #[error(
        "boundary mass violation at t = {time}: {mass:e} of the probability lies within \
         {cells} cells of the {representation} grid edge on axis {axis} (limit {limit:e})"
    )]
    BoundaryMass {
        time: f64,
        representation: &'static str,
        axis: usize,
        cells: usize,
        mass: f64,
        limit: f64,
    },

    #[error("environment packets overlap: |<chi1|chi2>| = {overlap:e} exceeds {limit:e}")]
    Overlap { overlap: f64, limit: f64 },

    #[error("overlapping macrostate regions `{0}` and `{1}`")]
    OverlappingRegions(String, String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
