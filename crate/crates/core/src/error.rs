use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("invalid target pose: {0}")]
    InvalidPose(String),

    #[error("contour tangent vanishes at u = {u:.6} (curve is not regular)")]
    SingularTangent { u: f64 },

    #[error("quadrature did not converge: {coarse:.12e} vs {fine:.12e}")]
    QuadratureNonConvergence { coarse: f64, fine: f64 },

    #[error("fields are tabulated on different grids")]
    GridMismatch,

    #[error("no part of the contour is illuminated by the radar")]
    NoIllumination,

    /// The information matrix is singular; `null_space` holds an orthonormal
    /// basis (in parameter order) of the unidentifiable combinations.
    #[error("unidentifiable parameters: {reason}")]
    Unidentifiable {
        reason: String,
        null_space: Vec<Vec<f64>>,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from a singular or degenerate information
    /// matrix rather than from bad input.
    pub fn is_singularity(&self) -> bool {
        matches!(self, Error::Unidentifiable { .. } | Error::NoIllumination)
    }

    /// Copy of the error. `Error` is not `Clone` because of the wrapped
    /// I/O and JSON errors; those become their message. Singular kinds,
    /// which decide exit codes and missing values, keep their payload.
    pub fn replicate(&self) -> Error {
        match self {
            Error::InvalidContour(s) => Error::InvalidContour(s.clone()),
            Error::InvalidPose(s) => Error::InvalidPose(s.clone()),
            Error::SingularTangent { u } => Error::SingularTangent { u: *u },
            Error::QuadratureNonConvergence { coarse, fine } => Error::QuadratureNonConvergence {
                coarse: *coarse,
                fine: *fine,
            },
            Error::GridMismatch => Error::GridMismatch,
            Error::NoIllumination => Error::NoIllumination,
            Error::Unidentifiable { reason, null_space } => Error::Unidentifiable {
                reason: reason.clone(),
                null_space: null_space.clone(),
            },
            Error::InvalidScenario(s) => Error::InvalidScenario(s.clone()),
            Error::Config(s) => Error::Config(s.clone()),
            Error::Io(e) => Error::Config(e.to_string()),
            Error::Json(e) => Error::Config(e.to_string()),
        }
    }
}
