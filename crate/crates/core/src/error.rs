use thiserror::Error;

/// Errors raised by the calibration library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("focal length is zero")]
    ZeroFocal,
    #[error("squared focal length is zero")]
    ZeroFocalSquare,
    #[error("squared focal length {0} is not positive")]
    NegativeSquare(f64),
    #[error("a known nonzero shear needs a known principal point v")]
    ShearWithoutV,
    #[error("invalid intrinsics spec: {0}")]
    InvalidSpec(String),
    #[error("invalid coloring: {0}")]
    InvalidColoring(String),
    #[error("no valid configuration after {0} attempts")]
    ExhaustedRetries(usize),
    #[error("point {point} is behind camera {view}")]
    BehindCamera { view: usize, point: usize },
    #[error("selection has {got} equations, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not on the variety (residual {0:e})")]
    NotOnVariety(f64),
    #[error("brute-force search limited to 7 points, got {0}")]
    TooLarge(usize),
    #[error("jacobian is numerically singular")]
    SingularJacobian,
    #[error("newton iteration did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("seed solution could not be tracked around any loop")]
    NoProgress,
    #[error("reference points are degenerate")]
    DegeneratePoints,
    #[error("no physical solution")]
    NoPhysicalSolution,
    #[error("ground-truth value is zero")]
    ZeroGroundTruth,
    #[error("camera center is zero")]
    ZeroCenter,
    #[error("no hypothesis produced a physical solution")]
    NoHypothesis,
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
