use thiserror::Error;

/// Errors surfaced by the relief pipeline.
///
/// Every variant maps to a stable string code (see [`ReliefError::code`]) that
/// the CLI and the HTTP service report verbatim.
#[derive(Debug, Error)]
pub enum ReliefError {
    #[error("point cloud has no normals (nx, ny, nz are required)")]
    MissingNormals,
    #[error("malformed input: {0}")]
    MalformedFile(String),
    #[error("too few points: {found} (need at least {needed})")]
    TooFewPoints { found: usize, needed: usize },
    #[error("mesh has no faces or fewer than 3 vertices")]
    EmptyMesh,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("view direction has zero length")]
    ZeroDirection,
    #[error("control target {0} is below the minimum of 100")]
    TargetTooSmall(usize),
    #[error("control target {target} exceeds the {available} visible points")]
    TargetExceedsInput { target: usize, available: usize },
    #[error("neighbor graph has a component of {size} points without a boundary anchor")]
    FloatingComponent { size: usize },
    #[error("factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("height solve produced non-finite values")]
    NonFiniteSolution,
    #[error("all points are collinear in XY")]
    DegenerateInput,
    #[error(
        "target height unreachable (best alpha={best_alpha}, beta={best_beta}, span={best_span})"
    )]
    TargetUnreachable {
        best_alpha: f64,
        best_beta: f64,
        best_span: f64,
    },
    #[error("no frame has been produced yet")]
    NoFrameYet,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("prepare exceeded its time budget")]
    PrepareTimeout,
}

impl ReliefError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ReliefError::MissingNormals => "MissingNormals",
            ReliefError::MalformedFile(_) => "MalformedFile",
            ReliefError::TooFewPoints { .. } => "TooFewPoints",
            ReliefError::EmptyMesh => "EmptyMesh",
            ReliefError::Io(_) => "IOFailure",
            ReliefError::ZeroDirection => "ZeroDirection",
            ReliefError::TargetTooSmall(_) => "TargetTooSmall",
            ReliefError::TargetExceedsInput { .. } => "TargetExceedsInput",
            ReliefError::FloatingComponent { .. } => "FloatingComponent",
            ReliefError::FactorizationFailure(_) => "FactorizationFailure",
            ReliefError::NonFiniteSolution => "NonFiniteSolution",
            ReliefError::DegenerateInput => "DegenerateInput",
            ReliefError::TargetUnreachable { .. } => "TargetUnreachable",
            ReliefError::NoFrameYet => "NoFrameYet",
            ReliefError::InvalidParams(_) => "InvalidParams",
            ReliefError::PrepareTimeout => "PrepareTimeout",
        }
    }

    /// True for errors caused by the input data rather than the pipeline.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            ReliefError::MissingNormals
                | ReliefError::MalformedFile(_)
                | ReliefError::TooFewPoints { .. }
        )
    }
}

pub type Result<T, E = ReliefError> = std::result::Result<T, E>;
