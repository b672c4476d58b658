use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty labeling")]
    EmptyLabeling,
    #[error("labels and points differ in length ({points} points, {labels} labels)")]
    LengthMismatch { points: usize, labels: usize },
    #[error("points must be sorted and distinct")]
    UnsortedPoints,
    #[error("boundaries must be finite and strictly increasing")]
    InvalidBoundaries,
    #[error("use constant piece")]
    UseConstantPiece,
    #[error("piecewise-linear function is discontinuous at knot {knot}")]
    Discontinuous { knot: f64 },
    #[error("invalid piecewise-linear function: {0}")]
    InvalidCpwl(String),
    #[error("mass not normalized (total {total})")]
    MassNotNormalized { total: f64 },
    #[error("overlapping segments")]
    OverlappingSegments,
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("duplicate atom at x = {0}")]
    DuplicateAtom(f64),
    #[error("hypothesis evaluated off its support at x = {0}")]
    OffSupport(f64),
    #[error("oracle cap: brute force limited to {cap} points, got {n}")]
    OracleCap { n: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("level {level} outside hierarchy range {min}..={max}")]
    LevelOutOfRange { level: usize, min: usize, max: usize },
    #[error("missing ground truth for levels {levels:?}")]
    MissingTruth { levels: Vec<usize> },
    #[error("empty grid")]
    EmptyGrid,
    #[error("wrong family: expected {expected}, got {got}")]
    WrongFamily { expected: String, got: String },
    #[error("no candidate exponent gives a finite, stable coefficient")]
    NoStableExponent,
    #[error("hypothesis kind does not match the hierarchy")]
    HypothesisKind,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
