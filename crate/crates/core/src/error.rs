use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group element {0:?} exceeds orbit horizon {1}")]
    HorizonExceeded(Vec<i64>, u32),
    #[error("generators {0} and {1} do not commute at index {2}")]
    NonCommuting(usize, usize, usize),
    #[error("generator {0} is not invertible on the sample")]
    NotInvertible(usize),
    #[error("family is not a cover: index {0} is uncovered")]
    NotACover(usize),
    #[error("no admissible cover: {0}")]
    Infeasible(String),
    #[error("exact search exceeded cap: {0}")]
    SearchCapExceeded(String),
    #[error("anchor conflict: {0}")]
    AnchorConflict(String),
    #[error("case bound violated: r + s = {rs} exceeds {bound}")]
    CaseBoundViolated { rs: usize, bound: usize },
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("general position not reached after {0} draws")]
    GeneralPositionExhausted(u32),
    #[error("region overlap: {0}")]
    RegionOverlap(String),
    #[error("order bound violated: order {order} not below {bound}")]
    OrderBoundViolated { order: usize, bound: f64 },
    #[error("separation failed for pair ({0}, {1})")]
    SeparationFailed(usize, usize),
    #[error("alpha matches rational {0}/{1}")]
    RationalAlpha(i64, i64),
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("tower heights differ: {0} vs {1}")]
    HeightMismatch(u32, u32),
    #[error("factor map not equivariant at index {0} for generator {1}")]
    NotEquivariant(usize, usize),
    #[error("gate failed: {0}")]
    GateFailed(String),
    #[error("need {needed} rows, have {have}")]
    InsufficientRows { needed: usize, have: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
