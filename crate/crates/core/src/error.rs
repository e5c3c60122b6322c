use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Q(L,s) at or below its certified error floor where a positive value is required.
    #[error("determinant vanishes at L={l}, s={s} (value {value:e}, floor {floor:e})")]
    DegenerateDeterminant { l: f64, s: String, value: f64, floor: f64 },

    #[error("evaluation at pole z={0}; use the residue table instead")]
    PoleEvaluation(String),

    #[error("unsupported point: {0}")]
    UnsupportedPoint(String),

    #[error("degenerate recursion at s={0}: v^2 = 1")]
    DegenerateRecursion(String),

    #[error("random stream {0} requested twice")]
    SeedReuse(u64),

    /// Two independent evaluation routes disagreed beyond their combined error bound.
    #[error("internal cross-check failed: {0}")]
    CrossCheck(String),
}
