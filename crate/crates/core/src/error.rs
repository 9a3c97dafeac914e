use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A selection puts two pairs in one agent block, or indexes past a block.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Exhaustive enumeration would exceed the configured cap.
    #[error("enumeration of {required} feasible sets exceeds cap {cap}")]
    Size { required: u128, cap: u128 },

    /// A point lies outside the partition matroid polytope or a numeric
    /// argument is out of range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("slot mapping error: {0}")]
    Mapping(String),

    /// Every action of an agent is masked out.
    #[error("infeasible policy row: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),
}
