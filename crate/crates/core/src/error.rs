use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("variable {var} has an empty label set")]
    EmptyLabelSet { var: usize },

    #[error("variable index {var} out of range (graph has {n} variables)")]
    VariableOutOfRange { var: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("self-loop on variable {0}")]
    SelfLoop(usize),

    #[error("non-finite factor value in {0}")]
    NonFinite(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("assignment space of {size} exceeds the enumeration limit {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },

    #[error("graph structures differ: {0}")]
    StructureMismatch(String),

    #[error("clique of size {clique_size} needs {entries} table entries, over the budget of {budget}")]
    BudgetExceeded {
        clique_size: usize,
        entries: u128,
        budget: u128,
    },

    #[error("clique tree construction failed: {0}")]
    Internal(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("resource unit mismatch: model is in {model}, target is in {target}")]
    UnitMismatch { model: String, target: String },

    #[error("no feasible assignment: minimum achievable resource {min_resource} exceeds target {target}")]
    Infeasible { min_resource: f64, target: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
