use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum HgError {
    /// Shape mismatch between operands, naming both shapes.
    #[error("dimension mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Dim {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Dataset / file format problems. `line` is 1-based when known.
    #[error("data error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no supervised vertices")]
    EmptyMask,

    #[error("empty neighborhood")]
    EmptyNeighborhood,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HgError>;

impl HgError {
    pub fn config(msg: impl Into<String>) -> Self {
        HgError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        HgError::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        HgError::Numerical(msg.into())
    }
}
