use std::fmt;

use crate::io::SourceSpan;
use crate::structure::QueryClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A syntax error produced by one of the text parsers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("query is not tree-shaped: {0}")]
    NotTreeShaped(String),
    #[error("unsupported query class {0:?}")]
    Unsupported(QueryClass),
    #[error("variable {0} does not occur in the query")]
    UnknownVariable(String),
    #[error("query is not conformant: {0}")]
    NotConformant(String),
    #[error("query is not a derivative: {0}")]
    NotDerivative(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("signature too large for exhaustive verification: {0}")]
    SignatureTooLarge(String),
}
