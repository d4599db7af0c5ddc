use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::syntax::{NodeKind, SyntaxError};

/// Conditions that indicate a bug rather than bad input. They abort the
/// current script and are counted with code-generation errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InternalFault {
    #[error("unknown builtin {0:?}")]
    UnknownBuiltin(String),
    #[error("pop on empty {0} stack")]
    EmptyStack(&'static str),
    #[error("unknown object #{0}")]
    UnknownObject(u32),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("worker channel closed")]
    ChannelClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodegenErrorKind {
    UnsupportedConstruct,
    MalformedNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at node {node_id} ({node_kind}): {message}")]
pub struct CodegenError {
    pub node_id: u32,
    pub node_kind: NodeKind,
    pub offset: usize,
    pub kind: CodegenErrorKind,
    pub message: String,
}

/// Why lowering of a script stopped early.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Abort {
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error("internal fault: {0}")]
    Fault(#[from] InternalFault),
    #[error("lambda-call budget of the batch exhausted")]
    Truncated,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error("internal fault: {0}")]
    Fault(#[from] InternalFault),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid vocabulary file: {0}")]
    Vocab(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("lambda-call budget exhausted")]
    Truncated,
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<Abort> for Error {
    fn from(a: Abort) -> Self {
        match a {
            Abort::Codegen(c) => Error::Codegen(c),
            Abort::Fault(f) => Error::Fault(f),
            Abort::Truncated => Error::Truncated,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
