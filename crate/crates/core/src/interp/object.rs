use serde::Serialize;

use crate::syntax::{NodeKind, Span};

pub type ObjectId = u32;
pub type RecordId = u32;

/// Where an object's guessed vector comes from. Resolution into a vector is
/// deferred until an executor needs it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum GuessSource {
    /// Max-pool over the tokens inside `span`, plus the type embedding of `kind`.
    Pool { node_id: u32, span: Span, kind: NodeKind },
    /// A row of the builtin embedding table.
    Builtin(usize),
    /// The i-th row of the unpack index table.
    UnpackIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FunctionKind {
    Guessed,
    Compiled,
    Builtin,
}

impl FunctionKind {
    pub fn label(self) -> &'static str {
        match self {
            FunctionKind::Guessed => "guessed",
            FunctionKind::Compiled => "compiled",
            FunctionKind::Builtin => "builtin",
        }
    }
}

/// Stable identity of an object independent of creation order: the source
/// span that produced it plus a role tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ObjectKey {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

impl ObjectKey {
    pub fn new(span: Span, role: impl Into<String>) -> Self {
        ObjectKey { start: span.start, end: span.end, role: role.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbstractObject {
    pub id: ObjectId,
    pub guess: GuessSource,
    /// The lambda call that produced this object, when it was executed.
    pub executed: Option<RecordId>,
    pub origin_node: u32,
    pub key: ObjectKey,
    pub contaminated: bool,
    /// Set on signatures produced by neural compilation.
    pub compiled: bool,
}

/// The signature a lambda call curries on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Theta {
    Builtin(usize),
    Object(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionValue {
    pub kind: FunctionKind,
    pub theta: Theta,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LambdaRecord {
    pub id: RecordId,
    pub node_id: u32,
    pub callee: FunctionValue,
    /// Context objects, outermost first.
    pub contexts: Vec<ObjectId>,
    pub args: Vec<ObjectId>,
    pub result: ObjectId,
}
