use std::fmt;

use serde::{Deserialize, Serialize};

/// Every syntactic construct the parser can produce. The names are part of
/// the trace and golden-file surface, so they must not be renamed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Module,
    FunctionDefinition,
    Parameters,
    Parameter,
    DefaultParameter,
    Block,
    Assignment,
    AugmentedAssignment,
    ExpressionStatement,
    Return,
    Call,
    Argument,
    KeywordArgument,
    Identifier,
    Attribute,
    Subscript,
    Slice,
    BinaryOp,
    UnaryOp,
    BooleanOp,
    Comparison,
    If,
    Elif,
    Else,
    While,
    For,
    ListLiteral,
    TupleLiteral,
    SetLiteral,
    DictLiteral,
    Pair,
    ListComprehension,
    DictComprehension,
    ConditionalExpression,
    Try,
    Except,
    Finally,
    Import,
    ImportFrom,
    StringLit,
    NumberLit,
    BoolLit,
    NoneLit,
    Unsupported,
}

impl NodeKind {
    pub const ALL: [NodeKind; 44] = [
        NodeKind::Module,
        NodeKind::FunctionDefinition,
        NodeKind::Parameters,
        NodeKind::Parameter,
        NodeKind::DefaultParameter,
        NodeKind::Block,
        NodeKind::Assignment,
        NodeKind::AugmentedAssignment,
        NodeKind::ExpressionStatement,
        NodeKind::Return,
        NodeKind::Call,
        NodeKind::Argument,
        NodeKind::KeywordArgument,
        NodeKind::Identifier,
        NodeKind::Attribute,
        NodeKind::Subscript,
        NodeKind::Slice,
        NodeKind::BinaryOp,
        NodeKind::UnaryOp,
        NodeKind::BooleanOp,
        NodeKind::Comparison,
        NodeKind::If,
        NodeKind::Elif,
        NodeKind::Else,
        NodeKind::While,
        NodeKind::For,
        NodeKind::ListLiteral,
        NodeKind::TupleLiteral,
        NodeKind::SetLiteral,
        NodeKind::DictLiteral,
        NodeKind::Pair,
        NodeKind::ListComprehension,
        NodeKind::DictComprehension,
        NodeKind::ConditionalExpression,
        NodeKind::Try,
        NodeKind::Except,
        NodeKind::Finally,
        NodeKind::Import,
        NodeKind::ImportFrom,
        NodeKind::StringLit,
        NodeKind::NumberLit,
        NodeKind::BoolLit,
        NodeKind::NoneLit,
        NodeKind::Unsupported,
    ];

    /// Dense index, used to address the type-embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Module => "Module",
            NodeKind::FunctionDefinition => "FunctionDefinition",
            NodeKind::Parameters => "Parameters",
            NodeKind::Parameter => "Parameter",
            NodeKind::DefaultParameter => "DefaultParameter",
            NodeKind::Block => "Block",
            NodeKind::Assignment => "Assignment",
            NodeKind::AugmentedAssignment => "AugmentedAssignment",
            NodeKind::ExpressionStatement => "ExpressionStatement",
            NodeKind::Return => "Return",
            NodeKind::Call => "Call",
            NodeKind::Argument => "Argument",
            NodeKind::KeywordArgument => "KeywordArgument",
            NodeKind::Identifier => "Identifier",
            NodeKind::Attribute => "Attribute",
            NodeKind::Subscript => "Subscript",
            NodeKind::Slice => "Slice",
            NodeKind::BinaryOp => "BinaryOp",
            NodeKind::UnaryOp => "UnaryOp",
            NodeKind::BooleanOp => "BooleanOp",
            NodeKind::Comparison => "Comparison",
            NodeKind::If => "If",
            NodeKind::Elif => "Elif",
            NodeKind::Else => "Else",
            NodeKind::While => "While",
            NodeKind::For => "For",
            NodeKind::ListLiteral => "ListLiteral",
            NodeKind::TupleLiteral => "TupleLiteral",
            NodeKind::SetLiteral => "SetLiteral",
            NodeKind::DictLiteral => "DictLiteral",
            NodeKind::Pair => "Pair",
            NodeKind::ListComprehension => "ListComprehension",
            NodeKind::DictComprehension => "DictComprehension",
            NodeKind::ConditionalExpression => "ConditionalExpression",
            NodeKind::Try => "Try",
            NodeKind::Except => "Except",
            NodeKind::Finally => "Finally",
            NodeKind::Import => "Import",
            NodeKind::ImportFrom => "ImportFrom",
            NodeKind::StringLit => "StringLit",
            NodeKind::NumberLit => "NumberLit",
            NodeKind::BoolLit => "BoolLit",
            NodeKind::NoneLit => "NoneLit",
            NodeKind::Unsupported => "Unsupported",
        }
    }

    /// Statement-level kinds: the units the linearity counters track.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::FunctionDefinition
                | NodeKind::Assignment
                | NodeKind::AugmentedAssignment
                | NodeKind::ExpressionStatement
                | NodeKind::Return
                | NodeKind::If
                | NodeKind::While
                | NodeKind::For
                | NodeKind::Try
                | NodeKind::Import
                | NodeKind::ImportFrom
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub kind: NodeKind,
    pub span: Span,
    pub children: Vec<AstNode>,
    pub node_id: u32,
    /// Operator text for operator nodes (`+`, `not in`, `+=`), the literal
    /// flavour for tuples/comprehensions, and `pass`/`break`/`continue` for
    /// empty expression statements.
    pub op: Option<String>,
}

impl AstNode {
    pub(crate) fn new(kind: NodeKind, span: Span, children: Vec<AstNode>) -> Self {
        AstNode {
            kind,
            span,
            children,
            node_id: 0,
            op: None,
        }
    }

    pub(crate) fn with_op(mut self, op: impl Into<String>) -> Self {
        self.op = Some(op.into());
        self
    }

    pub fn op(&self) -> Option<&str> {
        self.op.as_deref()
    }

    pub fn text<'s>(&self, source: &'s str) -> &'s str {
        &source[self.span.start..self.span.end]
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(AstNode::size).sum::<usize>()
    }

    pub fn child(&self, i: usize) -> Option<&AstNode> {
        self.children.get(i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    pub root: AstNode,
    pub source: String,
}

impl SyntaxTree {
    pub fn text(&self, node: &AstNode) -> &str {
        node.text(&self.source)
    }

    pub fn node_count(&self) -> usize {
        self.root.size()
    }

    /// Nodes indexed by `node_id`. Ids are dense and pre-order, so this is a
    /// pre-order listing as well.
    pub fn nodes(&self) -> Vec<&AstNode> {
        let mut out = Vec::with_capacity(self.node_count());
        walk(self, |n| out.push(n));
        out
    }

    pub fn find(&self, node_id: u32) -> Option<&AstNode> {
        fn go(n: &AstNode, id: u32) -> Option<&AstNode> {
            if n.node_id == id {
                return Some(n);
            }
            // children are in pre-order id ranges; pick the last child whose id <= target
            let idx = n.children.partition_point(|c| c.node_id <= id);
            if idx == 0 {
                return None;
            }
            go(&n.children[idx - 1], id)
        }
        go(&self.root, node_id)
    }

    /// Innermost Identifier node starting exactly at `offset`.
    pub fn identifier_at(&self, offset: usize) -> Option<&AstNode> {
        let mut found = None;
        walk(self, |n| {
            if n.kind == NodeKind::Identifier && n.span.start == offset {
                found = Some(n);
            }
        });
        found
    }
}

/// Pre-order traversal, invoking `visitor` once per node.
pub fn walk<'t, F>(tree: &'t SyntaxTree, mut visitor: F)
where
    F: FnMut(&'t AstNode),
{
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        visitor(node);
        stack.extend(node.children.iter().rev());
    }
}

pub(crate) fn assign_preorder_ids(root: &mut AstNode) {
    fn go(n: &mut AstNode, next: &mut u32) {
        n.node_id = *next;
        *next += 1;
        for c in &mut n.children {
            go(c, next);
        }
    }
    let mut next = 0;
    go(root, &mut next);
}
