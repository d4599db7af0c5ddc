//! Python-subset front end: lexer, recursive-descent parser and AST.

pub mod ast;
pub mod lexer;
mod parser;

pub use ast::{walk, AstNode, NodeKind, Span, SyntaxTree};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn at(src: &str, offset: usize, message: impl Into<String>) -> Self {
        let (line, column) = line_col(src, offset);
        SyntaxError {
            offset,
            line,
            column,
            message: message.into(),
        }
    }
}

/// 1-based line and column (in chars) of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[line_start..].chars().count() + 1)
}

/// Parses `source` into a syntax tree with pre-order node ids.
pub fn parse(source: &str) -> Result<SyntaxTree, SyntaxError> {
    let toks = lexer::lex(source)?;
    let mut root = parser::Parser::new(source, &toks).module()?;
    ast::assign_preorder_ids(&mut root);
    Ok(SyntaxTree {
        root,
        source: source.to_string(),
    })
}
