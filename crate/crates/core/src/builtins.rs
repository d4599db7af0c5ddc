//! The fixed table of built-in functions and constants whose signatures are
//! looked up from an embedding matrix rather than guessed from source.

use std::collections::HashMap;

use crate::error::InternalFault;

pub const BUILTIN_NAMES: [&str; 69] = [
    "and",
    "fun_obj_val_default",
    "val_obj_val_default",
    "const_obj_tensor_default",
    "__try__",
    "__except__",
    "__tuple_of__",
    "__compile_function__",
    "__dictionary_key_value__",
    "==",
    "<",
    "-",
    "__if__",
    "__dictionary_of__",
    "__else__",
    "__list_of__",
    "%",
    "not",
    "__keyword_argument__",
    "__get_attr__",
    "__subscript__",
    "__list_splat__",
    "__dictionary_splat__",
    "+",
    "in",
    "__for_in__",
    "__default_parameter__",
    "+=",
    "__end_for_iterator__",
    "__unpack_k__",
    "__slice__",
    "is",
    "__generator__",
    "*",
    "/",
    "<=",
    ">",
    "__conditional_expression__",
    "or",
    "!=",
    "__subscript_assign__",
    ">=",
    "__expression_list_of__",
    "|=",
    "**",
    "__set_of__",
    "__while__",
    "__list_comprehension__",
    "__if_clause__",
    ">>",
    "&",
    "<<",
    "|",
    "__dictionary_comprehension__",
    "-=",
    "//",
    "__finally__",
    "*=",
    "&=",
    "/=",
    "^",
    ">>=",
    "~",
    "__parenthesis__",
    "<>",
    "<<=",
    "%=",
    "^=",
    "//=",
];

/// Embedding row used when no tokens can be pooled for a value.
pub const VALUE_DEFAULT: &str = "val_obj_val_default";
/// Embedding row used when no tokens can be pooled for a function signature.
pub const FUNCTION_DEFAULT: &str = "fun_obj_val_default";
/// Embedding row standing in for an absent return value.
pub const NONE_EMBEDDING: &str = "const_obj_tensor_default";

/// Name to embedding-row map. Rows are assigned in table order at
/// construction and never change afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltinTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for BuiltinTable {
    fn default() -> Self {
        Self::new()
    }
}

impl BuiltinTable {
    pub fn new() -> Self {
        Self::from_names(BUILTIN_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        BuiltinTable { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn index(&self, name: &str) -> Result<usize, InternalFault> {
        self.get(name).ok_or_else(|| InternalFault::UnknownBuiltin(name.to_string()))
    }
}
