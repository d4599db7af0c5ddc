use std::collections::HashMap;

use super::object::ObjectId;
use crate::error::InternalFault;

/// A name with every object it was ever bound to, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub history: Vec<ObjectId>,
}

impl Variable {
    pub fn current(&self) -> ObjectId {
        *self.history.last().expect("variables are created with one binding")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub label: String,
    pub table: HashMap<String, Variable>,
}

/// Stack of name tables; the bottom entry is the module scope.
#[derive(Debug, Clone)]
pub struct ScopeStack {
    scopes: Vec<Scope>,
    variables_created: usize,
}

impl Default for ScopeStack {
    fn default() -> Self {
        Self::new()
    }
}

impl ScopeStack {
    pub fn new() -> Self {
        ScopeStack { scopes: vec![Scope { label: "module".into(), table: HashMap::new() }], variables_created: 0 }
    }

    pub fn depth(&self) -> usize {
        self.scopes.len()
    }

    pub fn push(&mut self, label: impl Into<String>) {
        self.scopes.push(Scope { label: label.into(), table: HashMap::new() });
    }

    pub fn pop(&mut self) -> Result<Scope, InternalFault> {
        if self.scopes.len() <= 1 {
            return Err(InternalFault::EmptyStack("scope"));
        }
        Ok(self.scopes.pop().unwrap())
    }

    pub fn top_label(&self) -> &str {
        &self.scopes.last().unwrap().label
    }

    /// Current binding of `name`, searching from the innermost scope out.
    pub fn lookup(&self, name: &str) -> Option<ObjectId> {
        self.scopes.iter().rev().find_map(|s| s.table.get(name).map(Variable::current))
    }

    /// Binding of `name` in the innermost scope only.
    pub fn lookup_local(&self, name: &str) -> Option<ObjectId> {
        self.scopes.last().unwrap().table.get(name).map(Variable::current)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.scopes.iter().rev().find_map(|s| s.table.get(name))
    }

    pub fn store(&mut self, name: &str, obj: ObjectId) {
        let top = self.scopes.last_mut().unwrap();
        match top.table.get_mut(name) {
            Some(v) => v.history.push(obj),
            None => {
                top.table.insert(name.to_string(), Variable { name: name.to_string(), history: vec![obj] });
                self.variables_created += 1;
            }
        }
    }

    /// Label and sorted bindings of the module scope.
    pub fn module_bindings(&self) -> (String, Vec<(String, ObjectId)>) {
        let s = &self.scopes[0];
        let mut b: Vec<(String, ObjectId)> = s.table.values().map(|v| (v.name.clone(), v.current())).collect();
        b.sort();
        (s.label.clone(), b)
    }

    /// Number of variables ever created, across scopes already popped.
    pub fn variables_created(&self) -> usize {
        self.variables_created
    }

    /// Every visible name with its current binding; inner scopes shadow
    /// outer ones.
    pub fn visible_bindings(&self) -> Vec<(String, ObjectId)> {
        let mut seen: HashMap<&str, ObjectId> = HashMap::new();
        for s in self.scopes.iter().rev() {
            for (name, var) in &s.table {
                seen.entry(name.as_str()).or_insert_with(|| var.current());
            }
        }
        let mut out: Vec<(String, ObjectId)> = seen.into_iter().map(|(n, o)| (n.to_string(), o)).collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_lookup() {
        let mut m = ScopeStack::new();
        m.store("x", 1);
        assert_eq!(m.lookup("x"), Some(1));
        m.store("x", 2);
        assert_eq!(m.lookup("x"), Some(2));
        assert_eq!(m.variable("x").unwrap().history, vec![1, 2]);
        assert_eq!(m.variables_created(), 1);
    }

    #[test]
    fn shadowing_and_scope_exit() {
        let mut m = ScopeStack::new();
        m.store("x", 1);
        m.push("func: f");
        assert_eq!(m.depth(), 2);
        assert_eq!(m.lookup("x"), Some(1));
        m.store("x", 2);
        m.store("y", 3);
        assert_eq!(m.lookup("x"), Some(2));
        m.pop().unwrap();
        assert_eq!(m.lookup("x"), Some(1));
        assert_eq!(m.lookup("y"), None);
        assert_eq!(m.depth(), 1);
    }

    #[test]
    fn popping_module_scope_is_a_fault() {
        let mut m = ScopeStack::new();
        assert_eq!(m.pop().unwrap_err(), InternalFault::EmptyStack("scope"));
    }

    #[test]
    fn visible_bindings_are_ordered_by_object() {
        let mut m = ScopeStack::new();
        m.store("b", 5);
        m.store("a", 2);
        m.push("f");
        m.store("b", 7);
        assert_eq!(m.visible_bindings(), vec![("a".to_string(), 2), ("b".to_string(), 7)]);
    }
}
