//! The virtual machine the code generator drives: scoped memory, the
//! control-flow context stack, and the four instructions.
//!
//! The interpreter itself is symbolic. It decides which objects exist and how
//! they flow; every vector is computed by a [`Backend`] that sees each lambda
//! call as it is issued.

pub mod memory;
pub mod object;
pub mod trace;

use std::collections::HashSet;

use serde::Serialize;

use crate::builtins::BuiltinTable;
use crate::error::{Abort, InternalFault};
use crate::syntax::{NodeKind, Span};

pub use memory::{Scope, ScopeStack, Variable};
pub use object::{AbstractObject, FunctionKind, FunctionValue, GuessSource, LambdaRecord, ObjectId, ObjectKey, RecordId, Theta};
pub use trace::{format_pseudocode, format_trace, TraceEvent};

pub const DEFAULT_MAX_ARGS: usize = 16;

/// Receives every lambda call at the moment it is issued. `new_objects` holds
/// all objects created since the previous call, the result included, so a
/// backend can mirror the object table incrementally.
pub trait Backend {
    fn lambda(&mut self, record: &LambdaRecord, new_objects: &[AbstractObject]) -> Result<(), Abort>;
}

/// Accepts every call and computes nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct SymbolicBackend;

impl Backend for SymbolicBackend {
    fn lambda(&mut self, _: &LambdaRecord, _: &[AbstractObject]) -> Result<(), Abort> {
        Ok(())
    }
}

/// An assignment whose target is a plain name: the raw material of the
/// return-variable objective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentSite {
    pub name: String,
    pub lhs_node: u32,
    pub lhs_span: Span,
    pub rhs: ObjectId,
}

/// What the interpreter saw when the misused identifier first reached a call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MisuseObservation {
    pub object: ObjectId,
    pub source_call: Option<RecordId>,
    pub arg_index: usize,
    /// Visible bindings at the paused call, ascending object id.
    pub snapshot: Vec<(String, ObjectId)>,
}

/// Names that never take part in repair candidates.
pub const RETURN_SLOT: &str = "__return_val__";

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub objects: Vec<AbstractObject>,
    pub records: Vec<LambdaRecord>,
    pub assignments: Vec<AssignmentSite>,
    /// Scope contents at the time each scope closed, module scope last.
    pub scopes: Vec<(String, Vec<(String, ObjectId)>)>,
    pub variables_created: usize,
    pub distinct_names: usize,
    pub misuse: Option<MisuseObservation>,
    /// Repair candidates captured at the pause call, if one was requested.
    pub paused: Option<Vec<(String, ObjectId)>>,
    /// Set when the batch budget ran out before the script finished.
    pub truncated: bool,
}

impl ExecutionTrace {
    pub fn object(&self, id: ObjectId) -> &AbstractObject {
        &self.objects[id as usize - 1]
    }

    pub fn record(&self, id: RecordId) -> &LambdaRecord {
        &self.records[id as usize]
    }

    pub fn lambda_calls(&self) -> usize {
        self.records.len()
    }

    pub fn text(&self) -> String {
        format_trace(&self.events)
    }

    /// JSON view of the closed scopes: `{label: {name: {object_id, contaminated, has_executed}}}`.
    pub fn memory_dump(&self, vector_of: Option<&dyn Fn(ObjectId) -> Vec<f64>>) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for (label, bindings) in &self.scopes {
            let mut table = serde_json::Map::new();
            for (name, id) in bindings {
                let o = self.object(*id);
                let mut entry = serde_json::json!({
                    "object_id": id,
                    "contaminated": o.contaminated,
                    "has_executed": o.executed.is_some(),
                });
                if let Some(f) = vector_of {
                    entry["vector"] = serde_json::json!(f(*id));
                }
                table.insert(name.clone(), entry);
            }
            root.insert(label.clone(), serde_json::Value::Object(table));
        }
        serde_json::Value::Object(root)
    }
}

pub struct Interpreter<'a> {
    builtins: &'a BuiltinTable,
    backend: &'a mut dyn Backend,
    max_args: usize,
    memory: ScopeStack,
    contexts: Vec<(u32, ObjectId)>,
    trace: ExecutionTrace,
    sent: usize,
    names: HashSet<(String, String)>,
    misuse_object: Option<ObjectId>,
    pause_at: Option<RecordId>,
}

impl<'a> Interpreter<'a> {
    pub fn new(builtins: &'a BuiltinTable, backend: &'a mut dyn Backend) -> Self {
        Interpreter {
            builtins,
            backend,
            max_args: DEFAULT_MAX_ARGS,
            memory: ScopeStack::new(),
            contexts: Vec::new(),
            trace: ExecutionTrace::default(),
            sent: 0,
            names: HashSet::new(),
            misuse_object: None,
            pause_at: None,
        }
    }

    pub fn with_max_args(mut self, max_args: usize) -> Self {
        self.max_args = max_args;
        self
    }

    pub fn pause_at(mut self, record: Option<RecordId>) -> Self {
        self.pause_at = record;
        self
    }

    pub fn builtins(&self) -> &BuiltinTable {
        self.builtins
    }

    pub fn memory(&self) -> &ScopeStack {
        &self.memory
    }

    pub fn context_depth(&self) -> usize {
        self.contexts.len()
    }

    pub fn object(&self, id: ObjectId) -> Result<&AbstractObject, InternalFault> {
        self.trace.objects.get((id as usize).wrapping_sub(1)).ok_or(InternalFault::UnknownObject(id))
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    fn new_object(&mut self, guess: GuessSource, origin_node: u32, key: ObjectKey) -> ObjectId {
        let id = self.trace.objects.len() as ObjectId + 1;
        self.trace.objects.push(AbstractObject {
            id,
            guess,
            executed: None,
            origin_node,
            key,
            contaminated: false,
            compiled: false,
        });
        id
    }

    /// GUESS: a fresh object whose vector is pooled from the tokens of `span`.
    pub fn guess(&mut self, node_id: u32, span: Span, kind: NodeKind, text: &str, role: &str) -> ObjectId {
        let id = self.new_object(GuessSource::Pool { node_id, span, kind }, node_id, ObjectKey::new(span, role));
        self.trace.events.push(TraceEvent::Guess { obj: id, kind: kind.name().to_string(), text: text.to_string() });
        id
    }

    /// GUESS from a builtin embedding row rather than from source tokens.
    pub fn guess_builtin(&mut self, name: &str, node_id: u32, span: Span, role: &str) -> Result<ObjectId, Abort> {
        let idx = self.builtins.index(name)?;
        let id = self.new_object(GuessSource::Builtin(idx), node_id, ObjectKey::new(span, role));
        self.trace.events.push(TraceEvent::Guess { obj: id, kind: "Builtin".into(), text: name.to_string() });
        Ok(id)
    }

    /// GUESS of the i-th unpack index vector.
    pub fn guess_index(&mut self, i: usize, node_id: u32, span: Span) -> ObjectId {
        let id = self.new_object(GuessSource::UnpackIndex(i), node_id, ObjectKey::new(span, format!("index:{i}")));
        self.trace.events.push(TraceEvent::Guess { obj: id, kind: "Index".into(), text: i.to_string() });
        id
    }

    /// LOOKUP: the current binding of `name`, if any. Unbound names emit
    /// nothing; the caller decides whether to guess.
    pub fn lookup(&mut self, name: &str) -> Option<ObjectId> {
        let obj = self.memory.lookup(name)?;
        self.trace.events.push(TraceEvent::Lookup { name: name.to_string(), obj });
        Some(obj)
    }

    /// Current binding without emitting an instruction.
    pub fn peek(&self, name: &str) -> Option<ObjectId> {
        self.memory.lookup(name)
    }

    /// STORE into the top scope.
    pub fn store(&mut self, name: &str, obj: ObjectId) {
        self.names.insert((self.memory.top_label().to_string(), name.to_string()));
        self.memory.store(name, obj);
        self.trace.events.push(TraceEvent::Store { name: name.to_string(), obj });
    }

    pub fn mark_compiled(&mut self, obj: ObjectId) -> Result<(), InternalFault> {
        self.object(obj)?;
        self.trace.objects[obj as usize - 1].compiled = true;
        Ok(())
    }

    pub fn record_assignment(&mut self, name: &str, lhs_node: u32, lhs_span: Span, rhs: ObjectId) {
        self.trace.assignments.push(AssignmentSite { name: name.to_string(), lhs_node, lhs_span, rhs });
    }

    pub fn builtin(&self, name: &str) -> Result<FunctionValue, InternalFault> {
        let idx = self.builtins.index(name)?;
        Ok(FunctionValue { kind: FunctionKind::Builtin, theta: Theta::Builtin(idx), name: name.to_string() })
    }

    /// LAMBDA: applies `callee` to `args` under the current contexts. The
    /// result's guessed vector pools the tokens of `span`.
    pub fn lambda(
        &mut self,
        callee: FunctionValue,
        mut args: Vec<ObjectId>,
        node_id: u32,
        span: Span,
        kind: NodeKind,
        role: &str,
    ) -> Result<ObjectId, Abort> {
        args.truncate(self.max_args);
        for &a in &args {
            self.object(a)?;
        }
        if let Theta::Object(t) = callee.theta {
            self.object(t)?;
        }
        let contaminated = args.iter().any(|&a| self.trace.objects[a as usize - 1].contaminated);
        let record_id = self.trace.records.len() as RecordId;
        let result = self.new_object(GuessSource::Pool { node_id, span, kind }, node_id, ObjectKey::new(span, role));
        {
            let o = &mut self.trace.objects[result as usize - 1];
            o.executed = Some(record_id);
            o.contaminated = contaminated;
        }
        let record = LambdaRecord {
            id: record_id,
            node_id,
            callee,
            contexts: self.contexts.iter().map(|c| c.1).collect(),
            args,
            result,
        };
        if let Err(e) = self.backend.lambda(&record, &self.trace.objects[self.sent..]) {
            self.trace.objects.pop();
            return Err(e);
        }
        self.sent = self.trace.objects.len();
        if self.pause_at == Some(record_id) {
            self.trace.paused = Some(self.candidate_bindings());
        }

        if let (Some(m), None) = (self.misuse_object, self.trace.misuse.as_ref().and_then(|o| o.source_call)) {
            if let Some(pos) = record.args.iter().position(|&a| a == m) {
                let snapshot = self.candidate_bindings();
                let obs = self.trace.misuse.as_mut().expect("set with misuse_object");
                obs.source_call = Some(record_id);
                obs.arg_index = pos;
                obs.snapshot = snapshot;
            }
        }
        self.trace.events.push(TraceEvent::Lambda {
            kind: record.callee.kind,
            callee: record.callee.name.clone(),
            contexts: record.contexts.len(),
            args: record.args.clone(),
            result,
        });
        self.trace.records.push(record);
        Ok(result)
    }

    /// Variables a repair could pick: every visible binding except function
    /// signatures and the return slot.
    pub fn candidate_bindings(&self) -> Vec<(String, ObjectId)> {
        self.memory
            .visible_bindings()
            .into_iter()
            .filter(|(name, id)| name != RETURN_SLOT && !self.trace.objects[*id as usize - 1].compiled)
            .collect()
    }

    /// Stands in for a misused identifier occurrence: a contaminated alias of
    /// `of` that shares its vectors. Only one per script.
    pub fn misuse_alias(&mut self, of: ObjectId, node_id: u32, span: Span) -> Result<ObjectId, InternalFault> {
        let src = self.object(of)?.clone();
        let id = self.new_object(src.guess, node_id, ObjectKey::new(span, "misuse"));
        let o = &mut self.trace.objects[id as usize - 1];
        o.executed = src.executed;
        o.contaminated = true;
        self.misuse_object = Some(id);
        self.trace.misuse = Some(MisuseObservation { object: id, source_call: None, arg_index: 0, snapshot: Vec::new() });
        Ok(id)
    }

    pub fn push_context(&mut self, node_id: u32, obj: ObjectId) {
        self.contexts.push((node_id, obj));
        self.trace.events.push(TraceEvent::PushCtx { node_id, obj });
    }

    pub fn pop_context(&mut self) -> Result<(), InternalFault> {
        self.contexts.pop().ok_or(InternalFault::EmptyStack("context"))?;
        self.trace.events.push(TraceEvent::PopCtx);
        Ok(())
    }

    pub fn push_scope(&mut self, label: &str) {
        self.memory.push(label);
        self.trace.events.push(TraceEvent::PushScope { label: label.to_string() });
    }

    pub fn pop_scope(&mut self) -> Result<(), InternalFault> {
        let scope = self.memory.pop()?;
        let mut bindings: Vec<(String, ObjectId)> = scope.table.values().map(|v| (v.name.clone(), v.current())).collect();
        bindings.sort();
        self.trace.scopes.push((scope.label.clone(), bindings));
        self.trace.events.push(TraceEvent::PopScope { label: scope.label });
        Ok(())
    }

    pub fn ret(&mut self, obj: ObjectId) {
        self.trace.events.push(TraceEvent::Return { obj });
    }

    /// Closes the run and hands back the trace.
    pub fn finish(mut self, truncated: bool) -> ExecutionTrace {
        while self.memory.depth() > 1 {
            let _ = self.pop_scope();
        }
        let module = self.memory.module_bindings();
        self.trace.scopes.push(module);
        self.trace.variables_created = self.memory.variables_created();
        self.trace.distinct_names = self.names.len();
        self.trace.truncated = truncated;
        self.trace
    }
}
