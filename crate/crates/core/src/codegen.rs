//! Lowers a syntax tree to interpreter instructions. Every statement and every
//! branch body is visited exactly once; loops are never unrolled.

use std::collections::BTreeMap;

use crate::builtins::{BuiltinTable, NONE_EMBEDDING};
use crate::error::{Abort, CodegenError, CodegenErrorKind, InternalFault};
use crate::interp::{Backend, ExecutionTrace, FunctionKind, FunctionValue, Interpreter, ObjectId, Theta, RETURN_SLOT};
use crate::syntax::{AstNode, NodeKind, SyntaxTree};

#[derive(Debug, Clone)]
pub struct CodegenOptions {
    pub max_args: usize,
    /// Identifier occurrence to treat as the injected misuse.
    pub misuse_node: Option<u32>,
    /// Call at which to capture the repair candidates.
    pub pause_at: Option<u32>,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        CodegenOptions { max_args: crate::interp::DEFAULT_MAX_ARGS, misuse_node: None, pause_at: None }
    }
}

/// Result of lowering one script. `abort` is set when lowering stopped early;
/// the trace then holds everything executed up to that point.
#[derive(Debug, Clone)]
pub struct Generated {
    pub trace: ExecutionTrace,
    /// Visit count per statement and per block, keyed by node id.
    pub dispatch: BTreeMap<u32, u32>,
    pub abort: Option<Abort>,
}

impl Generated {
    pub fn statement_count(&self, tree: &SyntaxTree) -> usize {
        tree.nodes().iter().filter(|n| n.kind.is_statement()).count()
    }
}

/// Runs the code generator over `tree` against `backend`.
pub fn generate(tree: &SyntaxTree, builtins: &BuiltinTable, backend: &mut dyn Backend, opts: &CodegenOptions) -> Generated {
    let mut interp = Interpreter::new(builtins, backend).with_max_args(opts.max_args).pause_at(opts.pause_at);
    let mut cg = Codegen { tree, it: &mut interp, dispatch: BTreeMap::new(), compiling: Vec::new(), misuse_node: opts.misuse_node };
    let result = cg.module();
    let dispatch = std::mem::take(&mut cg.dispatch);
    let truncated = matches!(result, Err(Abort::Truncated));
    Generated { trace: interp.finish(truncated), dispatch, abort: result.err() }
}

/// Lowering without any vectors, for tracing and corpus statistics.
pub fn generate_symbolic(tree: &SyntaxTree, opts: &CodegenOptions) -> Generated {
    let table = BuiltinTable::new();
    let mut backend = crate::interp::SymbolicBackend;
    generate(tree, &table, &mut backend, opts)
}

type R<T = ObjectId> = Result<T, Abort>;

struct Codegen<'t, 'i, 'a> {
    tree: &'t SyntaxTree,
    it: &'i mut Interpreter<'a>,
    dispatch: BTreeMap<u32, u32>,
    compiling: Vec<String>,
    misuse_node: Option<u32>,
}

fn fail(node: &AstNode, kind: CodegenErrorKind, message: impl Into<String>) -> Abort {
    Abort::Codegen(CodegenError {
        node_id: node.node_id,
        node_kind: node.kind,
        offset: node.span.start,
        kind,
        message: message.into(),
    })
}

fn unsupported(tree: &SyntaxTree, node: &AstNode) -> Abort {
    let text = tree.text(node);
    let head: String = text.lines().next().unwrap_or("").chars().take(40).collect();
    fail(node, CodegenErrorKind::UnsupportedConstruct, format!("`{head}` is not supported"))
}

fn malformed(node: &AstNode, what: &str) -> Abort {
    fail(node, CodegenErrorKind::MalformedNode, what)
}

fn child(node: &AstNode, i: usize) -> R<&AstNode> {
    node.child(i).ok_or_else(|| malformed(node, "missing child"))
}

impl<'t> Codegen<'t, '_, '_> {
    fn text(&self, node: &AstNode) -> &'t str {
        node.text(&self.tree.source)
    }

    fn count(&mut self, node: &AstNode) {
        *self.dispatch.entry(node.node_id).or_insert(0) += 1;
    }

    fn module(&mut self) -> R<()> {
        let tree = self.tree;
        for stmt in &tree.root.children {
            self.statement(stmt)?;
        }
        Ok(())
    }

    fn block(&mut self, block: &AstNode) -> R<()> {
        if block.kind != NodeKind::Block {
            return Err(malformed(block, "expected a block"));
        }
        self.count(block);
        for stmt in &block.children {
            self.statement(stmt)?;
        }
        Ok(())
    }

    fn builtin_call(&mut self, name: &str, args: Vec<ObjectId>, node: &AstNode) -> R {
        self.builtin_call_at(name, args, node, node.kind)
    }

    fn builtin_call_at(&mut self, name: &str, args: Vec<ObjectId>, node: &AstNode, kind: NodeKind) -> R {
        let f = self.it.builtin(name)?;
        self.it.lambda(f, args, node.node_id, node.span, kind, name)
    }

    fn with_context(&mut self, ctx_node: &AstNode, ctx: ObjectId, body: &AstNode) -> R<()> {
        self.it.push_context(ctx_node.node_id, ctx);
        self.block(body)?;
        self.it.pop_context()?;
        Ok(())
    }

    fn statement(&mut self, node: &AstNode) -> R<()> {
        if node.kind.is_statement() {
            self.count(node);
        }
        match node.kind {
            NodeKind::FunctionDefinition => self.function_definition(node),
            NodeKind::Assignment => {
                let (value, targets) = node.children.split_last().ok_or_else(|| malformed(node, "empty assignment"))?;
                if targets.is_empty() {
                    return Err(malformed(node, "assignment without target"));
                }
                let obj = self.expr(value)?;
                for t in targets {
                    self.assign(t, obj)?;
                }
                Ok(())
            }
            NodeKind::AugmentedAssignment => {
                let target = child(node, 0)?;
                let value = child(node, 1)?;
                let op = node.op().ok_or_else(|| malformed(node, "missing operator"))?;
                let table = self.it.builtins();
                let name = if table.get(op).is_some() {
                    op
                } else {
                    let base = &op[..op.len() - 1];
                    if table.get(base).is_none() {
                        return Err(unsupported(self.tree, node));
                    }
                    base
                };
                let cur = self.expr(target)?;
                let val = self.expr(value)?;
                let r = self.builtin_call(name, vec![cur, val], node)?;
                self.assign(target, r)
            }
            NodeKind::ExpressionStatement => {
                if let Some(e) = node.child(0) {
                    self.expr(e)?;
                }
                Ok(())
            }
            NodeKind::Return => {
                let obj = match node.child(0) {
                    Some(e) => self.expr(e)?,
                    None => self.it.guess_builtin(NONE_EMBEDDING, node.node_id, node.span, "none")?,
                };
                self.it.store(RETURN_SLOT, obj);
                self.it.ret(obj);
                Ok(())
            }
            NodeKind::If | NodeKind::Elif => self.if_statement(node),
            NodeKind::While => {
                let cond = self.expr(child(node, 0)?)?;
                let ctx = self.builtin_call("__while__", vec![cond], node)?;
                self.with_context(node, ctx, child(node, 1)?)?;
                if let Some(e) = node.child(2) {
                    self.else_clause(e, vec![cond])?;
                }
                Ok(())
            }
            NodeKind::For => self.for_statement(node),
            NodeKind::Try => self.try_statement(node),
            NodeKind::Import | NodeKind::ImportFrom => Ok(()),
            NodeKind::Unsupported => Err(unsupported(self.tree, node)),
            _ => Err(malformed(node, "not a statement")),
        }
    }

    fn else_clause(&mut self, node: &AstNode, cond: Vec<ObjectId>) -> R<()> {
        if node.kind != NodeKind::Else {
            return Err(malformed(node, "expected else"));
        }
        let ctx = self.builtin_call("__else__", cond, node)?;
        self.with_context(node, ctx, child(node, 0)?)
    }

    fn if_statement(&mut self, node: &AstNode) -> R<()> {
        let cond = self.expr(child(node, 0)?)?;
        let ctx = self.builtin_call("__if__", vec![cond], node)?;
        self.with_context(node, ctx, child(node, 1)?)?;
        match node.child(2) {
            Some(e) if e.kind == NodeKind::Elif => {
                let ctx = self.builtin_call_at("__else__", vec![cond], e, NodeKind::Else)?;
                self.it.push_context(e.node_id, ctx);
                self.if_statement(e)?;
                self.it.pop_context()?;
                Ok(())
            }
            Some(e) => self.else_clause(e, vec![cond]),
            None => Ok(()),
        }
    }

    fn for_statement(&mut self, node: &AstNode) -> R<()> {
        let target = child(node, 0)?;
        let iter = self.expr(child(node, 1)?)?;
        let ctx = self.builtin_call("__for_in__", vec![iter], node)?;
        self.it.push_context(node.node_id, ctx);
        let mut names = Vec::new();
        self.bind_loop_target(target, iter, &mut names)?;
        self.block(child(node, 2)?)?;
        self.it.pop_context()?;
        for (name, ident) in names {
            let cur = self.it.lookup(&name).ok_or(Abort::Fault(InternalFault::UnknownObject(0)))?;
            let end = self.builtin_call_at("__end_for_iterator__", vec![cur], ident, NodeKind::For)?;
            self.it.store(&name, end);
        }
        if let Some(e) = node.child(3) {
            self.else_clause(e, vec![iter])?;
        }
        Ok(())
    }

    /// Binds every name in a loop target to the iterable's object.
    fn bind_loop_target<'n>(&mut self, target: &'n AstNode, obj: ObjectId, names: &mut Vec<(String, &'n AstNode)>) -> R<()> {
        match target.kind {
            NodeKind::Identifier => {
                let name = self.text(target).to_string();
                self.it.store(&name, obj);
                if !names.iter().any(|(n, _)| *n == name) {
                    names.push((name, target));
                }
                Ok(())
            }
            NodeKind::TupleLiteral | NodeKind::ListLiteral => {
                for c in &target.children {
                    self.bind_loop_target(c, obj, names)?;
                }
                Ok(())
            }
            NodeKind::Unsupported => Err(unsupported(self.tree, target)),
            _ => Err(fail(target, CodegenErrorKind::UnsupportedConstruct, "loop target must be a name or tuple of names")),
        }
    }

    fn try_statement(&mut self, node: &AstNode) -> R<()> {
        let body = child(node, 0)?;
        let ctx = self.builtin_call("__try__", vec![], node)?;
        self.with_context(node, ctx, body)?;
        for clause in &node.children[1..] {
            match clause.kind {
                NodeKind::Except => {
                    let named = clause.op() == Some("as");
                    let (block, head) = clause.children.split_last().ok_or_else(|| malformed(clause, "empty except"))?;
                    let args = match head.first() {
                        Some(t) => vec![self.expr(t)?],
                        None => vec![],
                    };
                    let ctx = self.builtin_call("__except__", args, clause)?;
                    self.it.push_context(clause.node_id, ctx);
                    if named {
                        let name = head.get(1).ok_or_else(|| malformed(clause, "missing exception name"))?;
                        self.it.store(self.text(name), ctx);
                    }
                    self.block(block)?;
                    self.it.pop_context()?;
                }
                NodeKind::Else => self.else_clause(clause, vec![])?,
                NodeKind::Finally => {
                    let ctx = self.builtin_call("__finally__", vec![], clause)?;
                    self.with_context(clause, ctx, child(clause, 0)?)?;
                }
                _ => return Err(malformed(clause, "unexpected try clause")),
            }
        }
        Ok(())
    }

    fn function_definition(&mut self, node: &AstNode) -> R<()> {
        let name_node = child(node, 0)?;
        let params = child(node, 1)?;
        let body = child(node, 2)?;
        if name_node.kind != NodeKind::Identifier || params.kind != NodeKind::Parameters {
            return Err(malformed(node, "malformed definition"));
        }
        let name = self.text(name_node).to_string();

        let mut defaults = Vec::new();
        for p in &params.children {
            if p.kind == NodeKind::DefaultParameter {
                let ident = child(p, 0)?;
                let key = self.it.guess(ident.node_id, ident.span, NodeKind::Identifier, self.text(ident), "param-name");
                let d = self.expr(child(p, 1)?)?;
                defaults.push(Some(self.builtin_call("__default_parameter__", vec![key, d], p)?));
            } else {
                defaults.push(None);
            }
        }

        self.compiling.push(name.clone());
        self.it.push_scope(&format!("func: {name}"));
        let mut names = Vec::new();
        let mut before = Vec::new();
        for (p, d) in params.children.iter().zip(defaults) {
            let (pname, obj) = match (p.kind, d) {
                (NodeKind::Parameter, _) => {
                    let pname = self.text(p);
                    (pname, self.it.guess(p.node_id, p.span, NodeKind::Parameter, pname, "param"))
                }
                (NodeKind::DefaultParameter, Some(obj)) => (self.text(child(p, 0)?), obj),
                _ => return Err(malformed(p, "unexpected parameter")),
            };
            self.it.store(pname, obj);
            names.push(pname);
            before.push(obj);
        }
        self.block(body)?;
        let ret = match self.it.memory().lookup_local(RETURN_SLOT) {
            Some(_) => self.it.lookup(RETURN_SLOT).expect("bound locally"),
            None => self.it.guess_builtin(NONE_EMBEDDING, node.node_id, node.span, "none")?,
        };
        let mut after = Vec::new();
        for n in &names {
            after.push(self.it.lookup(n).ok_or(Abort::Fault(InternalFault::UnknownObject(0)))?);
        }
        self.it.pop_scope()?;
        self.compiling.pop();

        let g_f = self.it.guess(body.node_id, body.span, NodeKind::FunctionDefinition, self.text(body), "function");
        let mut sig = vec![g_f];
        sig.extend(before);
        sig.push(ret);
        sig.extend(after);
        let theta = self.builtin_call("__compile_function__", sig, node)?;
        self.it.mark_compiled(theta)?;
        self.it.store(&name, theta);
        Ok(())
    }

    /// Binds `obj` to an assignment target.
    fn assign(&mut self, target: &AstNode, obj: ObjectId) -> R<()> {
        match target.kind {
            NodeKind::Identifier => {
                let name = self.text(target);
                self.it.store(name, obj);
                self.it.record_assignment(name, target.node_id, target.span, obj);
                Ok(())
            }
            NodeKind::Attribute => {
                let base = self.expr(child(target, 0)?)?;
                let attr = child(target, 1)?;
                let a = self.it.guess(attr.node_id, attr.span, NodeKind::Identifier, self.text(attr), "attr");
                let f = self.it.builtin("__get_attr__")?;
                let r = self.it.lambda(f, vec![base, a, obj], target.node_id, target.span, NodeKind::Attribute, "assign:__get_attr__")?;
                self.store_root(target, r);
                Ok(())
            }
            NodeKind::Subscript => {
                let base = self.expr(child(target, 0)?)?;
                let idx = self.expr(child(target, 1)?)?;
                let f = self.it.builtin("__subscript_assign__")?;
                let r = self.it.lambda(f, vec![base, idx, obj], target.node_id, target.span, NodeKind::Subscript, "__subscript_assign__")?;
                self.store_root(target, r);
                Ok(())
            }
            NodeKind::TupleLiteral | NodeKind::ListLiteral => {
                for (i, elt) in target.children.iter().enumerate() {
                    let idx = self.it.guess_index(i, elt.node_id, elt.span);
                    let f = self.it.builtin("__unpack_k__")?;
                    let r = self.it.lambda(f, vec![obj, idx], elt.node_id, elt.span, elt.kind, "__unpack_k__")?;
                    self.assign(elt, r)?;
                }
                Ok(())
            }
            NodeKind::Unsupported => Err(unsupported(self.tree, target)),
            _ => Err(malformed(target, "assignment target must be a name, attribute, subscript or tuple")),
        }
    }

    /// Stores `obj` under the name at the root of an attribute/subscript chain.
    fn store_root(&mut self, target: &AstNode, obj: ObjectId) {
        let mut n = target;
        while matches!(n.kind, NodeKind::Attribute | NodeKind::Subscript) {
            n = &n.children[0];
        }
        if n.kind == NodeKind::Identifier {
            self.it.store(self.text(n), obj);
        }
    }

    /// The object a name denotes in value position, guessing unbound names.
    fn name_value(&mut self, node: &AstNode) -> ObjectId {
        let name = self.text(node);
        match self.it.lookup(name) {
            Some(o) => o,
            None => {
                let o = self.it.guess(node.node_id, node.span, NodeKind::Identifier, name, "value");
                self.it.store(name, o);
                o
            }
        }
    }

    fn exprs(&mut self, nodes: &[AstNode]) -> R<Vec<ObjectId>> {
        nodes.iter().map(|n| self.expr(n)).collect()
    }

    fn expr(&mut self, node: &AstNode) -> R {
        match node.kind {
            NodeKind::Identifier => {
                let obj = self.name_value(node);
                if self.misuse_node == Some(node.node_id) {
                    return Ok(self.it.misuse_alias(obj, node.node_id, node.span)?);
                }
                Ok(obj)
            }
            NodeKind::NumberLit | NodeKind::StringLit | NodeKind::BoolLit | NodeKind::NoneLit => {
                Ok(self.it.guess(node.node_id, node.span, node.kind, self.text(node), "value"))
            }
            NodeKind::BinaryOp | NodeKind::BooleanOp => {
                let op = node.op().ok_or_else(|| malformed(node, "missing operator"))?;
                if self.it.builtins().get(op).is_none() {
                    return Err(unsupported(self.tree, node));
                }
                let args = self.exprs(&node.children)?;
                self.builtin_call(op, args, node)
            }
            NodeKind::UnaryOp => {
                let op = node.op().ok_or_else(|| malformed(node, "missing operator"))?;
                let x = self.expr(child(node, 0)?)?;
                self.builtin_call(op, vec![x], node)
            }
            NodeKind::Comparison => {
                let op = node.op().ok_or_else(|| malformed(node, "missing operator"))?;
                let args = self.exprs(&node.children)?;
                match op {
                    "not in" | "is not" => {
                        let base = if op == "not in" { "in" } else { "is" };
                        let r = self.builtin_call(base, args, node)?;
                        let f = self.it.builtin("not")?;
                        Ok(self.it.lambda(f, vec![r], node.node_id, node.span, node.kind, "not")?)
                    }
                    _ => self.builtin_call(op, args, node),
                }
            }
            NodeKind::Call => self.call(node),
            NodeKind::Attribute => {
                let base = self.expr(child(node, 0)?)?;
                let attr = child(node, 1)?;
                let a = self.it.guess(attr.node_id, attr.span, NodeKind::Identifier, self.text(attr), "attr");
                self.builtin_call("__get_attr__", vec![base, a], node)
            }
            NodeKind::Subscript => {
                let args = self.exprs(&node.children)?;
                self.builtin_call("__subscript__", args, node)
            }
            NodeKind::Slice => {
                let args = self.exprs(&node.children)?;
                self.builtin_call("__slice__", args, node)
            }
            NodeKind::ListLiteral => {
                let args = self.exprs(&node.children)?;
                self.builtin_call("__list_of__", args, node)
            }
            NodeKind::TupleLiteral => {
                let args = self.exprs(&node.children)?;
                let f = if node.op() == Some("bare") { "__expression_list_of__" } else { "__tuple_of__" };
                self.builtin_call(f, args, node)
            }
            NodeKind::SetLiteral => {
                let args = self.exprs(&node.children)?;
                self.builtin_call("__set_of__", args, node)
            }
            NodeKind::DictLiteral => {
                let mut items = Vec::new();
                for c in &node.children {
                    items.push(match c.kind {
                        NodeKind::Pair => {
                            let kv = self.exprs(&c.children)?;
                            self.builtin_call("__dictionary_key_value__", kv, c)?
                        }
                        NodeKind::Argument => {
                            let v = self.expr(child(c, 0)?)?;
                            self.builtin_call("__dictionary_splat__", vec![v], c)?
                        }
                        _ => return Err(malformed(c, "unexpected dictionary item")),
                    });
                }
                self.builtin_call("__dictionary_of__", items, node)
            }
            NodeKind::ConditionalExpression => {
                let (a, cond, b) = (child(node, 0)?, child(node, 1)?, child(node, 2)?);
                let c = self.expr(cond)?;
                let ctx = self.builtin_call_at("__conditional_expression__", vec![c], cond, NodeKind::ConditionalExpression)?;
                self.it.push_context(node.node_id, ctx);
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                self.it.pop_context()?;
                self.builtin_call("__conditional_expression__", vec![c, a, b], node)
            }
            NodeKind::ListComprehension | NodeKind::DictComprehension => self.comprehension(node),
            NodeKind::Unsupported => Err(unsupported(self.tree, node)),
            _ => Err(malformed(node, "not an expression")),
        }
    }

    fn comprehension(&mut self, node: &AstNode) -> R {
        let dict = node.kind == NodeKind::DictComprehension;
        let lead = if dict { 2 } else { 1 };
        let parts = &node.children;
        if parts.len() < lead + 2 {
            return Err(malformed(node, "incomplete comprehension"));
        }
        let (target, iter_node, cond) = (&parts[lead], &parts[lead + 1], parts.get(lead + 2));
        let iter = self.expr(iter_node)?;
        let (open, close) = match (dict, node.op()) {
            (true, _) => ("__dictionary_comprehension__", "__dictionary_of__"),
            (false, Some("generator")) => ("__generator__", "__list_of__"),
            (false, _) => ("__list_comprehension__", "__list_of__"),
        };
        self.it.push_scope("comprehension");
        let ctx = self.builtin_call_at(open, vec![iter], iter_node, node.kind)?;
        self.it.push_context(node.node_id, ctx);
        let mut names = Vec::new();
        self.bind_loop_target(target, iter, &mut names)?;
        let mut guarded = false;
        if let Some(c) = cond {
            let c_obj = self.expr(c)?;
            let cctx = self.builtin_call_at("__if_clause__", vec![c_obj], c, node.kind)?;
            self.it.push_context(c.node_id, cctx);
            guarded = true;
        }
        let elt = if dict {
            let kv = self.exprs(&parts[..2])?;
            self.builtin_call_at("__dictionary_key_value__", kv, &parts[0], NodeKind::Pair)?
        } else {
            self.expr(&parts[0])?
        };
        if guarded {
            self.it.pop_context()?;
        }
        self.it.pop_context()?;
        self.it.pop_scope()?;
        self.builtin_call(close, vec![elt], node)
    }

    fn call(&mut self, node: &AstNode) -> R {
        let (callee_node, arg_nodes) = node.children.split_first().ok_or_else(|| malformed(node, "call without callee"))?;
        let mut args = Vec::new();
        let callee = match callee_node.kind {
            NodeKind::Identifier => {
                let name = self.text(callee_node).to_string();
                let bound = if self.compiling.contains(&name) { None } else { self.it.peek(&name) };
                match bound {
                    Some(_) => {
                        let obj = self.it.lookup(&name).expect("peeked");
                        let kind = if self.it.object(obj)?.compiled { FunctionKind::Compiled } else { FunctionKind::Guessed };
                        FunctionValue { kind, theta: Theta::Object(obj), name }
                    }
                    None => {
                        let obj = self.it.guess(callee_node.node_id, callee_node.span, NodeKind::Identifier, &name, "callee");
                        FunctionValue { kind: FunctionKind::Guessed, theta: Theta::Object(obj), name }
                    }
                }
            }
            NodeKind::Attribute => {
                args.push(self.expr(child(callee_node, 0)?)?);
                let attr = child(callee_node, 1)?;
                let name = self.text(attr).to_string();
                let obj = self.it.guess(attr.node_id, attr.span, NodeKind::Identifier, &name, "callee");
                FunctionValue { kind: FunctionKind::Guessed, theta: Theta::Object(obj), name }
            }
            _ => {
                let obj = self.expr(callee_node)?;
                FunctionValue { kind: FunctionKind::Guessed, theta: Theta::Object(obj), name: self.text(callee_node).to_string() }
            }
        };
        for a in arg_nodes {
            args.push(match a.kind {
                NodeKind::KeywordArgument => {
                    let key = child(a, 0)?;
                    let k = self.it.guess(key.node_id, key.span, NodeKind::Identifier, self.text(key), "keyword");
                    let v = self.expr(child(a, 1)?)?;
                    self.builtin_call("__keyword_argument__", vec![k, v], a)?
                }
                NodeKind::Argument => {
                    let v = self.expr(child(a, 0)?)?;
                    let f = if a.op() == Some("**") { "__dictionary_splat__" } else { "__list_splat__" };
                    self.builtin_call(f, vec![v], a)?
                }
                _ => self.expr(a)?,
            });
        }
        self.it.lambda(callee, args, node.node_id, node.span, NodeKind::Call, "call")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::TraceEvent;
    use crate::syntax::parse;

    pub(crate) const CELSIUS: &str =
        "def celsius_to_fahrenheit(celsius):\n    fahrenheit = celsius * 1.8 + 32\n    return fahrenheit\n";

    fn run(src: &str) -> (SyntaxTree, Generated) {
        let tree = parse(src).unwrap();
        let g = generate_symbolic(&tree, &CodegenOptions::default());
        (tree, g)
    }

    fn ok(src: &str) -> Generated {
        let (_, g) = run(src);
        assert!(g.abort.is_none(), "{:?}", g.abort);
        g
    }

    fn lambdas(g: &Generated) -> Vec<String> {
        g.trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Lambda { callee, .. } => Some(callee.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn celsius_trace() {
        let g = ok(CELSIUS);
        let expected = "\
1\tPUSH_SCOPE\t\"func: celsius_to_fahrenheit\"
2\tGUESS\t#1 Parameter \"celsius\"
3\tSTORE\t\"celsius\" #1
4\tLOOKUP\t\"celsius\" #1
5\tGUESS\t#2 NumberLit \"1.8\"
6\tLAMBDA\tbuiltin \"*\" 0 #1 #2 -> #3
7\tGUESS\t#4 NumberLit \"32\"
8\tLAMBDA\tbuiltin \"+\" 0 #3 #4 -> #5
9\tSTORE\t\"fahrenheit\" #5
10\tLOOKUP\t\"fahrenheit\" #5
11\tSTORE\t\"__return_val__\" #5
12\tRETURN\t#5
13\tLOOKUP\t\"__return_val__\" #5
14\tLOOKUP\t\"celsius\" #1
15\tPOP_SCOPE\t\"func: celsius_to_fahrenheit\"
16\tGUESS\t#6 FunctionDefinition \"fahrenheit = celsius * 1.8 + 32\\n    return fahrenheit\"
17\tLAMBDA\tbuiltin \"__compile_function__\" 0 #6 #1 #5 #1 -> #7
18\tSTORE\t\"celsius_to_fahrenheit\" #7
";
        assert_eq!(g.trace.text(), expected);
    }

    #[test]
    fn empty_and_import_only_scripts_have_empty_traces() {
        assert!(ok("").trace.events.is_empty());
        assert!(ok("import os\nfrom a import b\n").trace.events.is_empty());
    }

    #[test]
    fn loops_execute_body_once() {
        let g = ok("for i in range(3):\n    x = i\n");
        let stores: Vec<_> = g.trace.events.iter().filter(|e| matches!(e, TraceEvent::Store { name, .. } if name == "x")).collect();
        assert_eq!(stores.len(), 1);
        assert!(g.dispatch.values().all(|&c| c == 1));
        assert_eq!(lambdas(&g), ["range", "__for_in__", "__end_for_iterator__"]);
    }

    #[test]
    fn reassignment_creates_distinct_objects() {
        let g = ok("b = a + 1\nb = b + 1\n");
        let hist: Vec<_> = g.trace.events.iter().filter_map(|e| match e {
            TraceEvent::Store { name, obj } if name == "b" => Some(*obj),
            _ => None,
        }).collect();
        assert_eq!(hist.len(), 2);
        assert_ne!(hist[0], hist[1]);
    }

    #[test]
    fn subscript_assignment_stores_root() {
        let g = ok("lst[0] = y\n");
        assert_eq!(lambdas(&g), ["__subscript_assign__"]);
        assert!(matches!(g.trace.events.last(), Some(TraceEvent::Store { name, .. }) if name == "lst"));
    }

    #[test]
    fn literals_are_single_objects() {
        let g = ok("x = [a, b]\ny = []\nz = {k: v}\n");
        assert_eq!(lambdas(&g), ["__list_of__", "__list_of__", "__dictionary_key_value__", "__dictionary_of__"]);
        let list_record = &g.trace.records[1];
        assert!(list_record.args.is_empty());
    }

    #[test]
    fn contexts_nest() {
        let g = ok("while c:\n    if d:\n        for i in xs:\n            y = f(i)\n");
        let call = g.trace.records.iter().find(|r| r.callee.name == "f").unwrap();
        assert_eq!(call.contexts.len(), 3);
        let after = ok("while c:\n    s = 1\nt = g(s)\n");
        let call = after.trace.records.iter().find(|r| r.callee.name == "g").unwrap();
        assert!(call.contexts.is_empty());
    }

    #[test]
    fn both_branches_once() {
        let g = ok("if c:\n    x = 1\nelif d:\n    x = 2\nelse:\n    x = 3\n");
        assert_eq!(lambdas(&g), ["__if__", "__else__", "__if__", "__else__"]);
        assert_eq!(g.dispatch.values().filter(|&&c| c == 1).count(), g.dispatch.len());
        let tree = parse("if c:\n    x = 1\nelif d:\n    x = 2\nelse:\n    x = 3\n").unwrap();
        let blocks = tree.nodes().iter().filter(|n| n.kind == NodeKind::Block).count();
        assert_eq!(blocks, 3);
        assert_eq!(g.dispatch.len(), 1 + blocks + 3);
    }

    #[test]
    fn compiled_functions_are_not_reentered() {
        let src = format!("{CELSIUS}a = celsius_to_fahrenheit(25)\nb = celsius_to_fahrenheit(a)\n");
        let g = ok(&src);
        let calls: Vec<_> = g.trace.records.iter().filter(|r| r.callee.name == "celsius_to_fahrenheit").collect();
        assert_eq!(calls.len(), 2);
        assert!(calls.iter().all(|r| r.callee.kind == FunctionKind::Compiled));
        assert_eq!(lambdas(&g).iter().filter(|c| *c == "*").count(), 1);
    }

    #[test]
    fn recursion_uses_a_guessed_signature() {
        let g = ok("def f(n):\n    return f(n - 1)\n");
        let inner = g.trace.records.iter().find(|r| r.callee.name == "f").unwrap();
        assert_eq!(inner.callee.kind, FunctionKind::Guessed);
        assert_eq!(lambdas(&g).last().unwrap(), "__compile_function__");
    }

    #[test]
    fn empty_function_returns_none_embedding() {
        let g = ok("def g():\n    pass\n");
        assert!(g.trace.events.iter().any(|e| matches!(e, TraceEvent::Guess { kind, text, .. } if kind == "Builtin" && text == NONE_EMBEDDING)));
        assert_eq!(g.trace.records[0].args.len(), 2);
    }

    #[test]
    fn unpacking_calls() {
        let g = ok("a, b = f(x)\n");
        assert_eq!(lambdas(&g), ["f", "__unpack_k__", "__unpack_k__"]);
        let r = g.trace.records[0].result;
        assert_eq!(g.trace.records[1].args[0], r);
        assert_ne!(g.trace.records[1].result, g.trace.records[2].result);
    }

    #[test]
    fn composition_order() {
        let g = ok("y = g(f(a))\n");
        assert_eq!(lambdas(&g), ["f", "g"]);
        assert_eq!(g.trace.records[1].args, vec![g.trace.records[0].result]);
        let g = ok("y = f(g(a))\n");
        assert_eq!(lambdas(&g), ["g", "f"]);
    }

    #[test]
    fn missing_names_are_guessed_once() {
        let g = ok("y = duck + duck\n");
        let guesses = g.trace.events.iter().filter(|e| matches!(e, TraceEvent::Guess { text, .. } if text == "duck")).count();
        assert_eq!(guesses, 1);
        assert_eq!(g.trace.records[0].args[0], g.trace.records[0].args[1]);
    }

    #[test]
    fn argument_forms() {
        let g = ok("f(a, k=1, *r, **kw)\nobj.m(x)\n");
        assert_eq!(lambdas(&g), ["__keyword_argument__", "__list_splat__", "__dictionary_splat__", "f", "m"]);
        assert_eq!(g.trace.records[3].args.len(), 4);
        assert_eq!(g.trace.records[4].args.len(), 2);
    }

    #[test]
    fn argument_cap() {
        let args: Vec<String> = (0..20).map(|i| format!("a{i}")).collect();
        let g = ok(&format!("f({})\n", args.join(", ")));
        assert_eq!(g.trace.records[0].args.len(), 16);
    }

    #[test]
    fn unsupported_constructs_abort() {
        let (_, g) = run("g = lambda x: x\n");
        match g.abort {
            Some(Abort::Codegen(e)) => {
                assert_eq!(e.kind, CodegenErrorKind::UnsupportedConstruct);
                assert_eq!(e.node_kind, NodeKind::Unsupported);
            }
            other => panic!("{other:?}"),
        }
        let (_, g) = run("x = a @ b\n");
        assert!(matches!(g.abort, Some(Abort::Codegen(_))));
    }

    #[test]
    fn negated_operators_split() {
        let g = ok("y = a not in b\nz = a is not None\n");
        assert_eq!(lambdas(&g), ["in", "not", "is", "not"]);
    }

    #[test]
    fn try_and_comprehensions() {
        let g = ok("try:\n    f()\nexcept E as e:\n    g(e)\nfinally:\n    h()\n");
        assert_eq!(lambdas(&g), ["__try__", "f", "__except__", "g", "__finally__", "h"]);
        let g = ok("ys = [f(x) for x in xs if x]\n");
        assert_eq!(lambdas(&g), ["__list_comprehension__", "__if_clause__", "f", "__list_of__"]);
        assert_eq!(g.trace.records[2].contexts.len(), 2);
        let g = ok("d = {k: v for k, v in items}\n");
        assert_eq!(lambdas(&g), ["__dictionary_comprehension__", "__dictionary_key_value__", "__dictionary_of__"]);
    }

    #[test]
    fn misuse_alias_is_contaminated() {
        let tree = parse("a = 1\nb = 2\nc = f(a, b)\nd = g(c)\ne = h(a)\n").unwrap();
        let target = tree.nodes().iter().filter(|n| n.kind == NodeKind::Identifier && tree.text(n) == "b").nth(1).unwrap().node_id;
        let g = generate_symbolic(&tree, &CodegenOptions { misuse_node: Some(target), ..Default::default() });
        let t = &g.trace;
        let m = t.misuse.as_ref().unwrap();
        assert_eq!((m.source_call, m.arg_index), (Some(0), 1));
        let names: Vec<_> = m.snapshot.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        let flags: Vec<bool> = t.records.iter().map(|r| t.object(r.result).contaminated).collect();
        assert_eq!(flags, [true, true, false]);
    }
}
