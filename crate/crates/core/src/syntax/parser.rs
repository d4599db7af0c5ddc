use super::ast::{AstNode, NodeKind, Span};
use super::lexer::{Tok, TokKind};
use super::SyntaxError;

const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const AUG_OPS: [&str; 13] = [
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];

type PResult<T> = Result<T, SyntaxError>;

pub(crate) struct Parser<'a> {
    src: &'a str,
    toks: &'a [Tok],
    pos: usize,
}

fn node(kind: NodeKind, start: usize, end: usize, children: Vec<AstNode>) -> AstNode {
    AstNode::new(kind, Span::new(start, end), children)
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str, toks: &'a [Tok]) -> Self {
        Parser { src, toks, pos: 0 }
    }

    fn peek(&self) -> Tok {
        self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> Tok {
        self.toks[(self.pos + k).min(self.toks.len() - 1)]
    }

    fn text(&self, t: Tok) -> &'a str {
        &self.src[t.span.start..t.span.end]
    }

    fn at(&self, s: &str) -> bool {
        let t = self.peek();
        matches!(t.kind, TokKind::Op | TokKind::Name) && self.text(t) == s
    }

    fn at_kind(&self, k: TokKind) -> bool {
        self.peek().kind == k
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek();
        if t.kind != TokKind::End {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, s: &str) -> Option<Tok> {
        if self.at(s) {
            Some(self.bump())
        } else {
            None
        }
    }

    fn expect(&mut self, s: &str) -> PResult<Tok> {
        self.eat(s)
            .ok_or_else(|| self.unexpected(&format!("expected '{s}'")))
    }

    fn unexpected(&self, what: &str) -> SyntaxError {
        let t = self.peek();
        let found = match t.kind {
            TokKind::Newline => "end of line".to_string(),
            TokKind::Indent => "indent".to_string(),
            TokKind::Dedent => "dedent".to_string(),
            TokKind::End => "end of input".to_string(),
            _ => format!("'{}'", self.text(t)),
        };
        SyntaxError::at(self.src, t.span.start, format!("{what}, found {found}"))
    }

    /// End offset of the most recently consumed content token.
    fn last_end(&self) -> usize {
        self.toks[..self.pos]
            .iter()
            .rev()
            .find(|t| {
                matches!(
                    t.kind,
                    TokKind::Name | TokKind::Number | TokKind::Str | TokKind::Op
                )
            })
            .map_or(0, |t| t.span.end)
    }

    pub(crate) fn module(&mut self) -> PResult<AstNode> {
        let mut body = Vec::new();
        while !self.at_kind(TokKind::End) {
            if self.at_kind(TokKind::Newline) {
                self.bump();
                continue;
            }
            if self.at_kind(TokKind::Indent) {
                return Err(self.unexpected("unexpected indent"));
            }
            self.statement(&mut body)?;
        }
        Ok(node(NodeKind::Module, 0, self.src.len(), body))
    }

    fn statement(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        let t = self.peek();
        if t.kind == TokKind::Name || t.kind == TokKind::Op {
            match self.text(t) {
                "def" => return self.function_def().map(|n| out.push(n)),
                "if" => return self.if_stmt().map(|n| out.push(n)),
                "while" => return self.while_stmt().map(|n| out.push(n)),
                "for" => return self.for_stmt().map(|n| out.push(n)),
                "try" => return self.try_stmt().map(|n| out.push(n)),
                "class" | "with" | "async" | "@" | "match" if self.is_compound_unsupported() => {
                    out.push(self.skip_compound());
                    return Ok(());
                }
                _ => {}
            }
        }
        self.simple_statements(out)
    }

    fn is_compound_unsupported(&self) -> bool {
        let t = self.peek();
        match self.text(t) {
            // `match` is a soft keyword: only a statement when followed by a subject and ':'
            "match" => {
                let next = self.peek_at(1);
                next.kind != TokKind::Op
                    || matches!(self.text(next), "(" | "[" | "{" | "-")
                        && self.line_ends_with_colon()
            }
            _ => true,
        }
    }

    fn line_ends_with_colon(&self) -> bool {
        let mut i = self.pos;
        let mut last = None;
        while i < self.toks.len()
            && self.toks[i].kind != TokKind::Newline
            && self.toks[i].kind != TokKind::End
        {
            last = Some(self.toks[i]);
            i += 1;
        }
        last.is_some_and(|t| self.text(t) == ":")
    }

    /// Skips a header line and its indented suite, yielding one Unsupported node.
    fn skip_compound(&mut self) -> AstNode {
        let start = self.peek().span.start;
        while !matches!(self.peek().kind, TokKind::Newline | TokKind::End) {
            self.bump();
        }
        self.bump();
        if self.at_kind(TokKind::Indent) {
            let mut depth = 0usize;
            loop {
                match self.bump().kind {
                    TokKind::Indent => depth += 1,
                    TokKind::Dedent => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    TokKind::End => break,
                    _ => {}
                }
            }
        }
        node(
            NodeKind::Unsupported,
            start,
            self.last_end().max(start),
            vec![],
        )
    }

    fn simple_statements(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        loop {
            out.push(self.simple_statement()?);
            if self.eat(";").is_some() {
                if self.at_kind(TokKind::Newline) || self.at_kind(TokKind::End) {
                    break;
                }
                continue;
            }
            break;
        }
        if self.at_kind(TokKind::End) {
            return Ok(());
        }
        if !self.at_kind(TokKind::Newline) {
            return Err(self.unexpected("expected end of statement"));
        }
        self.bump();
        Ok(())
    }

    fn skip_simple(&mut self, start: usize) -> AstNode {
        while !matches!(self.peek().kind, TokKind::Newline | TokKind::End) && !self.at(";") {
            self.bump();
        }
        node(
            NodeKind::Unsupported,
            start,
            self.last_end().max(start),
            vec![],
        )
    }

    fn simple_statement(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        let start = t.span.start;
        if t.kind == TokKind::Name {
            match self.text(t) {
                "pass" | "break" | "continue" => {
                    let word = {
                        let t = self.bump();
                        self.text(t)
                    };
                    return Ok(
                        node(NodeKind::ExpressionStatement, start, t.span.end, vec![])
                            .with_op(word),
                    );
                }
                "return" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_statement_end() {
                        children.push(self.expr_list()?);
                    }
                    return Ok(node(NodeKind::Return, start, self.last_end(), children));
                }
                "import" => {
                    self.bump();
                    self.dotted_names()?;
                    return Ok(node(NodeKind::Import, start, self.last_end(), vec![]));
                }
                "from" => {
                    self.bump();
                    while self.eat(".").is_some() || self.eat("...").is_some() {}
                    if !self.at("import") {
                        self.dotted_name()?;
                    }
                    self.expect("import")?;
                    if self.eat("*").is_none() {
                        let paren = self.eat("(").is_some();
                        self.import_as_names()?;
                        if paren {
                            self.expect(")")?;
                        }
                    }
                    return Ok(node(NodeKind::ImportFrom, start, self.last_end(), vec![]));
                }
                "del" | "assert" | "raise" | "global" | "nonlocal" | "yield" | "print" | "exec"
                    if self.text(t) != "print" && self.text(t) != "exec"
                        || self.is_py2_statement() =>
                {
                    return Ok(self.skip_simple(start));
                }
                _ => {}
            }
        }
        let first = self.expr_list_star()?;
        if self.at("=") {
            let mut parts = vec![first];
            while self.eat("=").is_some() {
                if self.at("yield") {
                    let s = self.peek().span.start;
                    parts.push(self.skip_simple(s));
                    break;
                }
                parts.push(self.expr_list_star()?);
            }
            let end = parts.last().unwrap().span.end;
            return Ok(node(NodeKind::Assignment, start, end, parts));
        }
        let t = self.peek();
        if t.kind == TokKind::Op && AUG_OPS.contains(&self.text(t)) {
            let op = {
                let t = self.bump();
                self.text(t)
            };
            let value = self.expr_list()?;
            let end = value.span.end;
            return Ok(node(
                NodeKind::AugmentedAssignment,
                start,
                end,
                vec![first, value],
            )
            .with_op(op));
        }
        if self.at(":") {
            // annotated assignment
            return Ok(self.skip_simple(start));
        }
        let end = first.span.end;
        Ok(node(NodeKind::ExpressionStatement, start, end, vec![first]))
    }

    /// `print x` / `exec code` in Python 2 style.
    fn is_py2_statement(&self) -> bool {
        let next = self.peek_at(1);
        matches!(next.kind, TokKind::Name | TokKind::Number | TokKind::Str)
            && !KEYWORDS.contains(&self.text(next))
            || next.kind == TokKind::Op && self.text(next) == ">>"
    }

    fn at_statement_end(&self) -> bool {
        matches!(self.peek().kind, TokKind::Newline | TokKind::End) || self.at(";")
    }

    fn dotted_name(&mut self) -> PResult<()> {
        self.name_token()?;
        while self.eat(".").is_some() {
            self.name_token()?;
        }
        Ok(())
    }

    fn dotted_names(&mut self) -> PResult<()> {
        loop {
            self.dotted_name()?;
            if self.eat("as").is_some() {
                self.name_token()?;
            }
            if self.eat(",").is_none() {
                return Ok(());
            }
        }
    }

    fn import_as_names(&mut self) -> PResult<()> {
        loop {
            self.name_token()?;
            if self.eat("as").is_some() {
                self.name_token()?;
            }
            if self.eat(",").is_none() || self.at(")") || self.at_statement_end() {
                return Ok(());
            }
        }
    }

    fn name_token(&mut self) -> PResult<Tok> {
        let t = self.peek();
        if t.kind == TokKind::Name && !KEYWORDS.contains(&self.text(t)) {
            Ok(self.bump())
        } else {
            Err(self.unexpected("expected a name"))
        }
    }

    fn identifier(&mut self) -> PResult<AstNode> {
        let t = self.name_token()?;
        Ok(node(NodeKind::Identifier, t.span.start, t.span.end, vec![]))
    }

    // ---- compound statements ----

    fn block(&mut self) -> PResult<AstNode> {
        self.expect(":")?;
        let mut stmts = Vec::new();
        if self.at_kind(TokKind::Newline) {
            self.bump();
            if !self.at_kind(TokKind::Indent) {
                return Err(self.unexpected("expected an indented block"));
            }
            self.bump();
            while !self.at_kind(TokKind::Dedent) && !self.at_kind(TokKind::End) {
                if self.at_kind(TokKind::Newline) {
                    self.bump();
                    continue;
                }
                self.statement(&mut stmts)?;
            }
            self.bump();
        } else {
            self.simple_statements(&mut stmts)?;
        }
        let start = stmts.first().map_or(0, |s| s.span.start);
        let end = stmts.last().map_or(0, |s| s.span.end);
        Ok(node(NodeKind::Block, start, end, stmts))
    }

    fn function_def(&mut self) -> PResult<AstNode> {
        let start = self.expect("def")?.span.start;
        let name = self.identifier()?;
        let params = self.parameters()?;
        if self.eat("->").is_some() {
            self.test()?;
        }
        let body = self.block()?;
        let end = body.span.end;
        Ok(node(
            NodeKind::FunctionDefinition,
            start,
            end,
            vec![name, params, body],
        ))
    }

    fn parameters(&mut self) -> PResult<AstNode> {
        let open = self.expect("(")?.span.start;
        let mut params = Vec::new();
        while !self.at(")") {
            let star = if self.at("*") || self.at("**") {
                Some({
                    let t = self.bump();
                    self.text(t)
                })
            } else {
                None
            };
            if self.at("/") {
                self.bump();
            } else if star == Some("*") && (self.at(",") || self.at(")")) {
                // bare `*` separator
            } else {
                let ident = self.identifier()?;
                if self.eat(":").is_some() {
                    self.test()?;
                }
                if star.is_none() && self.eat("=").is_some() {
                    let default = self.test()?;
                    let (s, e) = (ident.span.start, default.span.end);
                    params.push(node(NodeKind::DefaultParameter, s, e, vec![ident, default]));
                } else {
                    let mut p = node(
                        NodeKind::Parameter,
                        ident.span.start,
                        ident.span.end,
                        vec![],
                    );
                    if let Some(op) = star {
                        p = p.with_op(op);
                    }
                    params.push(p);
                }
            }
            if self.eat(",").is_none() {
                break;
            }
        }
        let close = self.expect(")")?.span.end;
        Ok(node(NodeKind::Parameters, open, close, params))
    }

    fn if_stmt(&mut self) -> PResult<AstNode> {
        let start = self.bump().span.start;
        let kind = if self.text(self.toks[self.pos - 1]) == "if" {
            NodeKind::If
        } else {
            NodeKind::Elif
        };
        let cond = self.named_test()?;
        let body = self.block()?;
        let mut children = vec![cond, body];
        if self.at("elif") {
            children.push(self.if_stmt()?);
        } else if let Some(e) = self.else_clause()? {
            children.push(e);
        }
        let end = children.last().unwrap().span.end;
        Ok(node(kind, start, end, children))
    }

    fn else_clause(&mut self) -> PResult<Option<AstNode>> {
        match self.eat("else") {
            Some(t) => {
                let body = self.block()?;
                let end = body.span.end;
                Ok(Some(node(NodeKind::Else, t.span.start, end, vec![body])))
            }
            None => Ok(None),
        }
    }

    fn while_stmt(&mut self) -> PResult<AstNode> {
        let start = self.expect("while")?.span.start;
        let cond = self.named_test()?;
        let body = self.block()?;
        let mut children = vec![cond, body];
        if let Some(e) = self.else_clause()? {
            children.push(e);
        }
        let end = children.last().unwrap().span.end;
        Ok(node(NodeKind::While, start, end, children))
    }

    fn for_stmt(&mut self) -> PResult<AstNode> {
        let start = self.expect("for")?.span.start;
        let target = self.target_list()?;
        self.expect("in")?;
        let iter = self.expr_list()?;
        let body = self.block()?;
        let mut children = vec![target, iter, body];
        if let Some(e) = self.else_clause()? {
            children.push(e);
        }
        let end = children.last().unwrap().span.end;
        Ok(node(NodeKind::For, start, end, children))
    }

    fn try_stmt(&mut self) -> PResult<AstNode> {
        let start = self.expect("try")?.span.start;
        let mut children = vec![self.block()?];
        while let Some(t) = self.eat("except") {
            let mut parts = Vec::new();
            let mut named = false;
            if !self.at(":") {
                parts.push(self.test()?);
                if self.eat("as").is_some() || self.eat(",").is_some() {
                    parts.push(self.identifier()?);
                    named = true;
                }
            }
            parts.push(self.block()?);
            let end = parts.last().unwrap().span.end;
            let mut n = node(NodeKind::Except, t.span.start, end, parts);
            if named {
                n = n.with_op("as");
            }
            children.push(n);
        }
        if children.len() > 1 {
            if let Some(e) = self.else_clause()? {
                children.push(e);
            }
        }
        if let Some(t) = self.eat("finally") {
            let body = self.block()?;
            let end = body.span.end;
            children.push(node(NodeKind::Finally, t.span.start, end, vec![body]));
        }
        if children.len() == 1 {
            return Err(self.unexpected("expected 'except' or 'finally'"));
        }
        let end = children.last().unwrap().span.end;
        Ok(node(NodeKind::Try, start, end, children))
    }

    // ---- expressions ----

    /// Comma-separated tests; more than one element (or a trailing comma)
    /// produces a bare tuple.
    fn expr_list(&mut self) -> PResult<AstNode> {
        self.sequence(Self::test)
    }

    fn expr_list_star(&mut self) -> PResult<AstNode> {
        self.sequence(Self::star_or_test)
    }

    fn target_list(&mut self) -> PResult<AstNode> {
        self.sequence(Self::star_or_bitor)
    }

    fn sequence(&mut self, item: fn(&mut Self) -> PResult<AstNode>) -> PResult<AstNode> {
        let first = item(self)?;
        if !self.at(",") {
            return Ok(first);
        }
        let start = first.span.start;
        let mut items = vec![first];
        while self.eat(",").is_some() {
            if self.at_sequence_end() {
                break;
            }
            items.push(item(self)?);
        }
        let end = self.last_end();
        Ok(node(NodeKind::TupleLiteral, start, end, items).with_op("bare"))
    }

    fn at_sequence_end(&self) -> bool {
        self.at_statement_end()
            || [")", "]", "}", "=", ":", "in"].iter().any(|s| self.at(s))
            || AUG_OPS.iter().any(|s| self.at(s))
    }

    fn star_or_test(&mut self) -> PResult<AstNode> {
        if self.at("*") {
            return self.star_expr();
        }
        self.test()
    }

    fn star_or_bitor(&mut self) -> PResult<AstNode> {
        if self.at("*") {
            return self.star_expr();
        }
        self.bit_or()
    }

    fn star_expr(&mut self) -> PResult<AstNode> {
        let start = self.bump().span.start;
        let inner = self.bit_or()?;
        Ok(node(NodeKind::Unsupported, start, inner.span.end, vec![]))
    }

    fn named_test(&mut self) -> PResult<AstNode> {
        let t = self.test()?;
        if self.at(":=") {
            self.bump();
            let v = self.test()?;
            return Ok(node(
                NodeKind::Unsupported,
                t.span.start,
                v.span.end,
                vec![],
            ));
        }
        Ok(t)
    }

    fn test(&mut self) -> PResult<AstNode> {
        if self.at("lambda") {
            return self.lambda();
        }
        if self.at("yield") || self.at("await") {
            let start = self.bump().span.start;
            if self.eat("from").is_some() || !self.at_sequence_end() && !self.at(",") {
                self.test()?;
            }
            return Ok(node(NodeKind::Unsupported, start, self.last_end(), vec![]));
        }
        let body = self.or_test()?;
        if self.at("if") {
            // a comprehension's `if` clause follows an or_test directly and is
            // handled by the caller; a conditional needs an `else`
            if !self.conditional_ahead() {
                return Ok(body);
            }
            self.bump();
            let cond = self.or_test()?;
            self.expect("else")?;
            let orelse = self.test()?;
            let (s, e) = (body.span.start, orelse.span.end);
            return Ok(node(
                NodeKind::ConditionalExpression,
                s,
                e,
                vec![body, cond, orelse],
            ));
        }
        Ok(body)
    }

    /// Whether the `if` at the cursor starts a conditional expression, i.e. a
    /// matching `else` follows at the same bracket depth.
    fn conditional_ahead(&self) -> bool {
        let mut depth = 0i32;
        let mut i = self.pos + 1;
        while i < self.toks.len() {
            let t = self.toks[i];
            if matches!(t.kind, TokKind::Newline | TokKind::End) {
                return false;
            }
            let s = self.text(t);
            match s {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                "else" if depth == 0 => return true,
                "if" | "for" | "," | ":" if depth == 0 && t.kind != TokKind::Str => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn lambda(&mut self) -> PResult<AstNode> {
        let start = self.expect("lambda")?.span.start;
        while !self.at(":") {
            if self.at_statement_end() {
                return Err(self.unexpected("expected ':' in lambda"));
            }
            self.bump();
        }
        self.bump();
        let body = self.test()?;
        Ok(node(NodeKind::Unsupported, start, body.span.end, vec![]))
    }

    fn or_test(&mut self) -> PResult<AstNode> {
        let mut left = self.and_test()?;
        while self.eat("or").is_some() {
            let right = self.and_test()?;
            left = binary(NodeKind::BooleanOp, left, right, "or");
        }
        Ok(left)
    }

    fn and_test(&mut self) -> PResult<AstNode> {
        let mut left = self.not_test()?;
        while self.eat("and").is_some() {
            let right = self.not_test()?;
            left = binary(NodeKind::BooleanOp, left, right, "and");
        }
        Ok(left)
    }

    fn not_test(&mut self) -> PResult<AstNode> {
        if let Some(t) = self.eat("not") {
            let inner = self.not_test()?;
            let end = inner.span.end;
            return Ok(node(NodeKind::UnaryOp, t.span.start, end, vec![inner]).with_op("not"));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<AstNode> {
        let mut left = self.bit_or()?;
        loop {
            let op = if self.at("not") && self.text(self.peek_at(1)) == "in" {
                self.bump();
                self.bump();
                "not in"
            } else if self.at("is") {
                self.bump();
                if self.eat("not").is_some() {
                    "is not"
                } else {
                    "is"
                }
            } else {
                let t = self.peek();
                let s = self.text(t);
                if matches!(t.kind, TokKind::Op | TokKind::Name)
                    && ["<", ">", "==", ">=", "<=", "!=", "<>", "in"].contains(&s)
                {
                    self.bump();
                    s
                } else {
                    break;
                }
            };
            let right = self.bit_or()?;
            left = binary(NodeKind::Comparison, left, right, op);
        }
        Ok(left)
    }

    fn bit_or(&mut self) -> PResult<AstNode> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> PResult<AstNode> {
        const LEVELS: [&[&str]; 6] = [
            &["|"],
            &["^"],
            &["&"],
            &["<<", ">>"],
            &["+", "-"],
            &["*", "/", "%", "//", "@"],
        ];
        if level == LEVELS.len() {
            return self.factor();
        }
        let mut left = self.binary_level(level + 1)?;
        loop {
            let t = self.peek();
            if t.kind != TokKind::Op || !LEVELS[level].contains(&self.text(t)) {
                break;
            }
            let op = {
                let t = self.bump();
                self.text(t)
            };
            let right = self.binary_level(level + 1)?;
            left = binary(NodeKind::BinaryOp, left, right, op);
        }
        Ok(left)
    }

    fn factor(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        if t.kind == TokKind::Op && matches!(self.text(t), "+" | "-" | "~") {
            let op = {
                let t = self.bump();
                self.text(t)
            };
            let inner = self.factor()?;
            let end = inner.span.end;
            return Ok(node(NodeKind::UnaryOp, t.span.start, end, vec![inner]).with_op(op));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<AstNode> {
        if self.at("await") {
            let start = self.bump().span.start;
            let inner = self.power()?;
            return Ok(node(NodeKind::Unsupported, start, inner.span.end, vec![]));
        }
        let base = self.atom_expr()?;
        if self.eat("**").is_some() {
            let exp = self.factor()?;
            return Ok(binary(NodeKind::BinaryOp, base, exp, "**"));
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> PResult<AstNode> {
        let mut value = self.atom()?;
        loop {
            if self.at("(") {
                self.bump();
                let mut children = vec![value];
                self.call_args(&mut children)?;
                let end = self.expect(")")?.span.end;
                let start = children[0].span.start;
                value = node(NodeKind::Call, start, end, children);
            } else if self.at("[") {
                self.bump();
                let index = self.subscript_list()?;
                let end = self.expect("]")?.span.end;
                let start = value.span.start;
                value = node(NodeKind::Subscript, start, end, vec![value, index]);
            } else if self.at(".") {
                self.bump();
                let attr = self.identifier()?;
                let (start, end) = (value.span.start, attr.span.end);
                value = node(NodeKind::Attribute, start, end, vec![value, attr]);
            } else {
                return Ok(value);
            }
        }
    }

    fn call_args(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        while !self.at(")") {
            if self.at("*") || self.at("**") {
                let t = self.bump();
                let op = self.text(t);
                let inner = self.test()?;
                let end = inner.span.end;
                out.push(node(NodeKind::Argument, t.span.start, end, vec![inner]).with_op(op));
            } else if self.peek().kind == TokKind::Name
                && self.text(self.peek_at(1)) == "="
                && self.peek_at(1).kind == TokKind::Op
            {
                let key = self.identifier()?;
                self.bump();
                let value = self.test()?;
                let (s, e) = (key.span.start, value.span.end);
                out.push(node(NodeKind::KeywordArgument, s, e, vec![key, value]));
            } else {
                let arg = self.named_test()?;
                if self.at("for") || self.at("async") {
                    out.push(self.comprehension(arg, None, "generator", None)?);
                } else {
                    out.push(arg);
                }
            }
            if self.eat(",").is_none() {
                break;
            }
        }
        Ok(())
    }

    fn subscript_list(&mut self) -> PResult<AstNode> {
        let first = self.subscript()?;
        if !self.at(",") {
            return Ok(first);
        }
        let start = first.span.start;
        let mut items = vec![first];
        while self.eat(",").is_some() {
            if self.at("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(node(NodeKind::TupleLiteral, start, self.last_end(), items).with_op("bare"))
    }

    fn subscript(&mut self) -> PResult<AstNode> {
        let start = self.peek().span.start;
        let mut parts = Vec::new();
        if !self.at(":") {
            let lower = self.test()?;
            if !self.at(":") {
                return Ok(lower);
            }
            parts.push(lower);
        }
        self.expect(":")?;
        if !self.at(":") && !self.at("]") && !self.at(",") {
            parts.push(self.test()?);
        }
        if self.eat(":").is_some() && !self.at("]") && !self.at(",") {
            parts.push(self.test()?);
        }
        Ok(node(NodeKind::Slice, start, self.last_end(), parts))
    }

    fn atom(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        let (s, e) = (t.span.start, t.span.end);
        match t.kind {
            TokKind::Number => {
                self.bump();
                Ok(node(NodeKind::NumberLit, s, e, vec![]))
            }
            TokKind::Str => {
                self.bump();
                let mut end = e;
                while self.at_kind(TokKind::Str) {
                    end = self.bump().span.end;
                }
                Ok(node(NodeKind::StringLit, s, end, vec![]))
            }
            TokKind::Name => match self.text(t) {
                "True" | "False" => {
                    self.bump();
                    Ok(node(NodeKind::BoolLit, s, e, vec![]))
                }
                "None" => {
                    self.bump();
                    Ok(node(NodeKind::NoneLit, s, e, vec![]))
                }
                _ => self.identifier(),
            },
            TokKind::Op => match self.text(t) {
                "(" => self.paren(),
                "[" => self.bracket(),
                "{" => self.brace(),
                "..." | "`" => {
                    self.bump();
                    if self.text(t) == "`" {
                        while !self.at("`") && !self.at_statement_end() {
                            self.bump();
                        }
                        self.expect("`")?;
                    }
                    Ok(node(NodeKind::Unsupported, s, self.last_end(), vec![]))
                }
                _ => Err(self.unexpected("expected an expression")),
            },
            _ => Err(self.unexpected("expected an expression")),
        }
    }

    fn paren(&mut self) -> PResult<AstNode> {
        let open = self.expect("(")?.span.start;
        if let Some(t) = self.eat(")") {
            return Ok(node(NodeKind::TupleLiteral, open, t.span.end, vec![]).with_op("paren"));
        }
        if self.at("yield") {
            self.test()?;
            let end = self.expect(")")?.span.end;
            return Ok(node(NodeKind::Unsupported, open, end, vec![]));
        }
        let first = self.star_or_named()?;
        if self.at("for") || self.at("async") {
            let comp = self.comprehension(first, None, "generator", Some(open))?;
            return Ok(comp);
        }
        if self.at(")") {
            self.bump();
            // parentheses are transparent
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(",").is_some() {
            if self.at(")") {
                break;
            }
            items.push(self.star_or_named()?);
        }
        let end = self.expect(")")?.span.end;
        Ok(node(NodeKind::TupleLiteral, open, end, items).with_op("paren"))
    }

    fn star_or_named(&mut self) -> PResult<AstNode> {
        if self.at("*") {
            return self.star_expr();
        }
        self.named_test()
    }

    fn bracket(&mut self) -> PResult<AstNode> {
        let open = self.expect("[")?.span.start;
        if let Some(t) = self.eat("]") {
            return Ok(node(NodeKind::ListLiteral, open, t.span.end, vec![]));
        }
        let first = self.star_or_named()?;
        if self.at("for") || self.at("async") {
            return self.comprehension(first, None, "list", Some(open));
        }
        let mut items = vec![first];
        while self.eat(",").is_some() {
            if self.at("]") {
                break;
            }
            items.push(self.star_or_named()?);
        }
        let end = self.expect("]")?.span.end;
        Ok(node(NodeKind::ListLiteral, open, end, items))
    }

    fn brace(&mut self) -> PResult<AstNode> {
        let open = self.expect("{")?.span.start;
        if let Some(t) = self.eat("}") {
            return Ok(node(NodeKind::DictLiteral, open, t.span.end, vec![]));
        }
        if self.at("**") {
            return self.dict_items(open, None);
        }
        let first = self.star_or_test()?;
        if self.eat(":").is_some() {
            let value = self.test()?;
            if self.at("for") || self.at("async") {
                return self.comprehension(first, Some(value), "dict", Some(open));
            }
            let (s, e) = (first.span.start, value.span.end);
            return self.dict_items(open, Some(node(NodeKind::Pair, s, e, vec![first, value])));
        }
        if self.at("for") || self.at("async") {
            // set comprehension
            let comp = self.comprehension(first, None, "set", Some(open))?;
            return Ok(node(
                NodeKind::Unsupported,
                comp.span.start,
                comp.span.end,
                vec![],
            ));
        }
        let mut items = vec![first];
        while self.eat(",").is_some() {
            if self.at("}") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        let end = self.expect("}")?.span.end;
        Ok(node(NodeKind::SetLiteral, open, end, items))
    }

    fn dict_items(&mut self, open: usize, first: Option<AstNode>) -> PResult<AstNode> {
        let mut items: Vec<AstNode> = first.into_iter().collect();
        let mut need_sep = !items.is_empty();
        loop {
            if need_sep && self.eat(",").is_none() {
                break;
            }
            need_sep = true;
            if self.at("}") {
                break;
            }
            if let Some(t) = self.eat("**") {
                let inner = self.bit_or()?;
                let end = inner.span.end;
                items.push(node(NodeKind::Argument, t.span.start, end, vec![inner]).with_op("**"));
                continue;
            }
            let key = self.test()?;
            self.expect(":")?;
            let value = self.test()?;
            let (s, e) = (key.span.start, value.span.end);
            items.push(node(NodeKind::Pair, s, e, vec![key, value]));
        }
        let end = self.expect("}")?.span.end;
        Ok(node(NodeKind::DictLiteral, open, end, items))
    }

    /// Parses `for target in iter [if cond]` clauses after an element. With
    /// `open` set, the closing bracket is consumed and included in the span.
    fn comprehension(
        &mut self,
        elt: AstNode,
        value: Option<AstNode>,
        flavour: &str,
        open: Option<usize>,
    ) -> PResult<AstNode> {
        let mut children = vec![elt];
        children.extend(value);
        let mut fors = 0;
        let mut ifs = 0;
        while self.at("for") || self.at("async") {
            if self.eat("async").is_some() {
                fors += 1;
            }
            self.expect("for")?;
            children.push(self.target_list()?);
            self.expect("in")?;
            children.push(self.or_test()?);
            fors += 1;
            while self.eat("if").is_some() {
                children.push(self.or_test_nocond()?);
                ifs += 1;
            }
        }
        let start = open.unwrap_or(children[0].span.start);
        let end = match (open, flavour) {
            (None, _) => self.last_end(),
            (Some(_), "list") => self.expect("]")?.span.end,
            (Some(_), "generator") => self.expect(")")?.span.end,
            (Some(_), _) => self.expect("}")?.span.end,
        };
        if fors > 1 || ifs > 1 {
            return Ok(node(NodeKind::Unsupported, start, end, vec![]));
        }
        let kind = if flavour == "dict" {
            NodeKind::DictComprehension
        } else {
            NodeKind::ListComprehension
        };
        let mut n = node(kind, start, end, children);
        if kind == NodeKind::ListComprehension {
            n = n.with_op(flavour);
        }
        Ok(n)
    }

    fn or_test_nocond(&mut self) -> PResult<AstNode> {
        if self.at("lambda") {
            return self.lambda();
        }
        self.or_test()
    }
}

fn binary(kind: NodeKind, left: AstNode, right: AstNode, op: &str) -> AstNode {
    let (s, e) = (left.span.start, right.span.end);
    node(kind, s, e, vec![left, right]).with_op(op)
}

#[cfg(test)]
mod tests {
    use crate::syntax::{parse, walk, AstNode, NodeKind, SyntaxTree};

    pub(crate) const CELSIUS: &str =
        "def celsius_to_fahrenheit(celsius):\n    fahrenheit = celsius * 1.8 + 32\n    return fahrenheit\n";

    fn shape(tree: &SyntaxTree) -> String {
        fn go(n: &AstNode, src: &str, out: &mut String) {
            out.push_str(n.kind.name());
            if let Some(op) = n.op() {
                out.push_str(&format!("({op})"));
            }
            if n.children.is_empty() && matches!(n.kind, NodeKind::Identifier | NodeKind::NumberLit)
            {
                out.push_str(&format!("<{}>", n.text(src)));
            }
            if !n.children.is_empty() {
                out.push('[');
                for (i, c) in n.children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    go(c, src, out);
                }
                out.push(']');
            }
        }
        let mut s = String::new();
        go(&tree.root, &tree.source, &mut s);
        s
    }

    fn shape_of(src: &str) -> String {
        shape(&parse(src).unwrap())
    }

    #[test]
    fn celsius_program() {
        let tree = parse(CELSIUS).unwrap();
        assert_eq!(
            shape(&tree),
            "Module[FunctionDefinition[Identifier<celsius_to_fahrenheit>, Parameters[Parameter], \
             Block[Assignment[Identifier<fahrenheit>, BinaryOp(+)[BinaryOp(*)[Identifier<celsius>, \
             NumberLit<1.8>], NumberLit<32>]], Return[Identifier<fahrenheit>]]]]"
        );
    }

    #[test]
    fn empty_source() {
        let tree = parse("").unwrap();
        assert_eq!(tree.root.kind, NodeKind::Module);
        assert!(tree.root.children.is_empty());
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn simple_assignment_spans() {
        let src = "a = 1+1";
        let tree = parse(src).unwrap();
        assert_eq!(
            shape(&tree),
            "Module[Assignment[Identifier<a>, BinaryOp(+)[NumberLit<1>, NumberLit<1>]]]"
        );
        let texts: Vec<&str> = tree.nodes().iter().map(|n| tree.text(n)).collect();
        assert_eq!(texts, vec!["a = 1+1", "a = 1+1", "a", "1+1", "1", "1"]);
    }

    #[test]
    fn walk_counts_every_node() {
        let tree = parse(CELSIUS).unwrap();
        let mut n = 0;
        walk(&tree, |_| n += 1);
        assert_eq!(n, tree.node_count());
    }

    #[test]
    fn walk_is_preorder() {
        let tree = parse("if c:\n    while d:\n        x = 1\n").unwrap();
        let mut kinds = Vec::new();
        walk(&tree, |n| kinds.push(n.kind.name()));
        assert_eq!(
            kinds,
            vec![
                "Module",
                "If",
                "Identifier",
                "Block",
                "While",
                "Identifier",
                "Block",
                "Assignment",
                "Identifier",
                "NumberLit"
            ]
        );
    }

    #[test]
    fn control_flow_shapes() {
        assert_eq!(
            shape_of("if a:\n    x = 1\nelif b:\n    x = 2\nelse:\n    x = 3\n"),
            "Module[If[Identifier<a>, Block[Assignment[Identifier<x>, NumberLit<1>]], Elif[Identifier<b>, \
             Block[Assignment[Identifier<x>, NumberLit<2>]], Else[Block[Assignment[Identifier<x>, NumberLit<3>]]]]]]"
        );
        assert_eq!(
            shape_of("for i, j in pairs: pass\n"),
            "Module[For[TupleLiteral(bare)[Identifier<i>, Identifier<j>], Identifier<pairs>, \
             Block[ExpressionStatement(pass)]]]"
        );
        assert_eq!(
            shape_of("try:\n    f()\nexcept ValueError as e:\n    g(e)\nfinally:\n    h()\n"),
            "Module[Try[Block[ExpressionStatement[Call[Identifier<f>]]], Except(as)[Identifier<ValueError>, \
             Identifier<e>, Block[ExpressionStatement[Call[Identifier<g>, Identifier<e>]]]], \
             Finally[Block[ExpressionStatement[Call[Identifier<h>]]]]]]"
        );
    }

    #[test]
    fn expressions() {
        assert_eq!(
            shape_of("y = a if c else b"),
            "Module[Assignment[Identifier<y>, ConditionalExpression[Identifier<a>, Identifier<c>, Identifier<b>]]]"
        );
        assert_eq!(
            shape_of("y = x not in s and not z"),
            "Module[Assignment[Identifier<y>, BooleanOp(and)[Comparison(not in)[Identifier<x>, Identifier<s>], \
             UnaryOp(not)[Identifier<z>]]]]"
        );
        assert_eq!(
            shape_of("f(a, k=1, *r, **kw)"),
            "Module[ExpressionStatement[Call[Identifier<f>, Identifier<a>, KeywordArgument[Identifier<k>, \
             NumberLit<1>], Argument(*)[Identifier<r>], Argument(**)[Identifier<kw>]]]]"
        );
        assert_eq!(
            shape_of("v = obj.items[1:n]"),
            "Module[Assignment[Identifier<v>, Subscript[Attribute[Identifier<obj>, Identifier<items>], \
             Slice[NumberLit<1>, Identifier<n>]]]]"
        );
        assert_eq!(shape_of("x = -2 ** 3"), "Module[Assignment[Identifier<x>, UnaryOp(-)[BinaryOp(**)[NumberLit<2>, NumberLit<3>]]]]");
    }

    #[test]
    fn literals_and_comprehensions() {
        assert_eq!(
            shape_of("d = {k: v for k, v in items if v}"),
            "Module[Assignment[Identifier<d>, DictComprehension[Identifier<k>, Identifier<v>, \
             TupleLiteral(bare)[Identifier<k>, Identifier<v>], Identifier<items>, Identifier<v>]]]"
        );
        assert_eq!(
            shape_of("s = sum(x for x in xs)"),
            "Module[Assignment[Identifier<s>, Call[Identifier<sum>, ListComprehension(generator)[Identifier<x>, \
             Identifier<x>, Identifier<xs>]]]]"
        );
        assert_eq!(
            shape_of("t = (1,)"),
            "Module[Assignment[Identifier<t>, TupleLiteral(paren)[NumberLit<1>]]]"
        );
        assert_eq!(
            shape_of("z = {1, 2}; w = {'a': [1], **m}"),
            "Module[Assignment[Identifier<z>, SetLiteral[NumberLit<1>, NumberLit<2>]], Assignment[Identifier<w>, \
             DictLiteral[Pair[StringLit, ListLiteral[NumberLit<1>]], Argument(**)[Identifier<m>]]]]"
        );
    }

    #[test]
    fn defaults_and_unsupported() {
        assert_eq!(
            shape_of("def f(a, b=2, *args, **kw) -> int:\n    return a\n"),
            "Module[FunctionDefinition[Identifier<f>, Parameters[Parameter, DefaultParameter[Identifier<b>, \
             NumberLit<2>], Parameter(*), Parameter(**)], Block[Return[Identifier<a>]]]]"
        );
        assert_eq!(
            shape_of("g = lambda x: x"),
            "Module[Assignment[Identifier<g>, Unsupported]]"
        );
        assert_eq!(
            shape_of("@dec\ndef f():\n    pass\nclass A:\n    x = 1\ny = 2\n"),
            "Module[Unsupported, FunctionDefinition[Identifier<f>, Parameters, Block[ExpressionStatement(pass)]], \
             Unsupported, Assignment[Identifier<y>, NumberLit<2>]]"
        );
        assert_eq!(
            shape_of("import os.path as p\nfrom . import (a, b)\n"),
            "Module[Import, ImportFrom]"
        );
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse("x = (1,\ny = 2\n").unwrap_err();
        assert!(err.line >= 1);
        let err = parse("def f(:):\n  pass\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(parse("x = = 1").is_err());
    }

    #[test]
    fn match_as_identifier() {
        assert_eq!(
            shape_of("match = re(x)"),
            "Module[Assignment[Identifier<match>, Call[Identifier<re>, Identifier<x>]]]"
        );
    }
}
