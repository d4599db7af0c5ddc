//! Random programs in the supported subset, each with a ground-truth oracle
//! computed while the text is written: statement count and data-flow edges
//! keyed by the objects' source spans.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Oracle, Origin, Script};
use crate::interp::ObjectKey;
use crate::syntax::Span;

/// Pattern for a right-hand side. `V` picks one of the names.
#[derive(Debug)]
enum P {
    V(&'static [&'static str]),
    N(&'static str),
    B(&'static P, &'static str, &'static P),
    Cmp(&'static P, &'static str, &'static P),
    C(&'static str, &'static [P]),
    L(&'static [P]),
    I(&'static P, &'static str),
}

use P::*;

struct Loop {
    seq: &'static str,
    item: &'static str,
    acc: &'static str,
}

struct Def {
    name: &'static str,
    params: &'static [&'static str],
    /// Index into the theme's formulas computed in the body and returned.
    formula: usize,
}

struct Theme {
    formulas: &'static [(&'static str, P)],
    loops: &'static [Loop],
    conds: &'static [P],
    defs: &'static [Def],
    /// Variable decremented by `while` loops and the amount it drops by.
    countdown: (&'static str, &'static str),
    /// Functions called for their effect on one of the theme's values.
    sinks: &'static [&'static str],
}

const TEMPERATURE: Theme = Theme {
    formulas: &[
        ("fahrenheit", B(&B(&V(&["celsius", "temperature"]), "*", &N("1.8")), "+", &N("32"))),
        ("kelvin", B(&V(&["celsius"]), "+", &N("273.15"))),
        ("celsius", B(&V(&["kelvin"]), "-", &N("273.15"))),
        ("reading", C("read_sensor", &[V(&["sensor", "probe"])])),
        ("readings", L(&[V(&["reading", "celsius"]), V(&["temperature", "reading"]), N("21.5")])),
        ("temperature", I(&V(&["readings"]), "0")),
        ("is_hot", Cmp(&V(&["temperature", "celsius"]), ">", &N("30"))),
        ("average_temp", B(&C("sum", &[V(&["readings"])]), "/", &C("len", &[V(&["readings"])]))),
    ],
    loops: &[Loop { seq: "readings", item: "reading", acc: "total_temp" }],
    conds: &[Cmp(&V(&["temperature", "celsius"]), ">", &N("30")), Cmp(&V(&["fahrenheit"]), "<", &N("50"))],
    defs: &[
        Def { name: "to_fahrenheit", params: &["celsius"], formula: 0 },
        Def { name: "to_kelvin", params: &["celsius"], formula: 1 },
    ],
    countdown: ("temperature", "0.5"),
    sinks: &["show_temperature", "log_reading"],
};

const LENGTH: Theme = Theme {
    formulas: &[
        ("feet", B(&V(&["meters", "distance"]), "*", &N("3.28"))),
        ("inches", B(&V(&["feet"]), "*", &N("12"))),
        ("meters", B(&V(&["feet", "inches"]), "/", &N("3.28"))),
        ("area", B(&V(&["width", "length"]), "*", &V(&["height", "width"]))),
        ("perimeter", B(&B(&V(&["width"]), "*", &N("2")), "+", &B(&V(&["height"]), "*", &N("2")))),
        ("distance", C("measure", &[V(&["start_point"]), V(&["end_point"])])),
        ("sides", L(&[V(&["width", "length"]), V(&["height"]), V(&["depth"])])),
        ("longest", C("max", &[V(&["sides"])])),
    ],
    loops: &[Loop { seq: "sides", item: "side", acc: "total_length" }],
    conds: &[Cmp(&V(&["width", "length"]), ">", &V(&["height"])), Cmp(&V(&["area"]), ">", &N("100"))],
    defs: &[
        Def { name: "to_feet", params: &["meters"], formula: 0 },
        Def { name: "compute_area", params: &["width", "height"], formula: 3 },
    ],
    countdown: ("distance", "10"),
    sinks: &["draw_length", "log_size"],
};

const MONEY: Theme = Theme {
    formulas: &[
        ("total", B(&V(&["price"]), "*", &V(&["quantity"]))),
        ("tax", B(&V(&["total", "price"]), "*", &N("0.2"))),
        ("discount", B(&V(&["total"]), "*", &N("0.15"))),
        ("amount", B(&B(&V(&["total"]), "+", &V(&["tax"])), "-", &V(&["discount"]))),
        ("balance", B(&V(&["balance", "deposit"]), "-", &V(&["amount", "payment"]))),
        ("price", C("lookup_price", &[V(&["item", "product"])])),
        ("prices", L(&[V(&["price"]), V(&["amount", "total"]), N("9.99")])),
        ("cheapest", C("min", &[V(&["prices"])])),
    ],
    loops: &[Loop { seq: "prices", item: "price", acc: "total_cost" }],
    conds: &[Cmp(&V(&["balance"]), "<", &V(&["amount"])), Cmp(&V(&["total", "price"]), ">", &N("100"))],
    defs: &[
        Def { name: "apply_tax", params: &["total"], formula: 1 },
        Def { name: "compute_total", params: &["price", "quantity"], formula: 0 },
    ],
    countdown: ("balance", "payment"),
    sinks: &["print_receipt", "log_payment"],
};

const THEMES: [&Theme; 3] = [&TEMPERATURE, &LENGTH, &MONEY];
const RETURN_SLOT: &str = crate::interp::RETURN_SLOT;

#[derive(Debug, Clone)]
enum Kind {
    Name(String),
    Lit(String),
    Bin(Box<Expr>, &'static str, Box<Expr>),
    Call(String, Vec<Expr>),
    List(Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone)]
struct Expr {
    kind: Kind,
    span: Span,
}

impl Expr {
    fn new(kind: Kind) -> Self {
        Expr { kind, span: Span::new(0, 0) }
    }
}

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        Kind::Bin(_, op, _) => op_prec(op),
        _ => 9,
    }
}

fn op_prec(op: &str) -> u8 {
    match op {
        "<" | ">" | "<=" | ">=" | "==" | "!=" => 1,
        "+" | "-" => 2,
        _ => 3,
    }
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    out: String,
    indent: usize,
    scopes: Vec<HashMap<String, ObjectKey>>,
    edges: Vec<(ObjectKey, ObjectKey)>,
    statements: usize,
    themes: Vec<&'static Theme>,
    defined: Vec<(&'static Theme, usize)>,
    last_end: usize,
}

impl Gen<'_> {
    fn bound(&self, name: &str) -> Option<&ObjectKey> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn store(&mut self, name: &str, key: ObjectKey) {
        self.scopes.last_mut().expect("a scope").insert(name.to_string(), key);
    }

    fn flow(&mut self, args: &[ObjectKey], result: &ObjectKey) {
        for a in args {
            self.edges.push((a.clone(), result.clone()));
        }
    }

    fn pick_name(&mut self, names: &[&'static str]) -> String {
        let bound: Vec<&str> = names.iter().copied().filter(|n| self.bound(n).is_some()).collect();
        let name = if !bound.is_empty() && self.rng.random_bool(0.85) {
            bound.choose(self.rng).copied()
        } else {
            names.choose(self.rng).copied()
        };
        name.expect("non-empty name list").to_string()
    }

    fn instantiate(&mut self, p: &P) -> Expr {
        Expr::new(match p {
            V(names) => Kind::Name(self.pick_name(names)),
            N(n) => Kind::Lit(n.to_string()),
            B(l, op, r) | Cmp(l, op, r) => Kind::Bin(Box::new(self.instantiate(l)), op, Box::new(self.instantiate(r))),
            C(f, args) => Kind::Call(f.to_string(), args.iter().map(|a| self.instantiate(a)).collect()),
            L(items) => Kind::List(items.iter().map(|a| self.instantiate(a)).collect()),
            I(base, idx) => Kind::Index(Box::new(self.instantiate(base)), Box::new(Expr::new(Kind::Lit(idx.to_string())))),
        })
    }

    fn write(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn pos(&self) -> usize {
        self.out.len()
    }

    fn render(&mut self, e: &mut Expr) {
        let start = self.pos();
        match &mut e.kind {
            Kind::Name(n) | Kind::Lit(n) => {
                let n = n.clone();
                self.write(&n);
            }
            Kind::Bin(l, op, r) => {
                debug_assert!(prec(l) >= op_prec(op) && prec(r) > op_prec(op));
                self.render(l);
                self.write(&format!(" {op} "));
                self.render(r);
            }
            Kind::Call(f, args) => {
                let f = f.clone();
                self.write(&f);
                self.write("(");
                for (i, a) in args.iter_mut().enumerate() {
                    if i > 0 {
                        self.write(", ");
                    }
                    self.render(a);
                }
                self.write(")");
            }
            Kind::List(items) => {
                self.write("[");
                for (i, a) in items.iter_mut().enumerate() {
                    if i > 0 {
                        self.write(", ");
                    }
                    self.render(a);
                }
                self.write("]");
            }
            Kind::Index(base, idx) => {
                self.render(base);
                self.write("[");
                self.render(idx);
                self.write("]");
            }
        }
        e.span = Span::new(start, self.pos());
    }

    /// Object key the expression evaluates to, recording its edges.
    fn eval(&mut self, e: &Expr) -> ObjectKey {
        match &e.kind {
            Kind::Name(n) => match self.bound(n) {
                Some(k) => k.clone(),
                None => {
                    let k = ObjectKey::new(e.span, "value");
                    self.store(n, k.clone());
                    k
                }
            },
            Kind::Lit(_) => ObjectKey::new(e.span, "value"),
            Kind::Bin(l, op, r) => {
                let args = [self.eval(l), self.eval(r)];
                let k = ObjectKey::new(e.span, *op);
                self.flow(&args, &k);
                k
            }
            Kind::Call(_, args) => {
                let args: Vec<_> = args.iter().map(|a| self.eval(a)).collect();
                let k = ObjectKey::new(e.span, "call");
                self.flow(&args, &k);
                k
            }
            Kind::List(items) => {
                let args: Vec<_> = items.iter().map(|a| self.eval(a)).collect();
                let k = ObjectKey::new(e.span, "__list_of__");
                self.flow(&args, &k);
                k
            }
            Kind::Index(base, idx) => {
                let args = [self.eval(base), self.eval(idx)];
                let k = ObjectKey::new(e.span, "__subscript__");
                self.flow(&args, &k);
                k
            }
        }
    }

    fn line_start(&mut self) -> usize {
        if !self.out.is_empty() && !self.out.ends_with('\n') {
            self.out.push('\n');
        }
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.statements += 1;
        self.pos()
    }

    fn finish_line(&mut self) {
        self.last_end = self.pos();
        self.out.push('\n');
    }

    fn theme(&mut self) -> &'static Theme {
        self.themes.choose(self.rng).copied().expect("themes")
    }

    fn assign(&mut self, name: &str, mut value: Expr) {
        self.line_start();
        let start = self.pos();
        self.write(name);
        let _ = start;
        self.write(" = ");
        self.render(&mut value);
        let k = self.eval(&value);
        self.store(name, k);
        self.finish_line();
    }

    fn formula(&mut self) {
        let theme = self.theme();
        let use_def = !self.defined.is_empty() && self.rng.random_bool(0.2);
        if use_def {
            let (t, d) = *self.defined.choose(self.rng).expect("non-empty");
            let def = &t.defs[d];
            let args = def.params.iter().map(|p| Expr::new(Kind::Name(self.pick_name(&[p])))).collect();
            let lhs = t.formulas[def.formula].0;
            self.assign(lhs, Expr::new(Kind::Call(def.name.to_string(), args)));
            return;
        }
        let (lhs, p) = theme.formulas.choose(self.rng).expect("formulas");
        let value = self.instantiate(p);
        self.assign(lhs, value);
    }

    fn aug(&mut self, name: &str, op: &'static str, mut value: Expr) {
        let start = self.line_start();
        self.write(name);
        let target = Expr { kind: Kind::Name(name.to_string()), span: Span::new(start, self.pos()) };
        self.write(&format!(" {op} "));
        self.render(&mut value);
        let cur = self.eval(&target);
        let val = self.eval(&value);
        let k = ObjectKey::new(Span::new(start, self.pos()), op);
        self.flow(&[cur, val], &k);
        self.store(name, k);
        self.finish_line();
    }

    fn sink(&mut self) {
        let theme = self.theme();
        let names: Vec<&'static str> = theme.formulas.iter().map(|f| f.0).collect();
        let arg = self.pick_name(&names);
        let f = theme.sinks.choose(self.rng).expect("sinks").to_string();
        self.line_start();
        let mut e = Expr::new(Kind::Call(f, vec![Expr::new(Kind::Name(arg))]));
        self.render(&mut e);
        self.eval(&e);
        self.finish_line();
    }

    fn simple(&mut self) {
        match self.rng.random_range(0..10) {
            0 | 1 => self.sink(),
            _ => self.formula(),
        }
    }

    fn block(&mut self, budget: usize, depth: usize) -> usize {
        self.indent += 1;
        let n = self.rng.random_range(1..=budget.clamp(1, 3));
        let before = self.statements;
        while self.statements - before < n {
            let left = n - (self.statements - before);
            self.statement(left, depth);
        }
        self.indent -= 1;
        self.statements - before
    }

    /// Indents a clause header such as `else:`; not a statement of its own.
    fn clause_start(&mut self) -> usize {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.pos()
    }

    fn condition(&mut self) -> Expr {
        let theme = self.theme();
        let p = theme.conds.choose(self.rng).expect("conds");
        self.instantiate(p)
    }

    fn if_stmt(&mut self, budget: usize, depth: usize) {
        let start = self.line_start();
        self.write("if ");
        let mut cond = self.condition();
        self.render(&mut cond);
        self.write(":");
        let c = self.eval(&cond);
        let used = self.block(budget.saturating_sub(1), depth + 1);
        if budget > used + 2 && self.rng.random_bool(0.4) {
            let else_start = self.clause_start();
            self.write("else:");
            self.block(budget - used - 1, depth + 1);
            let ctx_else = ObjectKey::new(Span::new(else_start, self.last_end), "__else__");
            self.flow(std::slice::from_ref(&c), &ctx_else);
        }
        self.flow(&[c], &ObjectKey::new(Span::new(start, self.last_end), "__if__"));
    }

    fn while_stmt(&mut self, budget: usize, depth: usize) {
        let theme = self.theme();
        let (var, step) = theme.countdown;
        if self.bound(var).is_none() {
            self.formula_for(theme, var);
        }
        let start = self.line_start();
        self.write("while ");
        let mut cond = Expr::new(Kind::Bin(Box::new(Expr::new(Kind::Name(var.to_string()))), ">", Box::new(Expr::new(Kind::Lit("0".into())))));
        self.render(&mut cond);
        self.write(":");
        let c = self.eval(&cond);
        self.indent += 1;
        let step_expr = if step.chars().next().is_some_and(|ch| ch.is_ascii_digit()) {
            Kind::Lit(step.to_string())
        } else {
            Kind::Name(step.to_string())
        };
        self.aug(var, "-=", Expr::new(step_expr));
        self.indent -= 1;
        if budget > 2 {
            self.indent += 1;
            let mut left = budget - 2;
            while left > 0 && self.rng.random_bool(0.5) {
                let before = self.statements;
                self.statement(left.min(2), depth + 1);
                left = left.saturating_sub(self.statements - before);
            }
            self.indent -= 1;
        }
        self.flow(&[c], &ObjectKey::new(Span::new(start, self.last_end), "__while__"));
    }

    /// Assigns `name` with its own formula when the theme has one.
    fn formula_for(&mut self, theme: &'static Theme, name: &str) {
        match theme.formulas.iter().find(|f| f.0 == name) {
            Some((lhs, p)) => {
                let value = self.instantiate(p);
                self.assign(lhs, value);
            }
            None => self.assign(name, Expr::new(Kind::Lit("100".into()))),
        }
    }

    fn for_stmt(&mut self, budget: usize, depth: usize) {
        let theme = self.theme();
        let lp = theme.loops.choose(self.rng).expect("loops");
        if self.bound(lp.seq).is_none() {
            self.formula_for(theme, lp.seq);
        }
        if self.bound(lp.acc).is_none() {
            self.assign(lp.acc, Expr::new(Kind::Lit("0".into())));
        }
        let start = self.line_start();
        self.write("for ");
        let t_start = self.pos();
        self.write(lp.item);
        let target_span = Span::new(t_start, self.pos());
        self.write(" in ");
        let mut iter = Expr::new(Kind::Name(lp.seq.to_string()));
        self.render(&mut iter);
        self.write(":");
        let it = self.eval(&iter);
        self.store(lp.item, it.clone());
        self.indent += 1;
        self.aug(lp.acc, "+=", Expr::new(Kind::Name(lp.item.to_string())));
        self.indent -= 1;
        if budget > 2 {
            self.indent += 1;
            self.statement((budget - 2).min(2), depth + 1);
            self.indent -= 1;
        }
        self.flow(&[it], &ObjectKey::new(Span::new(start, self.last_end), "__for_in__"));
        let cur = self.bound(lp.item).expect("loop target bound").clone();
        let end = ObjectKey::new(target_span, "__end_for_iterator__");
        self.flow(&[cur], &end);
        self.store(lp.item, end);
    }

    fn def_stmt(&mut self, budget: usize) {
        let theme = self.theme();
        let d = self.rng.random_range(0..theme.defs.len());
        let def = &theme.defs[d];
        let start = self.line_start();
        self.write(&format!("def {}(", def.name));
        self.scopes.push(HashMap::new());
        let mut before = Vec::new();
        for (i, p) in def.params.iter().enumerate() {
            if i > 0 {
                self.write(", ");
            }
            let s = self.pos();
            self.write(p);
            let k = ObjectKey::new(Span::new(s, self.pos()), "param");
            self.store(p, k.clone());
            before.push(k);
        }
        self.write("):");
        self.indent += 1;
        let body_start = self.out.len() + 1 + 4 * self.indent;
        let extra = budget.saturating_sub(3).min(2);
        for _ in 0..self.rng.random_range(0..=extra) {
            self.simple_in(theme);
        }
        let (lhs, p) = &theme.formulas[def.formula];
        let value = self.instantiate(p);
        self.assign(lhs, value);
        self.line_start();
        self.write("return ");
        let mut ret = Expr::new(Kind::Name(lhs.to_string()));
        self.render(&mut ret);
        let r = self.eval(&ret);
        self.store(RETURN_SLOT, r.clone());
        self.finish_line();
        self.indent -= 1;
        let body_span = Span::new(body_start, self.last_end);
        let after: Vec<ObjectKey> = def.params.iter().map(|p| self.bound(p).expect("param bound").clone()).collect();
        self.scopes.pop();
        let mut sig = vec![ObjectKey::new(body_span, "function")];
        sig.extend(before);
        sig.push(r);
        sig.extend(after);
        let theta = ObjectKey::new(Span::new(start, self.last_end), "__compile_function__");
        self.flow(&sig, &theta);
        self.store(def.name, theta);
        if !self.defined.iter().any(|&(t, i)| std::ptr::eq(t, theme) && i == d) {
            self.defined.push((theme, d));
        }
    }

    fn simple_in(&mut self, theme: &'static Theme) {
        let (lhs, p) = theme.formulas.choose(self.rng).expect("formulas");
        let value = self.instantiate(p);
        self.assign(lhs, value);
    }

    fn statement(&mut self, budget: usize, depth: usize) {
        let roll = self.rng.random_range(0..20);
        match roll {
            0..=1 if budget >= 2 && depth < 2 => self.if_stmt(budget, depth),
            2 if budget >= 2 && depth < 2 => self.for_stmt(budget, depth),
            3 if budget >= 2 && depth < 2 => self.while_stmt(budget, depth),
            4 if budget >= 3 && depth == 0 => self.def_stmt(budget),
            _ => self.simple(),
        }
    }
}

/// Writes one program of about `statements` statements using two themes.
fn program(rng: &mut ChaCha8Rng, statements: usize) -> (String, Vec<(ObjectKey, ObjectKey)>, usize) {
    let mut themes: Vec<&'static Theme> = THEMES.to_vec();
    let drop = rng.random_range(0..themes.len());
    themes.remove(drop);
    let mut g = Gen {
        rng,
        out: String::new(),
        indent: 0,
        scopes: vec![HashMap::new()],
        edges: Vec::new(),
        statements: 0,
        themes,
        defined: Vec::new(),
        last_end: 0,
    };
    while g.statements < statements {
        let left = statements - g.statements;
        g.statement(left.min(6), 0);
    }
    let mut edges = g.edges;
    edges.sort();
    (g.out, edges, g.statements)
}

/// `n` programs whose statement counts fall roughly in `statements`
/// (compound statements can overshoot the upper end by a few).
pub fn synthesize(seed: u64, n: usize, statements: (usize, usize)) -> Vec<Script> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (statements.0.max(1), statements.1.max(statements.0.max(1)));
    (0..n)
        .map(|_| {
            let size = rng.random_range(lo..=hi);
            let (code, dfg_edges, statement_count) = program(&mut rng, size);
            let mut script = Script::new(code, Origin::Synthetic);
            script.oracle = Some(Oracle { dfg_edges, statement_count, misuse: None });
            script
        })
        .collect()
}
