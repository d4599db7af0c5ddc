use std::fmt::{self, Write as _};

use serde::Serialize;

use super::object::{FunctionKind, ObjectId};

/// One executed step. `Guess`, `Store`, `Lookup` and `Lambda` are the four
/// instructions; the rest are structural markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum TraceEvent {
    Guess { obj: ObjectId, kind: String, text: String },
    Store { name: String, obj: ObjectId },
    Lookup { name: String, obj: ObjectId },
    Lambda { kind: FunctionKind, callee: String, contexts: usize, args: Vec<ObjectId>, result: ObjectId },
    PushCtx { node_id: u32, obj: ObjectId },
    PopCtx,
    PushScope { label: String },
    PopScope { label: String },
    Return { obj: ObjectId },
}

impl TraceEvent {
    pub fn opcode(&self) -> &'static str {
        match self {
            TraceEvent::Guess { .. } => "GUESS",
            TraceEvent::Store { .. } => "STORE",
            TraceEvent::Lookup { .. } => "LOOKUP",
            TraceEvent::Lambda { .. } => "LAMBDA",
            TraceEvent::PushCtx { .. } => "PUSH_CTX",
            TraceEvent::PopCtx => "POP_CTX",
            TraceEvent::PushScope { .. } => "PUSH_SCOPE",
            TraceEvent::PopScope { .. } => "POP_SCOPE",
            TraceEvent::Return { .. } => "RETURN",
        }
    }
}

const MAX_GUESS_TEXT: usize = 60;

/// Double-quoted, escaped, and shortened to a bounded length.
pub(crate) fn quote(text: &str) -> String {
    let mut out = String::from("\"");
    for (count, ch) in text.chars().enumerate() {
        if count == MAX_GUESS_TEXT {
            out.push_str("...");
            break;
        }
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t", self.opcode())?;
        match self {
            TraceEvent::Guess { obj, kind, text } => write!(f, "#{obj} {kind} {}", quote(text)),
            TraceEvent::Store { name, obj } | TraceEvent::Lookup { name, obj } => write!(f, "{} #{obj}", quote(name)),
            TraceEvent::Lambda { kind, callee, contexts, args, result } => {
                write!(f, "{} {} {contexts}", kind.label(), quote(callee))?;
                for a in args {
                    write!(f, " #{a}")?;
                }
                write!(f, " -> #{result}")
            }
            TraceEvent::PushCtx { node_id, obj } => write!(f, "{node_id} #{obj}"),
            TraceEvent::PopCtx => Ok(()),
            TraceEvent::PushScope { label } | TraceEvent::PopScope { label } => write!(f, "{}", quote(label)),
            TraceEvent::Return { obj } => write!(f, "#{obj}"),
        }
    }
}

/// The line-oriented text format: `<seq>\t<op>\t<operands>`, seq from 1.
pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for (i, e) in events.iter().enumerate() {
        writeln!(out, "{}\t{e}", i + 1).unwrap();
    }
    out
}

fn neural_name(callee: &str) -> String {
    let word = match callee {
        "+" => "add",
        "-" => "subtract",
        "*" => "multiply",
        "/" => "divide",
        "//" => "floor_divide",
        "%" => "modulo",
        "**" => "power",
        "==" => "equal",
        "!=" | "<>" => "not_equal",
        "<" => "less",
        "<=" => "less_equal",
        ">" => "greater",
        ">=" => "greater_equal",
        "and" | "or" | "not" | "in" | "is" => callee,
        _ => "",
    };
    if !word.is_empty() {
        return format!("neural_{word}");
    }
    let trimmed = callee.trim_matches('_');
    if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_alphanumeric() || c == '_') {
        format!("neural_{trimmed}")
    } else {
        format!("neural[{}]", quote(callee))
    }
}

/// Human-oriented rendering in the style of a straight-line program over
/// vectors. Control-flow contexts appear as indented `with` blocks.
pub fn format_pseudocode(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    let mut indent = 0usize;
    let pad = |n: usize| "    ".repeat(n);
    for e in events {
        let line = match e {
            TraceEvent::Guess { obj, text, .. } => format!("v{obj} = initialize_vector({})", quote(text)),
            TraceEvent::Store { name, obj } => format!("store_memory({}, v{obj})", quote(name)),
            TraceEvent::Lookup { name, obj } => format!("v{obj} = lookup_memory({})", quote(name)),
            TraceEvent::Lambda { kind, callee, args, result, .. } => {
                let args: Vec<String> = args.iter().map(|a| format!("v{a}")).collect();
                let f = match kind {
                    FunctionKind::Builtin => neural_name(callee),
                    _ => format!("neural[{}]", quote(callee)),
                };
                format!("v{result} = {f}({})", args.join(", "))
            }
            TraceEvent::PushCtx { obj, .. } => {
                let l = format!("{}with context(v{obj}):", pad(indent));
                indent += 1;
                writeln!(out, "{l}").unwrap();
                continue;
            }
            TraceEvent::PopCtx => {
                indent = indent.saturating_sub(1);
                continue;
            }
            TraceEvent::PushScope { label } => {
                let l = format!("{}# enter {label}", pad(indent));
                indent += 1;
                writeln!(out, "{l}").unwrap();
                continue;
            }
            TraceEvent::PopScope { label } => {
                indent = indent.saturating_sub(1);
                format!("# leave {label}")
            }
            TraceEvent::Return { obj } => format!("return v{obj}"),
        };
        writeln!(out, "{}{line}", pad(indent)).unwrap();
    }
    out
}
