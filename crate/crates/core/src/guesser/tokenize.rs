//! Source tokenization for the guesser. Identifiers, string contents and
//! comments are split into lowercase word pieces that keep the span of the
//! construct they came from, so pooling over a node's span picks them up.

use crate::syntax::lexer::{is_name_char, is_name_start, OPERATORS};
use crate::syntax::Span;

pub const DEFAULT_MAX_TOKENS: usize = 512;

/// Marker token opening every string literal.
pub const STRING_MARKER: &str = "\"";
/// Marker token opening every comment.
pub const COMMENT_MARKER: &str = "#";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Span,
}

/// Splits an identifier on underscores and case changes, lowercasing the
/// pieces. Digits stay attached to the preceding piece.
pub fn split_identifier(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if c.is_uppercase() && !cur.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if out.is_empty() && !name.is_empty() {
        out.push(name.to_string());
    }
    out
}

/// Word pieces of free text (string contents, comments).
fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_name_char(c) {
            cur.push(c);
        } else if !cur.is_empty() {
            out.extend(split_identifier(&cur));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.extend(split_identifier(&cur));
    }
    out
}

fn push_all(out: &mut Vec<Token>, pieces: impl IntoIterator<Item = String>, span: Span) {
    out.extend(pieces.into_iter().map(|text| Token { text, span }));
}

/// End of the string literal whose opening quote is at `q`.
fn string_end(bytes: &[u8], q: usize) -> usize {
    let quote = bytes[q];
    let triple = bytes.len() >= q + 3 && bytes[q + 1] == quote && bytes[q + 2] == quote;
    let mut i = if triple { q + 3 } else { q + 1 };
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' if !triple => return i,
            c if c == quote => {
                if !triple {
                    return i + 1;
                }
                if bytes.len() >= i + 3 && bytes[i + 1] == quote && bytes[i + 2] == quote {
                    return i + 3;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    bytes.len()
}

/// Tokenizes `src`, keeping at most `max_tokens` tokens. Never fails:
/// unrecognized characters become single-character tokens.
pub fn tokenize(src: &str, max_tokens: usize) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() && out.len() < max_tokens {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() || c == '\\' {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            let end = src[i..].find('\n').map_or(src.len(), |n| i + n);
            let span = Span::new(i, end);
            out.push(Token { text: COMMENT_MARKER.into(), span });
            push_all(&mut out, words(&src[i + 1..end]), span);
            i = end;
            continue;
        }
        if is_name_start(c) {
            let mut j = i;
            for ch in src[i..].chars() {
                if !is_name_char(ch) {
                    break;
                }
                j += ch.len_utf8();
            }
            let word = &src[i..j];
            let is_prefix = word.len() <= 3 && word.chars().all(|ch| "rRbBuUfF".contains(ch));
            if is_prefix && j < bytes.len() && (bytes[j] == b'"' || bytes[j] == b'\'') {
                let end = string_end(bytes, j);
                let span = Span::new(i, end);
                out.push(Token { text: STRING_MARKER.into(), span });
                push_all(&mut out, words(&src[j..end]), span);
                i = end;
                continue;
            }
            push_all(&mut out, split_identifier(word), Span::new(i, j));
            i = j;
            continue;
        }
        if c == '"' || c == '\'' {
            let end = string_end(bytes, i);
            let span = Span::new(i, end);
            out.push(Token { text: STRING_MARKER.into(), span });
            push_all(&mut out, words(&src[i..end]), span);
            i = end;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut j = i;
            while j < bytes.len() {
                let b = bytes[j];
                let exponent_sign = (b == b'+' || b == b'-') && matches!(bytes[j - 1], b'e' | b'E') && !src[i..j].starts_with("0x");
                if !(b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exponent_sign) {
                    break;
                }
                j += 1;
            }
            out.push(Token { text: src[i..j].to_string(), span: Span::new(i, j) });
            i = j;
            continue;
        }
        let op = OPERATORS.iter().find(|op| src[i..].starts_with(**op));
        let len = op.map_or(c.len_utf8(), |op| op.len());
        out.push(Token { text: src[i..i + len].to_string(), span: Span::new(i, i + len) });
        i += len;
    }
    out.truncate(max_tokens);
    out
}

/// Index range of the tokens whose spans lie inside `span`.
pub fn tokens_within(tokens: &[Token], span: Span) -> Vec<usize> {
    let first = tokens.partition_point(|t| t.span.start < span.start);
    tokens[first..]
        .iter()
        .enumerate()
        .take_while(|(_, t)| t.span.start < span.end || (span.is_empty() && t.span.start == span.start))
        .filter(|(_, t)| span.contains(&t.span))
        .map(|(k, _)| first + k)
        .collect()
}
