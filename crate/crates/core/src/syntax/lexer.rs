//! Python lexical analysis with indentation tracking.

use super::ast::Span;
use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Name,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tok {
    pub kind: TokKind,
    pub span: Span,
}

pub(crate) const OPERATORS: [&str; 49] = [
    "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "<>",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", ":=", "+", "-", "*", "/", "%", "@", "&",
    "|", "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=", "`",
];

pub fn is_name_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

pub fn is_name_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Splits `src` into tokens. Comments and blank lines are dropped; logical
/// newlines and indentation changes are explicit tokens.
pub fn lex(src: &str) -> Result<Vec<Tok>, SyntaxError> {
    Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        toks: Vec::new(),
        indents: vec![0],
        depth: 0,
    }
    .run()
}

/// Comments found in `src`, as byte spans (including the `#`).
pub fn comment_spans(src: &str) -> Vec<Span> {
    // Reuses the scanner's string handling so `#` inside literals is skipped.
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'#' => {
                let start = i;
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                out.push(Span::new(start, i));
            }
            b'"' | b'\'' => {
                i = skip_string_body(bytes, i).unwrap_or(bytes.len());
            }
            _ => i += 1,
        }
    }
    out
}

/// Given `i` at an opening quote, returns the offset just past the closing
/// quote, or `None` when unterminated.
fn skip_string_body(bytes: &[u8], i: usize) -> Option<usize> {
    let q = bytes[i];
    let triple = bytes.len() >= i + 3 && bytes[i + 1] == q && bytes[i + 2] == q;
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < bytes.len() {
        let c = bytes[j];
        if c == b'\\' {
            j += 2;
            continue;
        }
        if triple {
            if c == q
                && j + 2 < bytes.len()
                && bytes.get(j + 1) == Some(&q)
                && bytes.get(j + 2) == Some(&q)
            {
                return Some(j + 3);
            }
        } else if c == q {
            return Some(j + 1);
        } else if c == b'\n' {
            return None;
        }
        j += 1;
    }
    None
}

struct Lexer<'s> {
    src: &'s str,
    bytes: &'s [u8],
    pos: usize,
    toks: Vec<Tok>,
    indents: Vec<usize>,
    depth: usize,
}

impl<'s> Lexer<'s> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> SyntaxError {
        SyntaxError::at(self.src, offset, msg)
    }

    fn push(&mut self, kind: TokKind, start: usize, end: usize) {
        self.toks.push(Tok {
            kind,
            span: Span::new(start, end),
        });
    }

    fn run(mut self) -> Result<Vec<Tok>, SyntaxError> {
        let mut at_line_start = true;
        while self.pos < self.bytes.len() {
            if at_line_start && self.depth == 0 {
                at_line_start = false;
                if self.indentation()? {
                    continue;
                }
            }
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\x0c' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b'\\' => {
                    // explicit line joining
                    let mut j = self.pos + 1;
                    if j < self.bytes.len() && self.bytes[j] == b'\r' {
                        j += 1;
                    }
                    if j < self.bytes.len() && self.bytes[j] == b'\n' {
                        self.pos = j + 1;
                    } else if j >= self.bytes.len() {
                        self.pos = j;
                    } else {
                        return Err(
                            self.err(self.pos, "unexpected character after line continuation")
                        );
                    }
                }
                b'\n' => {
                    if self.depth == 0 {
                        let last_is_content = matches!(
                            self.toks.last().map(|t| t.kind),
                            Some(TokKind::Name | TokKind::Number | TokKind::Str | TokKind::Op)
                        );
                        if last_is_content {
                            self.push(TokKind::Newline, self.pos, self.pos);
                        }
                        at_line_start = true;
                    }
                    self.pos += 1;
                }
                b'0'..=b'9' => self.number()?,
                b'.' if self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_digit) => {
                    self.number()?
                }
                b'"' | b'\'' => self.string(self.pos)?,
                _ => {
                    let ch = self.src[self.pos..].chars().next().unwrap();
                    if is_name_start(ch) {
                        self.name_or_prefixed_string()?;
                    } else {
                        self.operator()?;
                    }
                }
            }
        }
        if self.depth > 0 {
            return Err(self.err(self.bytes.len(), "unexpected end of input inside brackets"));
        }
        let end = self.bytes.len();
        if matches!(
            self.toks.last().map(|t| t.kind),
            Some(TokKind::Name | TokKind::Number | TokKind::Str | TokKind::Op)
        ) {
            self.push(TokKind::Newline, end, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokKind::Dedent, end, end);
        }
        self.push(TokKind::End, end, end);
        Ok(self.toks)
    }

    /// Measures leading whitespace of a physical line. Returns true when the
    /// line was blank or comment-only (already consumed).
    fn indentation(&mut self) -> Result<bool, SyntaxError> {
        let mut col = 0usize;
        let mut i = self.pos;
        while i < self.bytes.len() {
            match self.bytes[i] {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            i += 1;
        }
        if i >= self.bytes.len() {
            self.pos = i;
            return Ok(true);
        }
        match self.bytes[i] {
            b'\n' | b'\r' | b'#' => {
                // blank or comment line: skip to end of line
                while i < self.bytes.len() && self.bytes[i] != b'\n' {
                    i += 1;
                }
                self.pos = (i + 1).min(self.bytes.len());
                return Ok(true);
            }
            b'\\' => {
                self.pos = i;
                return Ok(false);
            }
            _ => {}
        }
        let current = *self.indents.last().unwrap();
        if col > current {
            self.indents.push(col);
            self.push(TokKind::Indent, i, i);
        } else if col < current {
            while col < *self.indents.last().unwrap() {
                self.indents.pop();
                self.push(TokKind::Dedent, i, i);
            }
            if col != *self.indents.last().unwrap() {
                return Err(self.err(i, "unindent does not match any outer indentation level"));
            }
        }
        self.pos = i;
        Ok(false)
    }

    fn number(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let b = self.bytes;
        let mut i = self.pos;
        if b[i] == b'0'
            && i + 1 < b.len()
            && matches!(b[i + 1], b'x' | b'X' | b'o' | b'O' | b'b' | b'B')
        {
            i += 2;
            while i < b.len() && (b[i].is_ascii_hexdigit() || b[i] == b'_') {
                i += 1;
            }
        } else {
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                i += 1;
            }
            if i < b.len() && b[i] == b'.' {
                i += 1;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                    i += 1;
                }
            }
            if i < b.len() && matches!(b[i], b'e' | b'E') {
                let mut j = i + 1;
                if j < b.len() && matches!(b[j], b'+' | b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                        i += 1;
                    }
                }
            }
        }
        if i < b.len() && matches!(b[i], b'j' | b'J' | b'l' | b'L') {
            i += 1;
        }
        if i < b.len() && self.src[i..].chars().next().is_some_and(is_name_char) {
            return Err(self.err(i, "invalid numeric literal"));
        }
        self.pos = i;
        self.push(TokKind::Number, start, i);
        Ok(())
    }

    fn string(&mut self, start: usize) -> Result<(), SyntaxError> {
        match skip_string_body(self.bytes, self.pos) {
            Some(end) => {
                self.pos = end;
                self.push(TokKind::Str, start, end);
                Ok(())
            }
            None => Err(self.err(start, "unterminated string literal")),
        }
    }

    fn name_or_prefixed_string(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let mut end = start;
        for (off, ch) in self.src[start..].char_indices() {
            if !is_name_char(ch) {
                break;
            }
            end = start + off + ch.len_utf8();
        }
        let word = &self.src[start..end];
        let is_prefix = word.len() <= 2
            && word
                .chars()
                .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
            && matches!(self.bytes.get(end), Some(b'"' | b'\''));
        if is_prefix {
            self.pos = end;
            return self.string(start);
        }
        self.pos = end;
        self.push(TokKind::Name, start, end);
        Ok(())
    }

    fn operator(&mut self) -> Result<(), SyntaxError> {
        let rest = &self.src[self.pos..];
        for op in OPERATORS {
            if rest.starts_with(op) {
                let start = self.pos;
                self.pos += op.len();
                match op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => {
                        if self.depth == 0 {
                            return Err(self.err(start, format!("unmatched '{op}'")));
                        }
                        self.depth -= 1;
                    }
                    _ => {}
                }
                self.push(TokKind::Op, start, self.pos);
                return Ok(());
            }
        }
        let ch = rest.chars().next().unwrap();
        Err(self.err(self.pos, format!("unexpected character {ch:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokKind, String)> {
        lex(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, src[t.span.start..t.span.end].to_string()))
            .collect()
    }

    #[test]
    fn indentation_tokens() {
        let toks = kinds("if a:\n    b = 1\nc\n");
        let k: Vec<TokKind> = toks.iter().map(|t| t.0).collect();
        use TokKind::*;
        assert_eq!(
            k,
            vec![
                Name, Name, Op, Newline, Indent, Name, Op, Number, Newline, Dedent, Name, Newline,
                End
            ]
        );
    }

    #[test]
    fn brackets_join_lines() {
        let toks = kinds("x = [1,\n  2]\n");
        assert!(!toks[..toks.len() - 2]
            .iter()
            .any(|t| t.0 == TokKind::Newline));
    }

    #[test]
    fn strings_and_prefixes() {
        let toks = kinds("s = r'a\\'b' + \"\"\"x\ny\"\"\" + f\"{z}\"\n");
        let strs: Vec<_> = toks
            .iter()
            .filter(|t| t.0 == TokKind::Str)
            .map(|t| t.1.clone())
            .collect();
        assert_eq!(strs, vec!["r'a\\'b'", "\"\"\"x\ny\"\"\"", "f\"{z}\""]);
    }

    #[test]
    fn numbers() {
        let toks = kinds("a = 1.8 + 0x1F + 1e-3 + .5 + 3j\n");
        let nums: Vec<_> = toks
            .iter()
            .filter(|t| t.0 == TokKind::Number)
            .map(|t| t.1.clone())
            .collect();
        assert_eq!(nums, vec!["1.8", "0x1F", "1e-3", ".5", "3j"]);
    }

    #[test]
    fn comments_are_skipped_but_reported() {
        let src = "x = 1  # note\n# whole line\ny = '#no'\n";
        let toks = kinds(src);
        assert!(toks.iter().all(|t| !t.1.contains("note")));
        let comments = comment_spans(src);
        assert_eq!(comments.len(), 2);
        assert_eq!(&src[comments[0].start..comments[0].end], "# note");
    }

    #[test]
    fn bad_dedent_is_an_error() {
        assert!(lex("if a:\n    b\n  c\n").is_err());
    }

    #[test]
    fn unterminated_string() {
        assert!(lex("x = 'abc\n").is_err());
    }
}
