//! Token-level view of a sentence.
//!
//! The lexer never fails: unterminated comments and strings simply run to
//! the end of the input. Structural errors are reported by the splitter,
//! which sees the whole file.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Symbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    /// Byte offset inside the lexed text.
    pub start: usize,
}

impl<'a> Token<'a> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }

    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }

    /// Components of a possibly qualified identifier (`M.N.x` -> `[M, N, x]`).
    pub fn components(&self) -> impl Iterator<Item = &'a str> {
        self.text.split('.')
    }
}

const MULTI_SYMBOLS: &[&str] = &[
    ":=", "=>", "<->", "->", "<-", "<=", ">=", "<>", "|-", "||", "&&", "::", "/\\", "\\/",
];

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Returns the byte offset just past a comment opened at `start`, or `None`
/// when the comment is not closed before the end of input.
pub(crate) fn comment_end(text: &str, start: usize) -> Option<usize> {
    let b = text.as_bytes();
    let mut depth = 1usize;
    let mut j = start + 2;
    while j < b.len() {
        if b[j] == b'(' && b.get(j + 1) == Some(&b'*') {
            depth += 1;
            j += 2;
        } else if b[j] == b'*' && b.get(j + 1) == Some(&b')') {
            depth -= 1;
            j += 2;
            if depth == 0 {
                return Some(j);
            }
        } else if b[j] == b'"' {
            j = string_end(text, j)?;
        } else {
            j += 1;
        }
    }
    None
}

/// Byte offset just past a string literal opened at `start`. Doubled quotes
/// are an escaped quote.
pub(crate) fn string_end(text: &str, start: usize) -> Option<usize> {
    let b = text.as_bytes();
    let mut j = start + 1;
    while j < b.len() {
        if b[j] == b'"' {
            if b.get(j + 1) == Some(&b'"') {
                j += 2;
            } else {
                return Some(j + 1);
            }
        } else {
            j += 1;
        }
    }
    None
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'(' && b.get(i + 1) == Some(&b'*') {
            i = comment_end(text, i).unwrap_or(b.len());
            continue;
        }
        if c == b'"' {
            let end = string_end(text, i).unwrap_or(b.len());
            out.push(Token { kind: TokenKind::Str, text: &text[i..end], start: i });
            i = end;
            continue;
        }
        let ch = text[i..].chars().next().expect("in bounds");
        if is_ident_start(ch) {
            let mut j = i + ch.len_utf8();
            loop {
                let rest = &text[j..];
                match rest.chars().next() {
                    Some(n) if is_ident_continue(n) => j += n.len_utf8(),
                    Some('.') => match rest[1..].chars().next() {
                        Some(n) if is_ident_start(n) => j += 1,
                        _ => break,
                    },
                    _ => break,
                }
            }
            out.push(Token { kind: TokenKind::Ident, text: &text[i..j], start: i });
            i = j;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            out.push(Token { kind: TokenKind::Number, text: &text[i..j], start: i });
            i = j;
            continue;
        }
        let rest = &text[i..];
        let len = MULTI_SYMBOLS
            .iter()
            .find(|s| rest.starts_with(**s))
            .map_or(ch.len_utf8(), |s| s.len());
        out.push(Token { kind: TokenKind::Symbol, text: &text[i..i + len], start: i });
        i += len;
    }
    out
}

/// Index of the first token equal to `sym` outside any bracket pair.
pub fn find_top_level(tokens: &[Token<'_>], sym: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == TokenKind::Symbol {
            match t.text {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
        }
        if depth == 0 && t.is(sym) {
            return Some(i);
        }
    }
    None
}

/// Text with comments removed and whitespace runs collapsed.
pub fn strip_comments(text: &str) -> String {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'(' && b.get(i + 1) == Some(&b'*') {
            i = comment_end(text, i).unwrap_or(b.len());
            out.push(' ');
            continue;
        }
        if b[i] == b'"' {
            let end = string_end(text, i).unwrap_or(b.len());
            out.push_str(&text[i..end]);
            i = end;
            continue;
        }
        let ch = text[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}
