//! Reference scanning over uninterpreted terms.
//!
//! A term is a token sequence. The only thing checked about it is that every
//! identifier it mentions is either bound inside the term, bound by the
//! caller, or a global the environment can resolve.

use std::collections::HashSet;

use vermin_core::sentence_model::lexer::Token;

const TERM_KEYWORDS: &[&str] = &[
    "fun", "forall", "exists", "let", "in", "match", "with", "end", "as", "return", "if", "then", "else", "fix",
    "cofix", "struct", "Type", "Prop", "Set", "SProp", "_", "is", "where", "mut", "using",
];

/// One identifier occurrence that must resolve globally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub name: String,
    /// Byte offset inside the lexed text.
    pub start: usize,
    pub end: usize,
}

#[derive(Default)]
struct Group {
    in_type: bool,
}

/// Identifiers of `tokens` not bound by the term itself nor by `bound`.
pub fn free_refs(tokens: &[Token<'_>], bound: &HashSet<String>) -> Vec<Reference> {
    let mut locals: HashSet<String> = bound.clone();
    let mut out = Vec::new();
    let mut i = 0;
    // Depths at which a `match` awaits its `with` or is inside its branches.
    let mut matches: Vec<(i32, bool)> = Vec::new();
    let mut depth = 0i32;
    let mut in_pattern = false;
    // `binder_end` is the token that closes the current binder list.
    let mut binder_end: Option<(&str, i32)> = None;
    let mut groups: Vec<Group> = Vec::new();
    while i < tokens.len() {
        let t = tokens[i];
        match t.text {
            "(" | "{" | "[" | "{|" => {
                depth += 1;
                if binder_end.is_some() {
                    groups.push(Group::default());
                }
            }
            ")" | "}" | "]" | "|}" => {
                depth -= 1;
                if binder_end.is_some() {
                    groups.pop();
                }
            }
            _ => {}
        }
        if let Some((close, d)) = binder_end {
            if t.text == close && depth == d {
                binder_end = None;
                groups.clear();
            } else if t.is(":") && depth > d {
                if let Some(g) = groups.last_mut() {
                    g.in_type = true;
                }
            } else if t.is(":") && depth == d {
                // `forall x : T, ...`
                groups.push(Group { in_type: true });
            } else if t.is_ident() && !TERM_KEYWORDS.contains(&t.text) {
                if groups.last().is_some_and(|g| g.in_type) {
                    if !locals.contains(t.text) {
                        out.push(reference(&t));
                    }
                } else {
                    locals.insert(t.text.to_string());
                }
            }
            i += 1;
            continue;
        }
        if in_pattern {
            if t.is("=>") && matches.last().is_some_and(|&(d, _)| d == depth) {
                in_pattern = false;
            } else if t.is_ident() && !TERM_KEYWORDS.contains(&t.text) {
                // Capitalized pattern heads are taken to be constructors.
                if t.text.starts_with(|c: char| c.is_ascii_uppercase()) {
                    if !locals.contains(t.text) {
                        out.push(reference(&t));
                    }
                } else {
                    locals.insert(t.text.to_string());
                }
            }
            i += 1;
            continue;
        }
        match t.text {
            "fun" => binder_end = Some(("=>", depth)),
            "forall" | "exists" => binder_end = Some((",", depth)),
            "fix" | "cofix" => {
                if let Some(n) = tokens.get(i + 1).filter(|n| n.is_ident()) {
                    locals.insert(n.text.to_string());
                    i += 1;
                }
                binder_end = Some((":=", depth));
            }
            "let" => {
                let mut j = i + 1;
                while j < tokens.len() && !tokens[j].is(":=") {
                    if tokens[j].is_ident() {
                        locals.insert(tokens[j].text.to_string());
                    }
                    j += 1;
                }
                i = j;
            }
            "as" => {
                if let Some(n) = tokens.get(i + 1).filter(|n| n.is_ident()) {
                    locals.insert(n.text.to_string());
                    i += 1;
                }
            }
            "match" => matches.push((depth, false)),
            "with" if matches.last().is_some_and(|&(d, w)| d == depth && !w) => {
                if let Some(m) = matches.last_mut() {
                    m.1 = true;
                }
                in_pattern = true;
                if tokens.get(i + 1).is_some_and(|n| n.is("|")) {
                    i += 1;
                }
            }
            "|" if matches.last().is_some_and(|&(d, w)| d == depth && w) => in_pattern = true,
            "end" if matches.last().is_some_and(|&(d, _)| d == depth) => {
                matches.pop();
            }
            "%" => {
                // Scope delimiter: `1%nat`.
                i += 2;
                continue;
            }
            _ if t.is_ident() && !TERM_KEYWORDS.contains(&t.text) => {
                let field = tokens.get(i + 1).is_some_and(|n| n.is(":="));
                if !field && !locals.contains(t.text) {
                    out.push(reference(&t));
                }
            }
            _ => {}
        }
        i += 1;
    }
    out
}

fn reference(t: &Token<'_>) -> Reference {
    Reference { name: t.text.to_string(), start: t.start, end: t.end() }
}

/// Names bound by a binder list such as `(x y : T) {A} z`, and the free
/// references of the binder types.
pub fn binder_list(tokens: &[Token<'_>], bound: &HashSet<String>) -> (Vec<String>, Vec<Reference>) {
    let mut names = Vec::new();
    let mut refs = Vec::new();
    let mut locals = bound.clone();
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        if matches!(t.text, "(" | "{" | "[" | "`") {
            let start = if t.is("`") { i + 2 } else { i + 1 };
            let mut j = start;
            let mut depth = 1;
            let mut colon = None;
            while j < tokens.len() {
                match tokens[j].text {
                    "(" | "{" | "[" => depth += 1,
                    ")" | "}" | "]" => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    ":" if depth == 1 && colon.is_none() => colon = Some(j),
                    _ => {}
                }
                j += 1;
            }
            let name_end = colon.unwrap_or(j);
            let group: Vec<String> =
                tokens[start.min(name_end)..name_end].iter().filter(|t| t.is_ident()).map(|t| t.text.to_string()).collect();
            if let Some(c) = colon {
                refs.extend(free_refs(&tokens[c + 1..j.min(tokens.len())], &locals));
            }
            for n in group {
                locals.insert(n.clone());
                names.push(n);
            }
            i = j + 1;
        } else if t.is_ident() {
            locals.insert(t.text.to_string());
            names.push(t.text.to_string());
            i += 1;
        } else {
            i += 1;
        }
    }
    (names, refs)
}

/// Every identifier bound somewhere inside a term: the locals a proof of a
/// statement may mention.
pub fn bound_inside(tokens: &[Token<'_>]) -> HashSet<String> {
    let mut out = HashSet::new();
    let mut i = 0;
    while i < tokens.len() {
        if matches!(tokens[i].text, "forall" | "fun" | "exists") {
            let close = if tokens[i].is("fun") { "=>" } else { "," };
            let mut j = i + 1;
            let mut depth = 0;
            let mut after_colon = false;
            while j < tokens.len() && !(tokens[j].is(close) && depth == 0) {
                match tokens[j].text {
                    "(" | "{" | "[" => {
                        depth += 1;
                        after_colon = false;
                    }
                    ")" | "}" | "]" => {
                        depth -= 1;
                        if depth == 0 {
                            after_colon = false;
                        }
                    }
                    ":" => after_colon = true,
                    _ if tokens[j].is_ident() && !after_colon => {
                        out.insert(tokens[j].text.to_string());
                    }
                    _ => {}
                }
                j += 1;
            }
            i = j;
        }
        i += 1;
    }
    out
}
