use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::{self, find_top_level, tokenize, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SentenceKind {
    Command,
    ProofOpener,
    ProofStep,
    ProofCloser,
    ScopeOpener,
    ScopeCloser,
    RequireLike,
    ImportLike,
    Blank,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: SentenceId,
    /// Verbatim text, leading comments and terminator included.
    pub text: String,
    pub kind: SentenceKind,
    /// Byte range of `text` inside the rendered document.
    pub span: (usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unterminated comment starting at byte {offset}")]
    UnterminatedComment { offset: usize },
    #[error("unterminated string literal starting at byte {offset}")]
    UnterminatedString { offset: usize },
}

const CLOSERS: &[&str] = &["Qed", "Defined", "Admitted", "Abort", "Save"];

const MODIFIERS: &[&str] = &[
    "Local",
    "Global",
    "Polymorphic",
    "Monomorphic",
    "Cumulative",
    "NonCumulative",
    "Private",
    "Program",
];

/// Heads that open a proof when the sentence carries no `:=` body.
pub const STATEMENT_KEYWORDS: &[&str] = &[
    "Lemma",
    "Theorem",
    "Fact",
    "Corollary",
    "Remark",
    "Proposition",
    "Property",
    "Example",
    "Definition",
    "Fixpoint",
    "CoFixpoint",
    "Instance",
    "Let",
    "Goal",
];

const VERNACULAR: &[&str] = &[
    "Ltac", "Axiom", "Axioms", "Parameter", "Parameters", "Conjecture", "Hypothesis",
    "Hypotheses", "Variable", "Variables", "Context", "Inductive", "CoInductive", "Record",
    "Structure", "Class", "Existing", "Check", "Print", "Compute", "Eval", "Set", "Unset",
    "Admit", "Obligation", "Next", "Solve", "Arguments", "Hint", "Notation", "Infix", "Open",
    "Close", "Scheme", "Opaque", "Transparent", "Create", "Declare", "Generalizable",
    "Implicit", "Tactic", "Search", "Locate", "Include", "Sleep", "About", "Show", "Time",
];

/// Splits source text into sentences.
///
/// A sentence ends at a period followed by whitespace or end of input,
/// outside comments and string literals. Leading comments belong to the
/// sentence that follows them; trailing text with no terminator becomes a
/// final sentence of its own.
pub fn split_sentences(text: &str) -> Result<Vec<Sentence>, ParseError> {
    let spans = sentence_spans(text)?;
    let texts: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
    let kinds = classify_all(&texts);
    Ok(spans
        .into_iter()
        .zip(kinds)
        .enumerate()
        .map(|(i, ((s, e), kind))| Sentence {
            id: SentenceId(i as u64),
            text: text[s..e].to_string(),
            kind,
            span: (s, e),
        })
        .collect())
}

pub(crate) fn sentence_spans(text: &str) -> Result<Vec<(usize, usize)>, ParseError> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_content = 0;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == b'(' && b.get(i + 1) == Some(&b'*') {
            start.get_or_insert(i);
            i = lexer::comment_end(text, i).ok_or(ParseError::UnterminatedComment { offset: i })?;
            last_content = i;
            continue;
        }
        if c == b'"' {
            start.get_or_insert(i);
            i = lexer::string_end(text, i).ok_or(ParseError::UnterminatedString { offset: i })?;
            last_content = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let s = *start.get_or_insert(i);
        if c == b'.' && text[i + 1..].chars().next().is_none_or(char::is_whitespace) {
            out.push((s, i + 1));
            start = None;
        }
        i += 1;
        last_content = i;
    }
    if let Some(s) = start {
        out.push((s, last_content));
    }
    Ok(out)
}

/// Token view of a sentence positioned at its command keyword, past bullets,
/// attributes and locality modifiers.
#[derive(Debug, Clone)]
pub struct Head<'a> {
    pub tokens: Vec<Token<'a>>,
    pub index: usize,
    pub program: bool,
    pub locality: Option<&'a str>,
}

impl<'a> Head<'a> {
    pub fn parse(text: &'a str) -> Head<'a> {
        let tokens = tokenize(text);
        let mut i = 0;
        let mut program = false;
        let mut locality = None;
        loop {
            match tokens.get(i) {
                Some(t) if t.kind == TokenKind::Symbol && matches!(t.text, "-" | "+" | "*" | "{" | "}") => i += 1,
                Some(t) if t.is("#") && tokens.get(i + 1).is_some_and(|n| n.is("[")) => {
                    while i < tokens.len() && !tokens[i].is("]") {
                        i += 1;
                    }
                    i += 1;
                }
                Some(t) if t.is_ident() && MODIFIERS.contains(&t.text) => {
                    if t.text == "Program" {
                        program = true;
                    } else if matches!(t.text, "Local" | "Global") {
                        locality = Some(t.text);
                    }
                    i += 1;
                }
                _ => break,
            }
        }
        Head { tokens, index: i, program, locality }
    }

    pub fn keyword(&self) -> Option<&'a str> {
        self.tokens.get(self.index).filter(|t| t.is_ident()).map(|t| t.text)
    }

    /// Tokens after the keyword.
    pub fn rest(&self) -> &[Token<'a>] {
        self.tokens.get(self.index + 1..).unwrap_or(&[])
    }

    pub fn word(&self, offset: usize) -> Option<&'a str> {
        self.tokens.get(self.index + offset).map(|t| t.text)
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn classify(text: &str, in_proof: bool) -> SentenceKind {
    let head = Head::parse(text);
    if head.is_empty() {
        return SentenceKind::Blank;
    }
    let Some(kw) = head.keyword() else {
        return if in_proof { SentenceKind::ProofStep } else { SentenceKind::Command };
    };
    match kw {
        k if CLOSERS.contains(&k) => SentenceKind::ProofCloser,
        "Proof" => SentenceKind::ProofOpener,
        "End" => SentenceKind::ScopeCloser,
        "Section" => SentenceKind::ScopeOpener,
        "Module" => {
            if find_top_level(head.rest(), ":=").is_some() {
                SentenceKind::Command
            } else {
                SentenceKind::ScopeOpener
            }
        }
        "Require" => SentenceKind::RequireLike,
        "From" if head.rest().iter().any(|t| t.is("Require")) => SentenceKind::RequireLike,
        "Import" | "Export" => match head.word(1) {
            Some("Set" | "Unset" | "Hint") => SentenceKind::Command,
            _ => SentenceKind::ImportLike,
        },
        k if STATEMENT_KEYWORDS.contains(&k) || VERNACULAR.contains(&k) => SentenceKind::Command,
        _ if in_proof => SentenceKind::ProofStep,
        _ => SentenceKind::Command,
    }
}

/// True when the sentence is a statement that enters proof mode.
pub fn opens_proof(text: &str) -> bool {
    let head = Head::parse(text);
    match head.keyword() {
        Some("Goal") => true,
        Some("Obligation") => true,
        Some("Next") => head.word(1) == Some("Obligation"),
        Some(k) if STATEMENT_KEYWORDS.contains(&k) => find_top_level(head.rest(), ":=").is_none(),
        _ => false,
    }
}

pub fn is_obligation_opener(text: &str) -> bool {
    let head = Head::parse(text);
    matches!(
        (head.keyword(), head.word(1)),
        (Some("Obligation"), _) | (Some("Next"), Some("Obligation"))
    )
}

pub(crate) fn classify_all(texts: &[&str]) -> Vec<SentenceKind> {
    let mut in_proof = false;
    texts
        .iter()
        .map(|t| {
            let kind = classify(t, in_proof);
            if kind == SentenceKind::ProofCloser {
                in_proof = false;
            } else if opens_proof(t) {
                in_proof = true;
            }
            kind
        })
        .collect()
}

fn binder_names(tokens: &[Token<'_>]) -> Vec<String> {
    let mut names = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        if matches!(t.text, "(" | "{" | "[" | "`") {
            let mut j = if t.is("`") { i + 2 } else { i + 1 };
            while j < tokens.len() && tokens[j].is_ident() {
                names.push(tokens[j].text.to_string());
                j += 1;
            }
            let mut depth = 1;
            while j < tokens.len() && depth > 0 {
                match tokens[j].text {
                    "(" | "{" | "[" => depth += 1,
                    ")" | "}" | "]" => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            i = j;
        } else if t.is_ident() {
            names.push(t.text.to_string());
            i += 1;
        } else {
            break;
        }
    }
    names
}

/// Names a sentence binds at the level it appears in.
pub fn introduced_names(text: &str) -> Vec<String> {
    let head = Head::parse(text);
    let rest = head.rest();
    let first_ident = || rest.first().filter(|t| t.is_ident()).map(|t| vec![t.text.to_string()]);
    match head.keyword() {
        Some("Goal") | None => Vec::new(),
        Some("Module") => {
            let skip = rest.iter().take_while(|t| matches!(t.text, "Type" | "Export" | "Import")).count();
            rest.get(skip).filter(|t| t.is_ident()).map(|t| vec![t.text.to_string()]).unwrap_or_default()
        }
        Some("Variable" | "Variables" | "Parameter" | "Parameters" | "Axiom" | "Axioms" | "Hypothesis"
        | "Hypotheses" | "Conjecture" | "Context") => binder_names(rest),
        Some("Inductive" | "CoInductive" | "Record" | "Structure" | "Class") => {
            let mut names = first_ident().unwrap_or_default();
            if let Some(def) = find_top_level(rest, ":=") {
                let body = &rest[def + 1..];
                let mut expect_ctor = true;
                let mut depth = 0;
                let mut in_fields = false;
                for (k, t) in body.iter().enumerate() {
                    match t.text {
                        "(" | "[" => depth += 1,
                        ")" | "]" => depth -= 1,
                        "{" => {
                            in_fields |= depth == 0;
                            depth += 1;
                            expect_ctor = false;
                        }
                        "}" => depth -= 1,
                        "|" if depth == 0 => expect_ctor = true,
                        _ if t.is_ident() && expect_ctor && depth == 0 => {
                            names.push(t.text.to_string());
                            expect_ctor = false;
                        }
                        _ if t.is_ident() && in_fields && depth == 1 && body.get(k + 1).is_some_and(|n| n.is(":")) => {
                            names.push(t.text.to_string());
                        }
                        _ => {}
                    }
                }
            }
            names
        }
        Some("Ltac" | "Section") => first_ident().unwrap_or_default(),
        Some(k) if STATEMENT_KEYWORDS.contains(&k) => first_ident().unwrap_or_default(),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        split_sentences(src).unwrap().into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn splits_two_definitions_on_one_line() {
        assert_eq!(
            texts("Definition zero := 0. Definition one := 1."),
            vec!["Definition zero := 0.", "Definition one := 1."]
        );
    }

    #[test]
    fn empty_input_has_no_sentences() {
        assert!(split_sentences("").unwrap().is_empty());
        assert!(split_sentences("  \n\t").unwrap().is_empty());
    }

    #[test]
    fn period_inside_string_is_not_a_terminator() {
        assert_eq!(texts("Ltac f := idtac \"a. b\". Check f."), vec!["Ltac f := idtac \"a. b\".", "Check f."]);
    }

    #[test]
    fn qualified_names_do_not_terminate() {
        assert_eq!(texts("Check M.t. Check x."), vec!["Check M.t.", "Check x."]);
    }

    #[test]
    fn comments_attach_to_next_sentence() {
        assert_eq!(
            texts("(* about zero. *) Definition zero := 0.\n(* tail *)"),
            vec!["(* about zero. *) Definition zero := 0.", "(* tail *)"]
        );
        let s = split_sentences("(* tail *)").unwrap();
        assert_eq!(s[0].kind, SentenceKind::Blank);
    }

    #[test]
    fn nested_comments() {
        assert_eq!(texts("(* a (* b. *) c. *) X."), vec!["(* a (* b. *) c. *) X."]);
    }

    #[test]
    fn unterminated_errors_carry_offsets() {
        assert_eq!(split_sentences("X. (* never"), Err(ParseError::UnterminatedComment { offset: 3 }));
        assert_eq!(split_sentences("Y \"abc"), Err(ParseError::UnterminatedString { offset: 2 }));
    }

    #[test]
    fn bullets_are_part_of_steps() {
        let s = split_sentences("Lemma a : True. Proof. - auto. + { trivial. } Qed.").unwrap();
        let kinds: Vec<_> = s.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                SentenceKind::Command,
                SentenceKind::ProofOpener,
                SentenceKind::ProofStep,
                SentenceKind::ProofStep,
                SentenceKind::ProofCloser
            ]
        );
        assert_eq!(s[4].text, "} Qed.");
    }

    #[test]
    fn kinds() {
        assert_eq!(classify("Require Import A.", false), SentenceKind::RequireLike);
        assert_eq!(classify("From Coq Require Import Lia.", false), SentenceKind::RequireLike);
        assert_eq!(classify("Import A B.", false), SentenceKind::ImportLike);
        assert_eq!(classify("Export Set Foo.", false), SentenceKind::Command);
        assert_eq!(classify("Module M.", false), SentenceKind::ScopeOpener);
        assert_eq!(classify("Module M := N.", false), SentenceKind::Command);
        assert_eq!(classify("End M.", false), SentenceKind::ScopeCloser);
        assert_eq!(classify("crush.", true), SentenceKind::ProofStep);
        assert_eq!(classify("Admit Obligations.", false), SentenceKind::Command);
    }

    #[test]
    fn proof_openers() {
        assert!(opens_proof("Lemma foo : forall x, x = zero -> S x = one."));
        assert!(opens_proof("Definition one : nat."));
        assert!(!opens_proof("Definition one := 1."));
        assert!(opens_proof("Goal True."));
        assert!(opens_proof("Next Obligation."));
        assert!(!opens_proof("Program Definition f : nat := _."));
    }

    #[test]
    fn names() {
        assert_eq!(introduced_names("Definition zero := 0."), vec!["zero"]);
        assert_eq!(introduced_names("Lemma irrelevant : two = 2."), vec!["irrelevant"]);
        assert_eq!(introduced_names("Variables (a b : nat) (c : bool)."), vec!["a", "b", "c"]);
        assert_eq!(introduced_names("Variable a b : nat."), vec!["a", "b"]);
        assert_eq!(introduced_names("Context {A : Type}."), vec!["A"]);
        assert_eq!(introduced_names("Module Export M."), vec!["M"]);
        assert_eq!(introduced_names("Module Type T."), vec!["T"]);
        assert_eq!(introduced_names("Inductive t := A | B (n : nat)."), vec!["t", "A", "B"]);
        assert_eq!(introduced_names("Ltac crush := auto."), vec!["crush"]);
        assert!(introduced_names("Goal True.").is_empty());
    }
}
