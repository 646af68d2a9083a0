//! A small tactic language: parsing only. Evaluation lives with the
//! interpreter because it needs the environment.

use vermin_core::sentence_model::lexer::{tokenize, Token, TokenKind};

/// Tokens kept by value so parsed tactics outlive their source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tok {
    pub text: String,
    pub kind: TokenKind,
    pub start: usize,
}

impl Tok {
    pub fn is(&self, s: &str) -> bool {
        self.text == s
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }
}

pub fn owned(tokens: &[Token<'_>]) -> Vec<Tok> {
    tokens.iter().map(|t| Tok { text: t.text.to_string(), kind: t.kind, start: t.start }).collect()
}

pub fn lex(text: &str) -> Vec<Tok> {
    owned(&tokenize(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Bug,
    Universe,
    BuggedTactic,
    Numbered,
    Forgotten,
}

impl Trigger {
    pub fn from_name(name: &str) -> Option<Trigger> {
        Some(match name {
            "trigger_bug" => Trigger::Bug,
            "trigger_universe" => Trigger::Universe,
            "trigger_bugged_tactic" => Trigger::BuggedTactic,
            "trigger_numbered" => Trigger::Numbered,
            "trigger_forgotten" => Trigger::Forgotten,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    Match,
    Lazy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tac {
    Seq(Vec<Tac>),
    Or(Box<Tac>, Box<Tac>),
    Try(Box<Tac>),
    Repeat(Box<Tac>),
    Abstract(Box<Tac>),
    First(Vec<Tac>),
    Idtac,
    Fail { level: u32, msg: Vec<Tok> },
    Admit,
    Trigger { kind: Trigger, args: Vec<Tok> },
    Match { kind: MatchKind, branches: Vec<(Vec<Tok>, Tac)> },
    Let { name: String, value: Vec<Tok>, body: Box<Tac> },
    /// A primitive or user tactic with its raw arguments.
    Call { name: Tok, args: Vec<Tok> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacParseError {
    pub message: String,
    pub start: usize,
}

const STOPS: &[&str] = &[";", "||", ")", "|", "end", "]", "."];

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

pub fn parse(toks: &[Tok]) -> Result<Tac, TacParseError> {
    let mut p = Parser { toks, pos: 0 };
    let t = p.seq()?;
    if let Some(extra) = p.peek() {
        if !extra.is(".") {
            return Err(p.error(format!("unexpected `{}` in tactic", extra.text)));
        }
    }
    Ok(t)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn peek_is(&self, s: &str) -> bool {
        self.peek().is_some_and(|t| t.is(s))
    }

    fn error(&self, message: String) -> TacParseError {
        let start = self.peek().or(self.toks.last()).map_or(0, |t| t.start);
        TacParseError { message, start }
    }

    fn expect(&mut self, s: &str) -> Result<(), TacParseError> {
        if self.peek_is(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}` in tactic")))
        }
    }

    fn seq(&mut self) -> Result<Tac, TacParseError> {
        let mut parts = vec![self.or()?];
        while self.peek_is(";") {
            self.pos += 1;
            parts.push(self.or()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one part") } else { Tac::Seq(parts) })
    }

    fn or(&mut self) -> Result<Tac, TacParseError> {
        let mut t = self.unary()?;
        while self.peek_is("||") {
            self.pos += 1;
            t = Tac::Or(Box::new(t), Box::new(self.unary()?));
        }
        Ok(t)
    }

    fn unary(&mut self) -> Result<Tac, TacParseError> {
        let Some(t) = self.peek() else { return Err(self.error("empty tactic".into())) };
        let wrap = |p: &mut Self, f: fn(Box<Tac>) -> Tac| -> Result<Tac, TacParseError> {
            p.pos += 1;
            Ok(f(Box::new(p.unary()?)))
        };
        match t.text.as_str() {
            "try" => wrap(self, Tac::Try),
            "repeat" => wrap(self, Tac::Repeat),
            "abstract" => wrap(self, Tac::Abstract),
            "progress" | "once" | "solve" if !self.toks.get(self.pos + 1).is_some_and(|n| n.is("[")) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn args(&mut self) -> Vec<Tok> {
        let mut out = Vec::new();
        let mut depth = 0;
        while let Some(t) = self.peek() {
            if depth == 0 && STOPS.contains(&t.text.as_str()) {
                break;
            }
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
            out.push(t.clone());
            self.pos += 1;
        }
        out
    }

    fn branches(&mut self) -> Result<Vec<(Vec<Tok>, Tac)>, TacParseError> {
        let mut out = Vec::new();
        if self.peek_is("|") {
            self.pos += 1;
        }
        loop {
            let mut pat = Vec::new();
            let mut depth = 0;
            while let Some(t) = self.peek() {
                if depth == 0 && t.is("=>") {
                    break;
                }
                match t.text.as_str() {
                    "(" | "[" => depth += 1,
                    ")" | "]" => depth -= 1,
                    _ => {}
                }
                pat.push(t.clone());
                self.pos += 1;
            }
            self.expect("=>")?;
            out.push((pat, self.seq()?));
            if self.peek_is("|") {
                self.pos += 1;
                continue;
            }
            self.expect("end")?;
            return Ok(out);
        }
    }

    fn atom(&mut self) -> Result<Tac, TacParseError> {
        let t = self.peek().expect("checked by caller").clone();
        if t.is("(") {
            self.pos += 1;
            let inner = self.seq()?;
            self.expect(")")?;
            return Ok(inner);
        }
        if !t.is_ident() {
            return Err(self.error(format!("unexpected `{}` in tactic", t.text)));
        }
        self.pos += 1;
        match t.text.as_str() {
            "idtac" => {
                self.args();
                Ok(Tac::Idtac)
            }
            "fail" => {
                let mut args = self.args();
                let level = match args.first() {
                    Some(a) if a.kind == TokenKind::Number => {
                        let n = a.text.parse().unwrap_or(0);
                        args.remove(0);
                        n
                    }
                    _ => 0,
                };
                Ok(Tac::Fail { level, msg: args })
            }
            "admit" | "give_up" => Ok(Tac::Admit),
            "first" | "solve" if self.peek_is("[") => {
                self.pos += 1;
                let mut alts = Vec::new();
                if self.peek_is("|") {
                    self.pos += 1;
                }
                loop {
                    alts.push(self.seq()?);
                    if self.peek_is("|") {
                        self.pos += 1;
                        continue;
                    }
                    self.expect("]")?;
                    return Ok(Tac::First(alts));
                }
            }
            "match" | "lazymatch" | "multimatch" => {
                let kind = if t.is("lazymatch") { MatchKind::Lazy } else { MatchKind::Match };
                let mut depth = 0;
                while let Some(n) = self.peek() {
                    if depth == 0 && n.is("with") {
                        break;
                    }
                    match n.text.as_str() {
                        "(" | "[" => depth += 1,
                        ")" | "]" => depth -= 1,
                        _ => {}
                    }
                    self.pos += 1;
                }
                self.expect("with")?;
                Ok(Tac::Match { kind, branches: self.branches()? })
            }
            "let" => {
                let Some(name) = self.peek().filter(|n| n.is_ident()).map(|n| n.text.clone()) else {
                    return Err(self.error("expected a name after `let`".into()));
                };
                self.pos += 1;
                while self.peek().is_some_and(|n| !n.is(":=")) {
                    self.pos += 1;
                }
                self.expect(":=")?;
                let mut value = Vec::new();
                let mut skip_in = self.peek_is("eval");
                let mut depth = 0;
                while let Some(n) = self.peek() {
                    if depth == 0 && n.is("in") {
                        if !skip_in {
                            break;
                        }
                        skip_in = false;
                    }
                    match n.text.as_str() {
                        "(" | "[" => depth += 1,
                        ")" | "]" => depth -= 1,
                        _ => {}
                    }
                    value.push(n.clone());
                    self.pos += 1;
                }
                self.expect("in")?;
                Ok(Tac::Let { name, value, body: Box::new(self.seq()?) })
            }
            name => match Trigger::from_name(name) {
                Some(kind) => Ok(Tac::Trigger { kind, args: self.args() }),
                None => Ok(Tac::Call { name: t.clone(), args: self.args() }),
            },
        }
    }
}

/// Splits raw call arguments into one token group per argument.
pub fn split_args(args: &[Tok]) -> Vec<Vec<Tok>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        if args[i].is("(") {
            let mut depth = 0;
            let start = i;
            while i < args.len() {
                match args[i].text.as_str() {
                    "(" => depth += 1,
                    ")" => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            out.push(args[start..(i + 1).min(args.len())].to_vec());
        } else {
            out.push(vec![args[i].clone()]);
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Tac {
        parse(&lex(s)).unwrap()
    }

    fn call(n: &str) -> Tac {
        Tac::Call { name: Tok { text: n.into(), kind: TokenKind::Ident, start: 0 }, args: vec![] }
    }

    fn strip(t: Tac) -> Tac {
        match t {
            Tac::Seq(v) => Tac::Seq(v.into_iter().map(strip).collect()),
            Tac::Try(b) => Tac::Try(Box::new(strip(*b))),
            Tac::Call { name, args } => Tac::Call { name: Tok { start: 0, ..name }, args },
            other => other,
        }
    }

    #[test]
    fn sequence_with_try() {
        assert_eq!(strip(p("intros; subst; try reflexivity.")), Tac::Seq(vec![call("intros"), call("subst"), Tac::Try(Box::new(call("reflexivity")))]));
    }

    #[test]
    fn guard_shape() {
        let t = p("some_tactic; lazymatch goal with | buggy_goal => fail 0 \"bug remains\" | [ |- ?G ] => fail 0 \"bug disappeared!\" G end.");
        let Tac::Seq(parts) = t else { panic!("not a sequence") };
        let Tac::Match { kind, branches } = &parts[1] else { panic!("not a match") };
        assert_eq!(*kind, MatchKind::Lazy);
        assert_eq!(branches.len(), 2);
        assert!(matches!(&branches[0].1, Tac::Fail { level: 0, msg } if msg[0].text == "\"bug remains\""));
    }

    #[test]
    fn let_with_eval() {
        let t = p("let e := eval hnf in x in head e");
        assert!(matches!(t, Tac::Let { ref name, ref value, .. } if name == "e" && value.len() == 4));
    }

    #[test]
    fn abstract_and_triggers() {
        assert!(matches!(p("abstract (auto)."), Tac::Abstract(_)));
        assert!(matches!(p("trigger_bug \"m\"."), Tac::Trigger { kind: Trigger::Bug, .. }));
    }

    #[test]
    fn args_split() {
        let groups = split_args(&lex("a (f b) c"));
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[1].len(), 4);
    }

    #[test]
    fn unbalanced_is_an_error() {
        assert!(parse(&lex("(idtac")).is_err());
    }
}
