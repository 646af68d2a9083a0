//! Sentence-by-sentence interpreter over a shared global environment.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use vermin_core::inliner::{parse_import, parse_require, Flavor};
use vermin_core::loadpath::{is_stdlib, names_suffix, LoadPath};
use vermin_core::sentence_model::lexer::{find_top_level, Token, TokenKind};
use vermin_core::sentence_model::{classify, opens_proof, split_sentences, Head, ParseError, SentenceKind};

use crate::tactics::{self, lex, MatchKind, Tac, Tok, Trigger};
use crate::terms::{binder_list, bound_inside, free_refs, Reference};
use crate::{Config, Version};

pub const VERBOSE_FLAG: &str = "Verbose Errors";

const BUILTINS: &[&str] = &[
    "nat", "O", "S", "bool", "true", "false", "True", "False", "I", "eq", "eq_refl", "and", "or", "not", "conj",
    "ex", "ex_intro", "list", "nil", "cons", "unit", "tt", "plus", "mult", "minus", "le", "lt", "ge", "gt", "prod",
    "pair", "fst", "snd", "option", "Some", "None", "sig", "exist", "sigT", "existT", "sum", "inl", "inr", "iff",
    "or_introl", "or_intror", "length", "app", "negb", "andb", "orb", "id", "Nat", "List",
];

/// Tactics the checker knows, grouped by how their arguments are treated.
const BINDING_TACTICS: &[&str] = &[
    "intro", "intros", "destruct", "induction", "case", "elim", "inversion", "remember", "set", "pose", "assert",
    "generalize", "revert", "clear", "rename", "cut", "enough", "epose", "edestruct", "einduction", "dependent",
];
const REFERENCING_TACTICS: &[&str] = &[
    "exact", "apply", "eapply", "refine", "rewrite", "erewrite", "specialize", "exists", "eexists", "change",
    "transitivity", "exfalso_with", "unfold",
];
const PLAIN_TACTICS: &[&str] = &[
    "subst", "reflexivity", "auto", "eauto", "trivial", "simpl", "cbn", "hnf", "red", "compute", "vm_compute",
    "split", "assumption", "eassumption", "constructor", "econstructor", "discriminate", "congruence", "lia",
    "omega", "easy", "now", "left", "right", "tauto", "firstorder", "f_equal", "symmetry", "exfalso",
    "contradiction", "lazy", "cbv", "shelve", "injection", "intuition", "field", "ring", "reflexivity_of",
    "done", "trivial_of", "unshelve", "instantiate", "pattern", "replace", "cofix", "fix", "exact_no_check",
    "native_compute", "Focus", "Unfocus",
];

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct Located {
    pub file: String,
    pub line: usize,
    pub chars: (usize, usize),
    pub message: String,
}

impl Located {
    pub fn render(&self) -> String {
        format!(
            "File \"{}\", line {}, characters {}-{}:\nError: {}\n",
            self.file, self.line, self.chars.0, self.chars.1, self.message
        )
    }
}

#[derive(Debug)]
pub enum Stop {
    Error(Located),
    Timeout,
    Internal(String),
}

/// A semantic error inside one sentence, located by byte range in its text.
#[derive(Debug)]
struct SemErr {
    message: String,
    at: Option<(usize, usize)>,
}

enum Fault {
    Sem(SemErr),
    Stop(Stop),
}

impl From<SemErr> for Fault {
    fn from(e: SemErr) -> Self {
        Fault::Sem(e)
    }
}

fn sem(message: impl Into<String>) -> SemErr {
    SemErr { message: message.into(), at: None }
}

fn sem_at(message: impl Into<String>, at: (usize, usize)) -> SemErr {
    SemErr { message: message.into(), at: Some(at) }
}

fn not_found(r: &Reference) -> SemErr {
    sem_at(format!("The reference {} was not found in the current environment.", r.name), (r.start, r.end))
}

#[derive(Debug, Clone, PartialEq)]
enum ObjKind {
    Constant { opaque: bool },
    Ltac { params: Vec<String>, body: String },
}

#[derive(Debug, Clone)]
struct Obj {
    kind: ObjKind,
    order: usize,
}

#[derive(Debug, Clone, Default)]
struct ModInfo {
    exports: Vec<String>,
    export_flags: Vec<(String, bool)>,
    global_flags: Vec<(String, bool)>,
    order: usize,
    is_type: bool,
    library: bool,
}

/// Everything shared between the checked file and the libraries it loads.
pub struct World<'c> {
    cfg: &'c Config,
    loadpath: LoadPath,
    objects: HashMap<String, Obj>,
    modules: HashMap<String, ModInfo>,
    order: usize,
    loading: Vec<String>,
    seed: u64,
}

impl<'c> World<'c> {
    pub fn new(cfg: &'c Config) -> Self {
        let loadpath = LoadPath::scan(&cfg.search_paths, &cfg.base_dir);
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
        let seed = nanos ^ u64::from(std::process::id()).rotate_left(32) ^ RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
        World { cfg, loadpath, objects: HashMap::new(), modules: HashMap::new(), order: 0, loading: Vec::new(), seed }
    }

    fn next_order(&mut self) -> usize {
        self.order += 1;
        self.order
    }

    pub fn logical_name_of(&self, file: &Path) -> String {
        self.loadpath.logical_name_of(file).map(str::to_string).unwrap_or_else(|| {
            file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "Top".to_string())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScopeKind {
    File,
    Module,
    ModuleType,
    Section,
}

#[derive(Debug, Clone)]
struct Scope {
    kind: ScopeKind,
    name: String,
    /// Prefix of names defined here; sections do not add a component.
    path: String,
    export: bool,
    opened: Vec<String>,
    vars: HashSet<String>,
    saved_flags: HashMap<String, bool>,
}

#[derive(Debug, Clone)]
struct Proof {
    /// Full path of the constant the proof defines, if any.
    name: Option<String>,
    admitted: bool,
    locals: HashSet<String>,
    obligation: Option<usize>,
}

#[derive(Debug, Clone)]
struct Program {
    name: String,
    pending: usize,
}

#[derive(Default, Clone)]
struct Ctx {
    vars: HashMap<String, Vec<Tok>>,
}

enum TacErr {
    Fail { level: u32, msg: String },
    Fatal(Fault),
}

impl From<SemErr> for TacErr {
    fn from(e: SemErr) -> Self {
        TacErr::Fatal(Fault::Sem(e))
    }
}

const MAX_LTAC_DEPTH: usize = 64;

pub struct FileInterp<'w, 'c> {
    world: &'w mut World<'c>,
    display: String,
    root: String,
    is_root: bool,
    scopes: Vec<Scope>,
    flags: HashMap<String, bool>,
    proof: Option<Proof>,
    programs: Vec<Program>,
    /// Global flags this file leaks to whoever requires it.
    leaked: Vec<(String, bool)>,
    pub names: Vec<(String, String)>,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Tokens of a sentence after its keyword, without the terminator.
fn body<'a>(rest: &'a [Token<'a>]) -> &'a [Token<'a>] {
    match rest.split_last() {
        Some((last, init)) if last.is(".") => init,
        _ => rest,
    }
}

fn span_of(tokens: &[Token<'_>]) -> Option<(usize, usize)> {
    Some((tokens.first()?.start, tokens.last()?.end()))
}

/// Names in `( x y : T)` style groups anywhere in a token list.
fn paren_binder_names(tokens: &[Token<'_>]) -> HashSet<String> {
    let mut out = HashSet::new();
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.text, "(" | "{" | "[") {
            let idents: Vec<&Token<'_>> = tokens[i + 1..].iter().take_while(|n| n.is_ident()).collect();
            if !idents.is_empty() && tokens.get(i + 1 + idents.len()).is_some_and(|n| n.is(":")) {
                out.extend(idents.iter().map(|n| n.text.to_string()));
            }
        }
    }
    out
}

fn unquote(s: &str) -> String {
    s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).map(|s| s.replace("\"\"", "\"")).unwrap_or_else(|| s.to_string())
}

impl<'w, 'c> FileInterp<'w, 'c> {
    pub fn new(world: &'w mut World<'c>, display: String, root: String, is_root: bool) -> Self {
        let order = world.next_order();
        world.modules.insert(root.clone(), ModInfo { order, library: true, ..ModInfo::default() });
        let file_scope = Scope {
            kind: ScopeKind::File,
            name: root.clone(),
            path: root.clone(),
            export: false,
            opened: Vec::new(),
            vars: HashSet::new(),
            saved_flags: HashMap::new(),
        };
        FileInterp {
            world,
            display,
            root,
            is_root,
            scopes: vec![file_scope],
            flags: HashMap::new(),
            proof: None,
            programs: Vec::new(),
            leaked: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn run(&mut self, text: &str) -> Result<(), Stop> {
        let sentences = match split_sentences(text) {
            Ok(s) => s,
            Err(e) => {
                let (offset, what) = match e {
                    ParseError::UnterminatedComment { offset } => (offset, "comment"),
                    ParseError::UnterminatedString { offset } => (offset, "string"),
                };
                return Err(Stop::Error(self.locate(text, offset, text.len(), format!("Syntax error: unterminated {what}."))));
            }
        };
        for s in &sentences {
            if self.world.cfg.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(Stop::Timeout);
            }
            match self.sentence(&s.text) {
                Ok(()) => {}
                Err(Fault::Stop(stop)) => return Err(stop),
                Err(Fault::Sem(e)) => {
                    let (a, b) = e.at.unwrap_or_else(|| {
                        let toks = vermin_core::sentence_model::lexer::tokenize(&s.text);
                        (toks.first().map_or(0, |t| t.start), s.text.trim_end().len())
                    });
                    let message = if self.flags.get(VERBOSE_FLAG).copied().unwrap_or(false) {
                        format!("[verbose] {}", e.message)
                    } else {
                        e.message
                    };
                    return Err(Stop::Error(self.locate(text, s.span.0 + a, s.span.0 + b, message)));
                }
            }
        }
        let info = self.world.modules.entry(self.root.clone()).or_default();
        info.global_flags = self.leaked.clone();
        Ok(())
    }

    fn locate(&self, text: &str, start: usize, end: usize, message: String) -> Located {
        let line = text[..start].matches('\n').count() + 1;
        let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
        Located { file: self.display.clone(), line, chars: (start - line_start, end - line_start), message }
    }

    // ----- scopes and names ---------------------------------------------------

    fn current_path(&self) -> &str {
        &self.scopes.last().expect("file scope").path
    }

    /// Path of the innermost module (or the file) for export bookkeeping.
    fn current_module(&self) -> String {
        self.scopes
            .iter()
            .rev()
            .find(|s| matches!(s.kind, ScopeKind::Module | ScopeKind::File | ScopeKind::ModuleType))
            .map(|s| s.path.clone())
            .expect("file scope")
    }

    fn exists_object(&self, full: &str) -> bool {
        self.world.objects.contains_key(full)
    }

    fn lookup(&self, name: &str, modules: bool) -> Option<String> {
        let exists = |k: &str| if modules { self.world.modules.contains_key(k) } else { self.world.objects.contains_key(k) };
        let order = |k: &str| {
            if modules {
                self.world.modules.get(k).map_or(0, |m| m.order)
            } else {
                self.world.objects.get(k).map_or(0, |o| o.order)
            }
        };
        match name.split_once('.') {
            None => {
                for scope in self.scopes.iter().rev() {
                    let cand = join(&scope.path, name);
                    if exists(&cand) {
                        return Some(cand);
                    }
                    for m in scope.opened.iter().rev() {
                        let cand = join(m, name);
                        if exists(&cand) {
                            return Some(cand);
                        }
                    }
                }
                if modules {
                    return self
                        .world
                        .modules
                        .iter()
                        .filter(|(k, m)| m.library && names_suffix(k, name))
                        .max_by_key(|(_, m)| m.order)
                        .map(|(k, _)| k.clone());
                }
                None
            }
            Some((first, rest)) => {
                if let Some(m) = self.lookup(first, true) {
                    let cand = join(&m, rest);
                    if exists(&cand) {
                        return Some(cand);
                    }
                }
                if exists(name) {
                    return Some(name.to_string());
                }
                let keys: Vec<&String> = if modules {
                    self.world.modules.keys().collect()
                } else {
                    self.world.objects.keys().collect()
                };
                keys.into_iter().filter(|k| names_suffix(k, name)).max_by_key(|k| order(k)).cloned()
            }
        }
    }

    fn is_section_var(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.vars.contains(name))
    }

    fn term_resolves(&self, name: &str) -> bool {
        BUILTINS.contains(&name) || is_stdlib(name) && name.contains('.') || self.is_section_var(name) || self.lookup(name, false).is_some()
    }

    fn check_refs(&self, refs: &[Reference]) -> Result<(), SemErr> {
        match refs.iter().find(|r| !self.term_resolves(&r.name)) {
            Some(r) => Err(not_found(r)),
            None => Ok(()),
        }
    }

    fn define(&mut self, short: &str, kind: ObjKind, at: Option<(usize, usize)>) -> Result<String, SemErr> {
        let full = join(self.current_path(), short);
        if self.exists_object(&full) {
            return Err(SemErr { message: format!("{short} already exists."), at });
        }
        let order = self.world.next_order();
        self.world.objects.insert(full.clone(), Obj { kind, order });
        Ok(full)
    }

    fn check_fresh(&self, short: &str, at: Option<(usize, usize)>) -> Result<(), SemErr> {
        let full = join(self.current_path(), short);
        if self.exists_object(&full) || self.world.modules.contains_key(&full) {
            return Err(SemErr { message: format!("{short} already exists."), at });
        }
        Ok(())
    }

    fn open(&mut self, full: &str, seen: &mut HashSet<String>) {
        if !seen.insert(full.to_string()) {
            return;
        }
        let info = self.world.modules.get(full).cloned().unwrap_or_default();
        self.scopes.last_mut().expect("file scope").opened.push(full.to_string());
        for (k, v) in &info.export_flags {
            self.flags.insert(k.clone(), *v);
        }
        for e in &info.exports {
            self.open(e, seen);
        }
    }

    fn import(&mut self, name: &str, export: bool, at: Option<(usize, usize)>) -> Result<(), SemErr> {
        if is_stdlib(name) {
            return Ok(());
        }
        let Some(full) = self.lookup(name, true) else {
            return Err(SemErr { message: format!("Cannot find module {name}."), at });
        };
        if self.world.modules.get(&full).is_some_and(|m| m.is_type) {
            return Err(SemErr { message: format!("{name} is a module type and cannot be imported."), at });
        }
        if self.is_root {
            self.names.push((name.to_string(), full.clone()));
        }
        self.open(&full, &mut HashSet::new());
        if export {
            let cur = self.current_module();
            let info = self.world.modules.entry(cur).or_default();
            if !info.exports.contains(&full) {
                info.exports.push(full);
            }
        }
        Ok(())
    }

    // ----- sentences ----------------------------------------------------------

    fn sentence(&mut self, text: &str) -> Result<(), Fault> {
        let head = Head::parse(text);
        if head.is_empty() {
            return Ok(());
        }
        let kind = classify(text, self.proof.is_some());
        if kind == SentenceKind::ProofStep {
            return self.tactic_sentence(&head);
        }
        let rest = head.rest();
        let kw_span = head.tokens.get(head.index).map(|t| (t.start, t.end()));
        let Some(kw) = head.keyword() else {
            return Err(sem("Syntax error: illegal begin of vernac.").into());
        };
        match kw {
            "Proof" => {
                if self.proof.is_none() {
                    return Err(sem("No focused proof (No proof-editing in progress).").into());
                }
                Ok(())
            }
            "Qed" | "Save" | "Defined" | "Admitted" | "Abort" => self.close_proof(kw).map_err(Fault::from),
            "Goal" => {
                if self.proof.is_some() {
                    return Err(sem("Nested proofs are not allowed.").into());
                }
                let ty = body(rest);
                self.check_refs(&free_refs(ty, &HashSet::new()))?;
                self.proof = Some(Proof { name: None, admitted: false, locals: bound_inside(ty), obligation: None });
                Ok(())
            }
            k if vermin_core::sentence_model::STATEMENT_KEYWORDS.contains(&k) => {
                self.statement(text, &head).map_err(Fault::from)
            }
            "Ltac" => self.ltac(text, rest).map_err(Fault::from),
            "Axiom" | "Axioms" | "Parameter" | "Parameters" | "Conjecture" | "Hypothesis" | "Hypotheses"
            | "Variable" | "Variables" | "Context" => self.assumption(kw, rest).map_err(Fault::from),
            "Inductive" | "CoInductive" | "Record" | "Structure" | "Class" => self.inductive(text, rest).map_err(Fault::from),
            "Check" | "Compute" => Ok(self.check_refs(&free_refs(body(rest), &HashSet::new()))?),
            "Eval" => {
                let b = body(rest);
                let from = b.iter().position(|t| t.is("in")).map_or(0, |i| i + 1);
                Ok(self.check_refs(&free_refs(&b[from..], &HashSet::new()))?)
            }
            "Print" | "About" | "Locate" => {
                let b: Vec<&Token<'_>> = body(rest).iter().filter(|t| t.is_ident()).collect();
                if let [only] = b.as_slice() {
                    let r = Reference { name: only.text.to_string(), start: only.start, end: only.end() };
                    if !self.term_resolves(&r.name) && self.lookup(&r.name, true).is_none() {
                        return Err(not_found(&r).into());
                    }
                }
                Ok(())
            }
            "Opaque" | "Transparent" => {
                for t in body(rest).iter().filter(|t| t.is_ident()) {
                    let r = Reference { name: t.text.to_string(), start: t.start, end: t.end() };
                    let Some(full) = self.lookup(&r.name, false) else {
                        if BUILTINS.contains(&t.text) {
                            continue;
                        }
                        return Err(not_found(&r).into());
                    };
                    if let Some(Obj { kind: ObjKind::Constant { opaque }, .. }) = self.world.objects.get_mut(&full) {
                        *opaque = kw == "Opaque";
                    }
                }
                Ok(())
            }
            "Arguments" => {
                if let Some(t) = rest.first().filter(|t| t.is_ident()) {
                    let r = Reference { name: t.text.to_string(), start: t.start, end: t.end() };
                    self.check_refs(&[r])?;
                }
                Ok(())
            }
            "Set" | "Unset" => {
                self.set_flag(head.locality, kw == "Set", rest);
                Ok(())
            }
            "Import" | "Export" if matches!(head.word(1), Some("Set" | "Unset")) => {
                let on = head.word(1) == Some("Set");
                self.set_flag(Some("Export"), on, &rest[1..]);
                Ok(())
            }
            "Import" | "Export" => {
                let Some((flavor, names)) = parse_import(text) else {
                    return Err(sem("Syntax error: expected module names.").into());
                };
                let b = body(rest);
                for (n, t) in names.iter().zip(b) {
                    self.import(n, flavor == Flavor::Export, Some((t.start, t.end())))?;
                }
                Ok(())
            }
            "Require" | "From" => self.require(text, &head),
            "Module" => self.module(rest).map_err(Fault::from),
            "Section" => {
                if self.proof.is_some() {
                    return Err(sem("Command not supported (Open proofs remain).").into());
                }
                let Some(name) = rest.first().filter(|t| t.is_ident()) else {
                    return Err(sem("Syntax error: expected a section name.").into());
                };
                self.push_scope(ScopeKind::Section, name.text, false);
                Ok(())
            }
            "End" => self.end(rest).map_err(Fault::from),
            "Obligation" | "Next" => {
                if self.proof.is_some() {
                    return Err(sem("Nested proofs are not allowed.").into());
                }
                let Some(idx) = self.programs.iter().position(|p| p.pending > 0) else {
                    return Err(sem("No obligations remaining.").into());
                };
                self.proof = Some(Proof { name: None, admitted: false, locals: HashSet::new(), obligation: Some(idx) });
                Ok(())
            }
            "Solve" | "Admit" => {
                for i in 0..self.programs.len() {
                    if self.programs[i].pending > 0 {
                        self.programs[i].pending = 0;
                        self.finish_program(i)?;
                    }
                }
                Ok(())
            }
            "Sleep" => {
                let ms: u64 = rest.first().and_then(|t| t.text.parse().ok()).unwrap_or(0);
                self.sleep(Duration::from_millis(ms)).map_err(Fault::Stop)
            }
            "Hint" | "Notation" | "Infix" | "Open" | "Close" | "Scheme" | "Create" | "Declare" | "Generalizable"
            | "Implicit" | "Tactic" | "Search" | "Show" | "Existing" | "Include" | "Time" | "Obligations" => Ok(()),
            k => match Trigger::from_name(k) {
                Some(trigger) => {
                    let args = tactics::owned(body(rest));
                    Ok(self.trigger(trigger, &args).map_err(|m| sem_at(m, kw_span.unwrap_or((0, 0))))?)
                }
                None => Err(sem_at("Syntax error: illegal begin of vernac.", kw_span.unwrap_or((0, 0))).into()),
            },
        }
    }

    fn sleep(&self, d: Duration) -> Result<(), Stop> {
        match self.world.cfg.deadline {
            Some(deadline) => {
                let left = deadline.saturating_duration_since(Instant::now());
                if d >= left {
                    std::thread::sleep(left);
                    return Err(Stop::Timeout);
                }
                std::thread::sleep(d);
                Ok(())
            }
            None => {
                std::thread::sleep(d);
                Ok(())
            }
        }
    }

    fn set_flag(&mut self, locality: Option<&str>, on: bool, rest: &[Token<'_>]) {
        let name: Vec<&str> = body(rest).iter().take_while(|t| t.is_ident()).map(|t| t.text).collect();
        let name = name.join(" ");
        self.flags.insert(name.clone(), on);
        let at_file = self.scopes.len() == 1;
        match locality {
            Some("Global") if at_file => self.leaked.push((name, on)),
            Some("Export") => {
                let cur = self.current_module();
                self.world.modules.entry(cur).or_default().export_flags.push((name, on));
            }
            _ => {}
        }
    }

    fn push_scope(&mut self, kind: ScopeKind, name: &str, export: bool) {
        let path = if kind == ScopeKind::Section { self.current_path().to_string() } else { join(self.current_path(), name) };
        self.scopes.push(Scope {
            kind,
            name: name.to_string(),
            path,
            export,
            opened: Vec::new(),
            vars: HashSet::new(),
            saved_flags: self.flags.clone(),
        });
    }

    fn module(&mut self, rest: &[Token<'_>]) -> Result<(), SemErr> {
        if self.proof.is_some() {
            return Err(sem("Command not supported (Open proofs remain)."));
        }
        let b = body(rest);
        let (is_type, export, skip) = match b.first().map(|t| t.text) {
            Some("Type") => (true, false, 1),
            Some("Export") => (false, true, 1),
            Some("Import") => (false, true, 1),
            _ => (false, false, 0),
        };
        let Some(name) = b.get(skip).filter(|t| t.is_ident() && !t.text.contains('.')) else {
            return Err(sem("Syntax error: expected a module name."));
        };
        let at = Some((name.start, name.end()));
        self.check_fresh(name.text, at)?;
        let tail = &b[skip + 1..];
        if tail.first().is_some_and(|t| t.is("(")) {
            return Err(SemErr { message: "Functors are not supported by this checker.".into(), at });
        }
        let full = join(self.current_path(), name.text);
        if let Some(i) = find_top_level(tail, ":=") {
            let target: Vec<&Token<'_>> = tail[i + 1..].iter().filter(|t| t.is_ident()).collect();
            let mut exports = Vec::new();
            for t in target {
                match self.lookup(t.text, true) {
                    Some(m) => exports.push(m),
                    None => return Err(sem_at(format!("Cannot find module {}.", t.text), (t.start, t.end()))),
                }
            }
            let order = self.world.next_order();
            self.world.modules.insert(full, ModInfo { exports, order, ..ModInfo::default() });
            return Ok(());
        }
        let order = self.world.next_order();
        self.world.modules.insert(full, ModInfo { order, is_type, ..ModInfo::default() });
        let kind = if is_type { ScopeKind::ModuleType } else { ScopeKind::Module };
        self.push_scope(kind, name.text, export);
        Ok(())
    }

    fn end(&mut self, rest: &[Token<'_>]) -> Result<(), SemErr> {
        if self.proof.is_some() {
            return Err(sem("Command not supported (Open proofs remain)."));
        }
        let name = body(rest).first().map(|t| t.text).unwrap_or("");
        if self.scopes.len() == 1 {
            return Err(sem("There is nothing to end."));
        }
        let top = self.scopes.last().expect("scope");
        if top.name != name {
            return Err(sem(format!("Last block to end has name {}.", top.name)));
        }
        let scope = self.scopes.pop().expect("scope");
        self.flags = scope.saved_flags;
        match scope.kind {
            ScopeKind::Module if scope.export => {
                self.open(&scope.path, &mut HashSet::new());
                let cur = self.current_module();
                let info = self.world.modules.entry(cur).or_default();
                if !info.exports.contains(&scope.path) {
                    info.exports.push(scope.path);
                }
            }
            ScopeKind::ModuleType => {
                let prefix = format!("{}.", scope.path);
                self.world.objects.retain(|k, _| !k.starts_with(&prefix));
                self.world.modules.retain(|k, _| !k.starts_with(&prefix));
            }
            _ => {}
        }
        Ok(())
    }

    fn require(&mut self, text: &str, head: &Head<'_>) -> Result<(), Fault> {
        let Some(form) = parse_require(text) else {
            return Err(sem("Syntax error: malformed Require.").into());
        };
        let b = body(head.rest());
        let name_tokens: Vec<&Token<'_>> = b.iter().rev().take(form.names.len()).collect::<Vec<_>>().into_iter().rev().collect();
        for (n, t) in form.names.iter().zip(name_tokens) {
            let at = (t.start, t.end());
            if is_stdlib(form.from.as_deref().unwrap_or(n)) || is_stdlib(n) {
                continue;
            }
            let Some(lib) = self.world.loadpath.resolve(form.from.as_deref(), n).cloned() else {
                let msg = match &form.from {
                    Some(p) => format!("Cannot find a physical path bound to logical path {n} with prefix {p}."),
                    None => format!("Cannot find a physical path bound to logical path {n}."),
                };
                return Err(sem_at(msg, at).into());
            };
            if self.is_root {
                self.names.push((n.clone(), lib.logical.clone()));
            }
            self.load(&lib.logical, &lib.path, at)?;
            let leaked = self.world.modules.get(&lib.logical).map(|m| m.global_flags.clone()).unwrap_or_default();
            for (k, v) in leaked {
                self.flags.insert(k.clone(), v);
                if self.scopes.len() == 1 {
                    self.leaked.push((k, v));
                }
            }
            if form.flavor != Flavor::Plain {
                self.import(&lib.logical, form.flavor == Flavor::Export, Some(at))?;
                if self.is_root {
                    self.names.pop();
                }
            }
        }
        Ok(())
    }

    fn load(&mut self, logical: &str, path: &Path, at: (usize, usize)) -> Result<(), Fault> {
        if self.world.loading.iter().any(|l| l == logical) || logical == self.root {
            return Err(sem_at(format!("Recursive dependency on {logical}."), at).into());
        }
        if self.world.modules.get(logical).is_some_and(|m| m.library) {
            return Ok(());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fault::Stop(Stop::Internal(format!("cannot read {}: {e}", path.display()))))?;
        self.world.loading.push(logical.to_string());
        let result = {
            let mut sub = FileInterp::new(self.world, path.display().to_string(), logical.to_string(), false);
            sub.run(&text)
        };
        self.world.loading.pop();
        result.map_err(Fault::Stop)
    }

    // ----- definitions ---------------------------------------------------------

    fn statement(&mut self, text: &str, head: &Head<'_>) -> Result<(), SemErr> {
        let kw = head.keyword().unwrap_or("");
        let rest = head.rest();
        let Some(name) = rest.first().filter(|t| t.is_ident() && !t.text.contains('.')) else {
            return Err(sem("Syntax error: expected a name."));
        };
        let at = Some((name.start, name.end()));
        let opens = opens_proof(text);
        if opens && self.proof.is_some() {
            return Err(sem("Nested proofs are not allowed."));
        }
        self.check_fresh(name.text, at)?;
        let b = body(rest);
        let def = find_top_level(&b[1..], ":=").map(|i| i + 1);
        let colon = find_top_level(&b[1..def.unwrap_or(b.len())], ":").map(|i| i + 1);
        let binders_end = colon.or(def).unwrap_or(b.len());
        let (mut bound, refs) = binder_list(&b[1..binders_end], &HashSet::new());
        self.check_refs(&refs)?;
        if matches!(kw, "Fixpoint" | "CoFixpoint") {
            bound.push(name.text.to_string());
        }
        let bound: HashSet<String> = bound.into_iter().collect();
        let ty = colon.map(|c| &b[c + 1..def.unwrap_or(b.len())]);
        if let Some(ty) = ty {
            self.check_refs(&free_refs(ty, &bound))?;
        }
        match def {
            Some(d) => {
                let value = &b[d + 1..];
                self.check_refs(&free_refs(value, &bound))?;
                let holes = value.iter().filter(|t| t.is("_")).count();
                if head.program && holes > 0 {
                    let full = join(self.current_path(), name.text);
                    self.programs.push(Program { name: full, pending: holes });
                    return Ok(());
                }
                self.define(name.text, ObjKind::Constant { opaque: false }, at)?;
                Ok(())
            }
            None => {
                let Some(ty) = ty else {
                    return Err(SemErr { message: format!("Cannot infer the type of {} in proof mode.", name.text), at });
                };
                let mut locals = bound.clone();
                locals.extend(bound_inside(ty));
                let full = join(self.current_path(), name.text);
                self.proof = Some(Proof { name: Some(full), admitted: false, locals, obligation: None });
                Ok(())
            }
        }
    }

    fn finish_program(&mut self, idx: usize) -> Result<(), SemErr> {
        let full = self.programs[idx].name.clone();
        if self.world.objects.contains_key(&full) {
            return Ok(());
        }
        let order = self.world.next_order();
        self.world.objects.insert(full, Obj { kind: ObjKind::Constant { opaque: false }, order });
        Ok(())
    }

    fn close_proof(&mut self, kw: &str) -> Result<(), SemErr> {
        let Some(proof) = self.proof.take() else {
            return Err(sem("No focused proof (No proof-editing in progress)."));
        };
        if proof.admitted && matches!(kw, "Qed" | "Save" | "Defined") {
            self.proof = Some(proof);
            return Err(sem(format!(
                "Attempt to save a proof with given up goals. If this is really what you want to do, use Admitted in place of {kw}."
            )));
        }
        if kw == "Abort" {
            return Ok(());
        }
        if let Some(idx) = proof.obligation {
            self.programs[idx].pending -= 1;
            if self.programs[idx].pending == 0 {
                self.finish_program(idx)?;
            }
            return Ok(());
        }
        if let Some(full) = proof.name {
            let order = self.world.next_order();
            self.world.objects.insert(full, Obj { kind: ObjKind::Constant { opaque: kw != "Defined" }, order });
        }
        Ok(())
    }

    fn ltac(&mut self, text: &str, rest: &[Token<'_>]) -> Result<(), SemErr> {
        let Some(name) = rest.first().filter(|t| t.is_ident()) else {
            return Err(sem("Syntax error: expected a tactic name."));
        };
        let Some(def) = rest.iter().position(|t| t.is(":=")) else {
            return Err(sem("Syntax error: expected `:=` in Ltac definition."));
        };
        let params = rest[1..def].iter().filter(|t| t.is_ident()).map(|t| t.text.to_string()).collect();
        let end = rest.last().filter(|t| t.is(".")).map_or(text.len(), |t| t.start);
        let body_text = text[rest[def].end()..end].trim().to_string();
        self.define(name.text, ObjKind::Ltac { params, body: body_text }, Some((name.start, name.end())))?;
        Ok(())
    }

    fn assumption(&mut self, kw: &str, rest: &[Token<'_>]) -> Result<(), SemErr> {
        let b = body(rest);
        let (names, refs): (Vec<(String, _)>, Vec<Reference>) =
            if b.first().is_some_and(|t| matches!(t.text, "(" | "{" | "[" | "`")) {
                let (names, refs) = binder_list(b, &HashSet::new());
                (names.into_iter().map(|n| (n, span_of(b).unwrap_or((0, 0)))).collect(), refs)
            } else {
                let colon = find_top_level(b, ":").unwrap_or(b.len());
                let names = b[..colon].iter().filter(|t| t.is_ident()).map(|t| (t.text.to_string(), (t.start, t.end()))).collect();
                let refs = if colon < b.len() { free_refs(&b[colon + 1..], &HashSet::new()) } else { Vec::new() };
                (names, refs)
            };
        if names.is_empty() {
            return Err(sem("Syntax error: expected names."));
        }
        self.check_refs(&refs)?;
        let sectional = matches!(kw, "Variable" | "Variables" | "Context" | "Hypothesis" | "Hypotheses");
        let in_section = self.scopes.last().is_some_and(|s| s.kind == ScopeKind::Section);
        for (n, at) in names {
            if sectional && in_section {
                self.scopes.last_mut().expect("section").vars.insert(n);
            } else {
                self.define(&n, ObjKind::Constant { opaque: true }, Some(at))?;
            }
        }
        Ok(())
    }

    fn inductive(&mut self, text: &str, rest: &[Token<'_>]) -> Result<(), SemErr> {
        let names = vermin_core::sentence_model::introduced_names(text);
        if names.is_empty() {
            return Err(sem("Syntax error: expected a type name."));
        }
        let b = body(rest);
        let mut bound: HashSet<String> = names.iter().cloned().collect();
        bound.extend(paren_binder_names(b));
        // Record constructor names (`mk` in `:= mk { ... }`) are bound too.
        if let Some(d) = find_top_level(b, ":=") {
            if let Some(t) = b.get(d + 1).filter(|t| t.is_ident()) {
                bound.insert(t.text.to_string());
            }
        }
        self.check_refs(&free_refs(&b[1.min(b.len())..], &bound))?;
        for n in names {
            self.define(&n, ObjKind::Constant { opaque: false }, None)?;
        }
        Ok(())
    }

    // ----- tactics ---------------------------------------------------------------

    fn tactic_sentence(&mut self, head: &Head<'_>) -> Result<(), Fault> {
        let mut toks = tactics::owned(body(&head.tokens[head.index..]));
        if toks.len() >= 2 && toks[1].is(":") && (toks[0].is("all") || toks[0].kind == TokenKind::Number) {
            toks.drain(..2);
        }
        if toks.is_empty() {
            return Ok(());
        }
        if self.proof.is_none() {
            return Err(sem_at("Syntax error: illegal begin of vernac.", (toks[0].start, toks[0].start + toks[0].text.len())).into());
        }
        let tac = tactics::parse(&toks).map_err(|e| sem_at(format!("Syntax error: {}.", e.message), (e.start, e.start + 1)))?;
        match self.eval(&tac, &Ctx::default(), 0, None) {
            Ok(()) => Ok(()),
            Err(TacErr::Fatal(f)) => Err(f),
            Err(TacErr::Fail { level, msg }) => {
                let msg = if msg.is_empty() { String::new() } else { format!(": {msg}") };
                let level = if level > 0 { format!(" (level {level})") } else { String::new() };
                Err(sem(format!("Tactic failure{msg}{level}.")).into())
            }
        }
    }

    fn site(tok: &Tok, site: Option<(usize, usize)>) -> (usize, usize) {
        site.unwrap_or((tok.start, tok.start + tok.text.len()))
    }

    fn eval(&mut self, tac: &Tac, ctx: &Ctx, depth: usize, site: Option<(usize, usize)>) -> Result<(), TacErr> {
        match tac {
            Tac::Idtac => Ok(()),
            Tac::Seq(parts) => parts.iter().try_for_each(|t| self.eval(t, ctx, depth, site)),
            Tac::Or(a, b) => match self.eval(a, ctx, depth, site) {
                Err(TacErr::Fail { level: 0, .. }) => self.eval(b, ctx, depth, site),
                r => r,
            },
            Tac::Try(a) | Tac::Repeat(a) => match self.eval(a, ctx, depth, site) {
                Err(TacErr::Fail { level: 0, .. }) => Ok(()),
                Err(TacErr::Fail { level, msg }) => Err(TacErr::Fail { level: level - 1, msg }),
                r => r,
            },
            Tac::Abstract(a) => self.eval(a, ctx, depth, site),
            Tac::First(alts) => {
                for a in alts {
                    match self.eval(a, ctx, depth, site) {
                        Err(TacErr::Fail { level: 0, .. }) => continue,
                        r => return r,
                    }
                }
                Err(TacErr::Fail { level: 0, msg: "No applicable tactic".into() })
            }
            Tac::Fail { level, msg } => {
                let parts: Vec<String> = msg
                    .iter()
                    .map(|t| match ctx.vars.get(&t.text) {
                        Some(v) => v.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" "),
                        None if t.kind == TokenKind::Str => unquote(&t.text),
                        None => t.text.clone(),
                    })
                    .collect();
                Err(TacErr::Fail { level: *level, msg: parts.join(" ") })
            }
            Tac::Admit => {
                if let Some(p) = self.proof.as_mut() {
                    p.admitted = true;
                }
                Ok(())
            }
            Tac::Trigger { kind, args } => {
                let at = site.unwrap_or_else(|| span_tok(args).unwrap_or((0, 0)));
                self.trigger(*kind, args).map_err(|m| TacErr::from(sem_at(m, at)))
            }
            Tac::Match { kind, branches } => {
                for (pat, body) in branches {
                    let mut inner = ctx.clone();
                    for w in pat.windows(2) {
                        if w[0].is("?") && w[1].is_ident() {
                            inner.vars.insert(w[1].text.clone(), vec![w[1].clone()]);
                        }
                    }
                    match (kind, self.eval(body, &inner, depth, site)) {
                        (MatchKind::Match, Err(TacErr::Fail { level: 0, .. })) => continue,
                        (_, r) => return r,
                    }
                }
                Err(TacErr::Fail { level: 0, msg: "No matching clauses for match".into() })
            }
            Tac::Let { name, value, body } => {
                let mut inner = ctx.clone();
                inner.vars.insert(name.clone(), value.clone());
                self.eval(body, &inner, depth, site)
            }
            Tac::Call { name, args } => self.call(name, args, ctx, depth, site),
        }
    }

    fn call(&mut self, name: &Tok, args: &[Tok], ctx: &Ctx, depth: usize, site: Option<(usize, usize)>) -> Result<(), TacErr> {
        let n = name.text.as_str();
        if ctx.vars.contains_key(n) {
            return Ok(());
        }
        if BINDING_TACTICS.contains(&n) {
            if let Some(p) = self.proof.as_mut() {
                p.locals.extend(args.iter().filter(|t| t.is_ident()).map(|t| t.text.clone()));
            }
            return Ok(());
        }
        if n == "unfold" {
            for t in args.iter().take_while(|t| !t.is("in")).filter(|t| t.is_ident()) {
                let at = Self::site(t, site);
                let Some(full) = self.lookup(&t.text, false) else {
                    return Err(sem_at(format!("The reference {} was not found in the current environment.", t.text), at).into());
                };
                if matches!(self.world.objects[&full].kind, ObjKind::Constant { opaque: true }) {
                    return Err(sem_at(format!("Cannot coerce {} to an evaluable reference.", t.text), at).into());
                }
            }
            return Ok(());
        }
        if REFERENCING_TACTICS.contains(&n) {
            let text: String = args.iter().map(|t| format!("{} ", t.text)).collect();
            let toks = vermin_core::sentence_model::lexer::tokenize(&text);
            let mut bound: HashSet<String> = self.proof.as_ref().map(|p| p.locals.clone()).unwrap_or_default();
            bound.extend(ctx.vars.keys().cloned());
            for r in free_refs(&toks, &bound) {
                let hyp = r.name.strip_prefix('H').is_some_and(|d| d.chars().all(|c| c.is_ascii_digit()));
                if matches!(r.name.as_str(), "in" | "with" | "at" | "by") || hyp || self.term_resolves(&r.name) {
                    continue;
                }
                // Map the offset back onto the argument token it came from.
                let tok = args.iter().find(|t| t.text == r.name).unwrap_or(name);
                return Err(sem_at(format!("The reference {} was not found in the current environment.", r.name), Self::site(tok, site)).into());
            }
            return Ok(());
        }
        if PLAIN_TACTICS.contains(&n) {
            return Ok(());
        }
        let at = Self::site(name, site);
        let found = self.lookup(n, false).and_then(|full| match &self.world.objects[&full].kind {
            ObjKind::Ltac { params, body } => Some((params.clone(), body.clone())),
            _ => None,
        });
        let Some((params, body)) = found else {
            return Err(sem_at(format!("The reference {n} was not found in the current environment."), at).into());
        };
        if depth >= MAX_LTAC_DEPTH {
            return Err(sem_at("Ltac call stack overflow.", at).into());
        }
        let mut inner = Ctx::default();
        for (p, a) in params.iter().zip(tactics::split_args(args)) {
            inner.vars.insert(p.clone(), a);
        }
        let parsed = tactics::parse(&lex(&body)).map_err(|e| sem_at(format!("Syntax error in tactic {n}: {}.", e.message), at))?;
        self.eval(&parsed, &inner, depth + 1, Some(at))
    }

    /// The fail version's injected bugs. `Ok` under the pass version.
    fn trigger(&self, kind: Trigger, args: &[Tok]) -> Result<(), String> {
        if self.world.cfg.version == Version::Pass {
            return Ok(());
        }
        let n = self.world.order;
        let root = &self.root;
        Err(match kind {
            Trigger::Bug => {
                let text: Vec<String> = args.iter().map(|t| unquote(&t.text)).collect();
                if text.is_empty() { "Anomaly: bug triggered.".to_string() } else { text.join(" ") }
            }
            Trigger::Universe => {
                let a = self.world.seed % 100_000;
                let b = (self.world.seed / 100_000) % 100_000;
                format!("Universe inconsistency. Cannot enforce {root}.u{a} <= {root}.u{b} because {root}.u{b} < {root}.u{a}.")
            }
            Trigger::BuggedTactic => {
                format!("Unsatisfied constraints: {root}.u{n} <= {root}.u{} (maybe a bugged tactic).", n + 1)
            }
            Trigger::Numbered => format!("Unable to unify \"?X{n}\" with \"nat\"."),
            Trigger::Forgotten => format!("Anomaly \"Universe {root}.u{n} undefined (forgotten universe).\" Please report."),
        })
    }
}

fn span_tok(toks: &[Tok]) -> Option<(usize, usize)> {
    let first = toks.first()?;
    let last = toks.last()?;
    Some((first.start, last.start + last.text.len()))
}
