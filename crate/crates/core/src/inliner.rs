//! Turning a multi-file reproduction into a single file.
//!
//! Dependencies are inlined innermost-first, each wrapped in a uniquely named
//! module whose nested `Module Export` layers reproduce the library's logical
//! path, so every suffix of the original qualified names keeps resolving.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::loadpath::{is_stdlib, LoadPath, SearchPath};
use crate::oracle::Checker;
use crate::sentence_model::lexer::tokenize;
use crate::sentence_model::{Change, Document, Edit, Head, ParseError, SentenceKind};
use crate::state::InlineProgress;

pub const UID_PREFIX: &str = "__vermin_inline_";

#[derive(Debug, Error)]
pub enum InlineError {
    #[error("cannot resolve `Require {name}` in {file}")]
    UnresolvableRequire { name: String, file: PathBuf },
    #[error("cyclic dependency: {}", cycle.join(" -> "))]
    CyclicDependency { cycle: Vec<String> },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("no resolution for `{0}`")]
    MissingResolution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Plain,
    Import,
    Export,
}

impl Flavor {
    fn word(self) -> &'static str {
        match self {
            Flavor::Plain => "",
            Flavor::Import => " Import",
            Flavor::Export => " Export",
        }
    }
}

/// `[From P] Require [Import|Export] n1 ... nk.`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequireForm {
    pub from: Option<String>,
    pub flavor: Flavor,
    pub names: Vec<String>,
}

fn ident_list(tokens: &[crate::sentence_model::lexer::Token<'_>]) -> Option<Vec<String>> {
    let (last, body) = tokens.split_last()?;
    if !last.is(".") || body.is_empty() || !body.iter().all(|t| t.is_ident()) {
        return None;
    }
    Some(body.iter().map(|t| t.text.to_string()).collect())
}

pub fn parse_require(text: &str) -> Option<RequireForm> {
    let head = Head::parse(text);
    let rest = head.rest();
    let (from, rest) = match head.keyword()? {
        "Require" => (None, rest),
        "From" if rest.len() > 1 && rest[0].is_ident() && rest[1].is("Require") => {
            (Some(rest[0].text.to_string()), &rest[2..])
        }
        _ => return None,
    };
    let (flavor, rest) = match rest.first().map(|t| t.text) {
        Some("Import") => (Flavor::Import, &rest[1..]),
        Some("Export") => (Flavor::Export, &rest[1..]),
        _ => (Flavor::Plain, rest),
    };
    Some(RequireForm { from, flavor, names: ident_list(rest)? })
}

pub fn render_require(form: &RequireForm) -> String {
    let from = form.from.as_ref().map(|p| format!("From {p} ")).unwrap_or_default();
    format!("{from}Require{} {}.", form.flavor.word(), form.names.join(" "))
}

/// `Import n1 ... nk.` or `Export n1 ... nk.`
pub fn parse_import(text: &str) -> Option<(Flavor, Vec<String>)> {
    let head = Head::parse(text);
    let flavor = match head.keyword()? {
        "Import" => Flavor::Import,
        "Export" => Flavor::Export,
        _ => return None,
    };
    Some((flavor, ident_list(head.rest())?))
}

fn render_import(flavor: Flavor, names: &[String]) -> String {
    format!("{} {}.", flavor.word().trim_start(), names.join(" "))
}

#[derive(Debug, Clone)]
pub struct DepNode {
    pub logical: String,
    pub path: PathBuf,
    pub doc: Document,
    /// Non-standard-library libraries required, in order of first mention.
    pub requires: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DependencyGraph {
    pub root: String,
    pub nodes: BTreeMap<String, DepNode>,
    loadpath: LoadPath,
}

fn read_doc(path: &Path) -> Result<Document, InlineError> {
    let text = std::fs::read_to_string(path).map_err(|source| InlineError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Document::parse(name, &text).map_err(|source| InlineError::Parse { path: path.to_path_buf(), source })
}

impl DependencyGraph {
    pub fn build(root: &Path, paths: &[SearchPath], base: &Path) -> Result<Self, InlineError> {
        let loadpath = LoadPath::scan(paths, base);
        let root_name = loadpath.logical_name_of(root).map(str::to_string).unwrap_or_else(|| {
            root.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "Top".to_string())
        });
        let mut graph = DependencyGraph { root: root_name.clone(), nodes: BTreeMap::new(), loadpath };
        let mut stack = vec![(root_name, root.to_path_buf())];
        while let Some((logical, path)) = stack.pop() {
            if graph.nodes.contains_key(&logical) {
                continue;
            }
            let doc = read_doc(&path)?;
            let mut requires = Vec::new();
            for s in doc.sentences().iter().filter(|s| s.kind == SentenceKind::RequireLike) {
                let Some(form) = parse_require(&s.text) else { continue };
                for n in &form.names {
                    match graph.loadpath.resolve(form.from.as_deref(), n) {
                        Some(lib) => {
                            if !requires.contains(&lib.logical) {
                                requires.push(lib.logical.clone());
                            }
                            stack.push((lib.logical.clone(), lib.path.clone()));
                        }
                        None if is_stdlib(form.from.as_deref().unwrap_or(n)) => {}
                        None => return Err(InlineError::UnresolvableRequire { name: n.clone(), file: path.clone() }),
                    }
                }
            }
            graph.nodes.insert(logical.clone(), DepNode { logical, path, doc, requires });
        }
        graph.check_acyclic()?;
        Ok(graph)
    }

    fn check_acyclic(&self) -> Result<(), InlineError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit<'a>(
            g: &'a DependencyGraph,
            n: &'a str,
            marks: &mut HashMap<&'a str, Mark>,
            path: &mut Vec<&'a str>,
        ) -> Result<(), InlineError> {
            match marks.get(n) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Active) => {
                    let from = path.iter().position(|p| *p == n).unwrap_or(0);
                    let mut cycle: Vec<String> = path[from..].iter().map(|s| s.to_string()).collect();
                    cycle.push(n.to_string());
                    return Err(InlineError::CyclicDependency { cycle });
                }
                None => {}
            }
            marks.insert(n, Mark::Active);
            path.push(n);
            for d in &g.nodes[n].requires {
                visit(g, d, marks, path)?;
            }
            path.pop();
            marks.insert(n, Mark::Done);
            Ok(())
        }
        let mut marks = HashMap::new();
        for n in self.nodes.keys() {
            visit(self, n, &mut marks, &mut Vec::new())?;
        }
        Ok(())
    }

    /// Dependencies before dependents; ties broken by logical name.
    pub fn topological_order(&self) -> Vec<String> {
        let mut pending: BTreeMap<&str, usize> =
            self.nodes.iter().map(|(k, n)| (k.as_str(), n.requires.len())).collect();
        let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, &c)| c == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            pending.remove(n);
            order.push(n.to_string());
            for (k, node) in &self.nodes {
                if let Some(c) = pending.get_mut(k.as_str()) {
                    if node.requires.iter().any(|r| r == n) {
                        *c -= 1;
                        if *c == 0 {
                            ready.insert(k);
                        }
                    }
                }
            }
        }
        order
    }

    /// Everything `of` depends on, directly or not, in topological order.
    pub fn transitive_deps(&self, of: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = self.nodes.get(of).map(|n| n.requires.iter().map(String::as_str).collect()).unwrap_or_default();
        while let Some(n) = stack.pop() {
            if seen.insert(n.to_string()) {
                stack.extend(self.nodes[n].requires.iter().map(String::as_str));
            }
        }
        self.topological_order().into_iter().filter(|n| seen.contains(n)).collect()
    }

    /// The graph node a `Require` name refers to, if any.
    pub fn resolve(&self, from: Option<&str>, name: &str) -> Option<String> {
        let lib = self.loadpath.resolve(from, name)?;
        self.nodes.contains_key(&lib.logical).then(|| lib.logical.clone())
    }

    pub fn node(&self, logical: &str) -> Option<&DepNode> {
        self.nodes.get(logical)
    }

    /// Line count of a node's source file.
    pub fn lines_of(&self, logical: &str) -> usize {
        self.nodes.get(logical).map(|n| n.doc.line_count()).unwrap_or(0)
    }
}

/// `Module <uid>. Module Export <c1>. ... <content> ... End <c1>. End <uid>. Import <uid>.`
pub fn wrap_module(content: &str, logical: &str, uid: &str) -> String {
    let comps: Vec<&str> = logical.split('.').filter(|c| !c.is_empty()).collect();
    let mut out = format!("Module {uid}.\n");
    for c in &comps {
        out.push_str(&format!("Module Export {c}.\n"));
    }
    let body = content.trim();
    if !body.is_empty() {
        out.push_str(body);
        out.push('\n');
    }
    for c in comps.iter().rev() {
        out.push_str(&format!("End {c}.\n"));
    }
    out.push_str(&format!("End {uid}.\nImport {uid}."));
    out
}

/// First `UID_PREFIX<n>` with `n >= start` that occurs in none of `texts`.
pub fn fresh_uid(texts: &[&str], start: u64) -> (String, u64) {
    let used: HashSet<&str> = texts.iter().flat_map(|t| tokenize(t)).flat_map(|t| t.components().collect::<Vec<_>>()).collect();
    let mut n = start;
    loop {
        let uid = format!("{UID_PREFIX}{n}");
        if !used.contains(uid.as_str()) {
            return (uid, n);
        }
        n += 1;
    }
}

pub type NameTable = BTreeMap<String, String>;

/// Rewrites names in `Require`/`Import`/`Export` sentences to their qualified
/// form. Standard-library names missing from the table pass through.
pub fn resolve_names(content: &Document, table: &NameTable) -> Result<Document, InlineError> {
    let lookup = |n: &str| -> Result<String, InlineError> {
        match table.get(n) {
            Some(q) => Ok(q.clone()),
            None if is_stdlib(n) => Ok(n.to_string()),
            None => Err(InlineError::MissingResolution(n.to_string())),
        }
    };
    let mut edit = Edit::default();
    for (i, s) in content.sentences().iter().enumerate() {
        let text = match s.kind {
            SentenceKind::RequireLike => {
                let Some(form) = parse_require(&s.text) else { continue };
                let names = form
                    .names
                    .iter()
                    .map(|n| match (&form.from, table.get(n)) {
                        (_, Some(q)) => Ok(q.clone()),
                        (Some(p), None) if is_stdlib(p) => Ok(format!("{p}.{n}")),
                        (_, None) => lookup(n),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                render_require(&RequireForm { from: None, flavor: form.flavor, names })
            }
            SentenceKind::ImportLike => {
                let Some((flavor, names)) = parse_import(&s.text) else { continue };
                let names = names.iter().map(|n| lookup(n)).collect::<Result<Vec<_>, _>>()?;
                render_import(flavor, &names)
            }
            _ => continue,
        };
        if text != s.text {
            edit.changes.push(Change::replace(i..i + 1, text));
        }
    }
    Ok(if edit.changes.is_empty() { content.clone() } else { content.apply(&edit) })
}

/// Removes the libraries selected by `drop` from a `Require` sentence. Import
/// and Export flavors leave behind an `Import`/`Export` of the qualified name.
/// Returns `None` when the sentence names none of them.
fn drop_from_require(text: &str, graph: &DependencyGraph, drop: &dyn Fn(&str) -> bool) -> Option<String> {
    let form = parse_require(text)?;
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for n in &form.names {
        match graph.resolve(form.from.as_deref(), n) {
            Some(q) if drop(&q) => removed.push(q),
            _ => kept.push(n.clone()),
        }
    }
    if removed.is_empty() {
        return None;
    }
    let mut out = Vec::new();
    if !kept.is_empty() {
        out.push(render_require(&RequireForm { names: kept, ..form.clone() }));
    }
    if form.flavor != Flavor::Plain {
        out.push(render_import(form.flavor, &removed));
    }
    Some(out.join("\n"))
}

fn rewrite_requires(doc: &Document, graph: &DependencyGraph, drop: &dyn Fn(&str) -> bool, skip: Option<usize>) -> Vec<Change> {
    doc.sentences()
        .iter()
        .enumerate()
        .filter(|(i, s)| s.kind == SentenceKind::RequireLike && Some(*i) != skip)
        .filter_map(|(i, s)| drop_from_require(&s.text, graph, drop).map(|t| Change::replace(i..i + 1, t)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    AtRequireSite,
    AtTop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InlineVariant {
    pub placement: Placement,
    pub wrapper: String,
    pub uid_counter: u64,
}

/// Graph plus name tables, shared by the inline pass across a run.
pub struct InlineEnv {
    pub graph: DependencyGraph,
    names_source: Option<Arc<dyn Checker>>,
    tables: Mutex<HashMap<String, NameTable>>,
}

impl InlineEnv {
    pub fn new(graph: DependencyGraph, names_source: Option<Arc<dyn Checker>>) -> Self {
        InlineEnv { graph, names_source, tables: Mutex::new(HashMap::new()) }
    }

    /// Name table for a dependency's file: the checker's sidecar when it can
    /// produce one, otherwise the libraries the graph can resolve.
    pub fn names_for(&self, dep: &str) -> NameTable {
        if let Some(t) = self.tables.lock().expect("table lock").get(dep) {
            return t.clone();
        }
        let node = &self.graph.nodes[dep];
        let emitted = self.names_source.as_ref().and_then(|c| c.emit_names(&node.path));
        let table: NameTable = match emitted {
            Some(pairs) => pairs.into_iter().collect(),
            None => {
                let mut t = NameTable::new();
                for s in node.doc.sentences() {
                    if let Some(form) = parse_require(&s.text) {
                        for n in &form.names {
                            if let Some(q) = self.graph.resolve(form.from.as_deref(), n) {
                                t.insert(n.clone(), q);
                            }
                        }
                    }
                }
                t
            }
        };
        self.tables.lock().expect("table lock").insert(dep.to_string(), table.clone());
        table
    }

    /// Graph nodes named by some `Require` in `doc`, with the first index.
    pub fn named(&self, doc: &Document) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for (i, s) in doc.sentences().iter().enumerate() {
            if s.kind != SentenceKind::RequireLike {
                continue;
            }
            let Some(form) = parse_require(&s.text) else { continue };
            for n in &form.names {
                if let Some(q) = self.graph.resolve(form.from.as_deref(), n) {
                    if q != self.graph.root && !out.iter().any(|(x, _)| *x == q) {
                        out.push((q, i));
                    }
                }
            }
        }
        out
    }

    /// Dependencies that may be inlined now, innermost (closest to the target)
    /// first: named in `doc`, not yet tried, and not needed by another
    /// dependency that is still required.
    pub fn eligible(&self, doc: &Document, progress: &InlineProgress) -> Vec<String> {
        let named: Vec<String> = self.named(doc).into_iter().map(|(n, _)| n).collect();
        let blocked: HashSet<String> = named
            .iter()
            .filter(|e| !progress.inlined.contains(e))
            .flat_map(|e| self.graph.transitive_deps(e))
            .collect();
        let mut order = self.graph.topological_order();
        order.reverse();
        order
            .into_iter()
            .filter(|d| {
                named.contains(d) && !blocked.contains(d) && !progress.inlined.contains(d) && !progress.failed.contains(d)
            })
            .collect()
    }

    /// One `Require` per transitive dependency at the top, in dependency
    /// order; existing requires of those libraries are reduced to imports.
    pub fn insert_transitive_requires(&self, doc: &Document) -> Option<Edit> {
        let deps = self.graph.transitive_deps(&self.graph.root);
        if deps.is_empty() {
            return None;
        }
        let header: Vec<String> = deps.iter().map(|d| format!("Require {d}.")).collect();
        let set: HashSet<&str> = deps.iter().map(String::as_str).collect();
        let mut edit = Edit::single(Change::insert(0, header.join("\n")));
        edit.changes.extend(rewrite_requires(doc, &self.graph, &|q| set.contains(q), None));
        Some(edit)
    }

    /// The dependency's content, names resolved, with requires of libraries
    /// already inlined removed.
    pub fn prepared_content(&self, dep: &str, progress: &InlineProgress) -> Result<String, InlineError> {
        let node = &self.graph.nodes[dep];
        let resolved = resolve_names(&node.doc, &self.names_for(dep))?;
        let changes = rewrite_requires(&resolved, &self.graph, &|q| progress.inlined.iter().any(|x| x == q), None);
        let content = if changes.is_empty() { resolved } else { resolved.apply(&Edit { changes }) };
        Ok(content.sentences().iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n"))
    }

    /// The candidate edits for inlining `dep`, require site first. An empty
    /// list means no variant could be built.
    pub fn inline_variants(&self, doc: &Document, dep: &str, progress: &InlineProgress) -> Vec<(InlineVariant, Edit)> {
        let content = match self.prepared_content(dep, progress) {
            Ok(c) => c,
            Err(e) => {
                log::info!("cannot inline {dep}: {e}");
                return Vec::new();
            }
        };
        let rendered = doc.render();
        let (uid, counter) = fresh_uid(&[&rendered, &content], progress.next_uid);
        let wrapped = wrap_module(&content, dep, &uid);
        let is_dep = |q: &str| q == dep;
        let mut out = Vec::new();
        if let Some(&(_, site)) = self.named(doc).iter().find(|(n, _)| n == dep) {
            let rest = drop_from_require(&doc.sentences()[site].text, &self.graph, &is_dep).unwrap_or_default();
            let text = if rest.is_empty() { wrapped.clone() } else { format!("{wrapped}\n{rest}") };
            let mut edit = Edit::single(Change::replace(site..site + 1, text));
            edit.changes.extend(rewrite_requires(doc, &self.graph, &is_dep, Some(site)));
            out.push((InlineVariant { placement: Placement::AtRequireSite, wrapper: uid.clone(), uid_counter: counter }, edit));
        }
        let mut edit = Edit::single(Change::insert(0, wrapped));
        edit.changes.extend(rewrite_requires(doc, &self.graph, &is_dep, None));
        out.push((InlineVariant { placement: Placement::AtTop, wrapper: uid, uid_counter: counter }, edit));
        out
    }

    /// Libraries still required by `doc` that are not standard library.
    pub fn remaining_requires(&self, doc: &Document) -> Vec<String> {
        let mut out = Vec::new();
        for s in doc.sentences().iter().filter(|s| s.kind == SentenceKind::RequireLike) {
            let Some(form) = parse_require(&s.text) else { continue };
            for n in &form.names {
                let q = self
                    .graph
                    .resolve(form.from.as_deref(), n)
                    .unwrap_or_else(|| form.from.as_ref().map(|p| format!("{p}.{n}")).unwrap_or_else(|| n.clone()));
                if !is_stdlib(&q) && !out.contains(&q) {
                    out.push(q);
                }
            }
        }
        out
    }
}
