use std::collections::HashSet;

use super::{Pass, PassContext, Site, SiteKind};
use crate::inliner::{parse_import, parse_require, render_require, RequireForm};
use crate::sentence_model::lexer::{find_top_level, tokenize, TokenKind};
use crate::sentence_model::{
    closer_keyword, introduced_names, is_closed_proof, is_obligation_block, Block, BlockKind, BlockTree, Change,
    Document, Edit, Head, SentenceKind,
};

/// Suffix of the axiom backing a transparently admitted definition.
pub const AXIOM_SUFFIX: &str = "_admitted";

fn sid(doc: &Document, i: usize) -> u64 {
    doc.sentences()[i].id.0
}

fn innermost_error_block(tree: &BlockTree, cx: &PassContext<'_>) -> Option<std::ops::Range<usize>> {
    cx.error_index.and_then(|e| tree.innermost(e)).map(|b| b.range.clone())
}

fn holds_error(b: &Block, cx: &PassContext<'_>) -> bool {
    cx.error_index.is_some_and(|e| b.contains(e))
}

fn all_tokens_after(doc: &Document, from: usize) -> HashSet<String> {
    let mut set = HashSet::new();
    for s in &doc.sentences()[from.min(doc.len())..] {
        for t in tokenize(&s.text) {
            if t.kind == TokenKind::Ident {
                set.insert(t.text.to_string());
                set.extend(t.components().map(str::to_string));
            }
        }
    }
    set
}

fn doc_tokens(doc: &Document) -> HashSet<String> {
    all_tokens_after(doc, 0)
}

/// Deletes everything after the sentence the error is reported at.
pub struct TruncateAfterError;

impl Pass for TruncateAfterError {
    fn name(&self) -> &'static str {
        "truncate_after_error"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        match cx.error_index {
            Some(e) if e + 1 < doc.len() => {
                vec![Site::plain(format!("truncate:{}", sid(doc, e)), vec![Change::delete(e + 1..doc.len()).into()])]
            }
            Some(_) => Vec::new(),
            None => {
                log::info!("error sentence not located; truncation skipped");
                Vec::new()
            }
        }
    }

    fn max_sweeps(&self) -> u32 {
        1
    }
}

impl TruncateAfterError {
    /// The document cut after sentence `error_index` (identity if it is last).
    pub fn apply(doc: &Document, error_index: usize) -> Document {
        if error_index + 1 >= doc.len() {
            return doc.clone();
        }
        doc.apply(&Change::delete(error_index + 1..doc.len()).into())
    }
}

/// Removes named blocks whose names never occur later in the file.
pub struct RemoveUnusedDefinitions;

impl Pass for RemoveUnusedDefinitions {
    fn name(&self) -> &'static str {
        "remove_unused_definitions"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let mut blocks: Vec<&Block> = tree
            .all()
            .into_iter()
            .filter(|b| matches!(b.kind, BlockKind::Loose | BlockKind::ProofBlock) && b.balanced && !holds_error(b, cx))
            .collect();
        blocks.sort_by_key(|b| std::cmp::Reverse(b.range.start));
        blocks
            .into_iter()
            .filter_map(|b| {
                let names = introduced_names(&doc.sentences()[b.range.start].text);
                if names.is_empty() {
                    return None;
                }
                let later = all_tokens_after(doc, b.range.end);
                if names.iter().any(|n| later.contains(n)) {
                    return None;
                }
                Some(Site::plain(format!("unused:{}", sid(doc, b.range.start)), vec![Change::delete(b.range.clone()).into()]))
            })
            .collect()
    }
}

/// Replaces each obligation proof with `Admit Obligations.`.
pub struct AdmitObligations;

impl Pass for AdmitObligations {
    fn name(&self) -> &'static str {
        "admit_obligations"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let s = doc.sentences();
        tree.all()
            .into_iter()
            .filter(|b| is_obligation_block(s, b) && is_closed_proof(s, b) && !holds_error(b, cx))
            .map(|b| {
                Site::plain(
                    format!("obligation:{}", sid(doc, b.range.start)),
                    vec![Change::replace(b.range.clone(), "Admit Obligations.").into()],
                )
            })
            .collect()
    }
}

/// A statement split into the parts the admit and split passes rebuild.
struct Statement<'a> {
    keyword: &'a str,
    name: &'a str,
    binders: &'a str,
    ty: Option<&'a str>,
    body: Option<&'a str>,
    program: bool,
}

fn parse_statement(text: &str) -> Option<Statement<'_>> {
    let head = Head::parse(text);
    let keyword = head.keyword()?;
    let rest = head.rest();
    let name = rest.first().filter(|t| t.is_ident())?;
    let after = &rest[1..];
    let term = after.iter().rposition(|t| t.is("."))?;
    let after = &after[..term];
    let def = find_top_level(after, ":=");
    let colon = find_top_level(after, ":").filter(|&c| def.is_none_or(|d| c < d));
    let end = rest[1 + term].start;
    let slice = |a: usize, b: usize| text[a..b].trim();
    let binders_end = colon.or(def).map(|i| after[i].start).unwrap_or(end);
    let ty = colon.map(|c| slice(after[c].end(), def.map(|d| after[d].start).unwrap_or(end)));
    let body = def.map(|d| slice(after[d].end(), end));
    Some(Statement {
        keyword,
        name: name.text,
        binders: slice(name.end(), binders_end),
        ty,
        body,
        program: head.program,
    })
}

fn fresh_name(base: &str, used: &HashSet<String>) -> String {
    if !used.contains(base) {
        return base.to_string();
    }
    (0..).map(|k| format!("{base}{k}")).find(|n| !used.contains(n)).expect("unbounded")
}

fn is_transparently_admitted(doc: &Document, b: &Block) -> bool {
    let s = &doc.sentences()[b.range.clone()];
    let body: Vec<String> = s[1..].iter().map(|x| x.text.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
    body.len() == 3
        && body[0] == "Proof."
        && body[2] == "Defined."
        && body[1].starts_with("exact (")
        && body[1].trim_end_matches(").").ends_with(AXIOM_SUFFIX)
}

/// Replaces proofs with `Admitted.`, or failing that with an axiom-backed
/// transparent definition of the same type.
pub struct AdmitProofs;

impl Pass for AdmitProofs {
    fn name(&self) -> &'static str {
        "admit_proofs"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let s = doc.sentences();
        let used = doc_tokens(doc);
        tree.all()
            .into_iter()
            .filter(|b| {
                b.kind == BlockKind::ProofBlock
                    && is_closed_proof(s, b)
                    && !is_obligation_block(s, b)
                    && !holds_error(b, cx)
                    && !(b.len() == 2 && closer_keyword(&s[b.range.end - 1].text).as_deref() == Some("Admitted"))
                    && !is_transparently_admitted(doc, b)
            })
            .map(|b| {
                let stmt = &s[b.range.start].text;
                let mut alts: Vec<Edit> = vec![Change::replace(b.range.clone(), format!("{stmt}\nAdmitted.")).into()];
                if let Some(st) = parse_statement(stmt).filter(|st| st.keyword != "Goal" && st.body.is_none()) {
                    if let Some(ty) = st.ty {
                        let full_ty = if st.binders.is_empty() { ty.to_string() } else { format!("forall {}, {ty}", st.binders) };
                        let axiom = fresh_name(&format!("{}{AXIOM_SUFFIX}", st.name), &used);
                        let text = format!(
                            "Axiom {axiom} : {full_ty}.\nDefinition {} : {full_ty} := {axiom}.",
                            st.name
                        );
                        alts.push(Change::replace(b.range.clone(), text).into());
                    }
                }
                Site::plain(format!("admit:{}", sid(doc, b.range.start)), alts)
            })
            .collect()
    }
}

/// Span of `abstract <tac>` starting at byte `start` within `text`.
fn abstract_span(text: &str, tokens: &[crate::sentence_model::lexer::Token<'_>], k: usize) -> (usize, usize) {
    let start = tokens[k].start;
    let mut depth = 0i32;
    let mut j = k + 1;
    if tokens.get(j).is_some_and(|t| t.is("(")) {
        while j < tokens.len() {
            match tokens[j].text {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        return (start, tokens[j].end());
                    }
                }
                _ => {}
            }
            j += 1;
        }
        return (start, text.len());
    }
    let mut end = tokens[k].end();
    while j < tokens.len() {
        let t = &tokens[j];
        match t.text {
            "(" | "[" => depth += 1,
            ")" | "]" if depth == 0 => break,
            ")" | "]" => depth -= 1,
            ";" | "|" | "." if depth == 0 => break,
            _ => {}
        }
        end = t.end();
        j += 1;
    }
    (start, end)
}

/// Replaces `abstract` subproofs with `admit`, closing the proof with
/// `Admitted.` accordingly.
pub struct AdmitAbstractSubproofs;

impl Pass for AdmitAbstractSubproofs {
    fn name(&self) -> &'static str {
        "admit_abstract_subproofs"
    }

    fn sites(&self, doc: &Document, _cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let s = doc.sentences();
        let mut out = Vec::new();
        for b in tree.all().into_iter().filter(|b| b.kind == BlockKind::ProofBlock) {
            let closer = is_closed_proof(s, b).then(|| b.range.end - 1);
            let end = closer.unwrap_or(b.range.end);
            for i in b.range.start + 1..end {
                let text = &s[i].text;
                let tokens = tokenize(text);
                let hits: Vec<usize> = tokens.iter().enumerate().filter(|(_, t)| t.is("abstract")).map(|(k, _)| k).collect();
                for (n, &k) in hits.iter().enumerate() {
                    let (a, z) = abstract_span(text, &tokens, k);
                    let replaced = format!("{}admit{}", &text[..a], &text[z..]);
                    let mut edit = Edit::single(Change::replace(i..i + 1, replaced));
                    if let Some(c) = closer {
                        if matches!(closer_keyword(&s[c].text).as_deref(), Some("Qed" | "Defined")) {
                            edit.changes.push(Change::replace(c..c + 1, "Admitted."));
                        }
                    }
                    out.push(Site::plain(format!("abstract:{}:{n}", sid(doc, i)), vec![edit]));
                }
            }
        }
        out
    }
}

/// Turns `Module X.` into `Module Export X.`.
pub struct ExportModules;

impl Pass for ExportModules {
    fn name(&self) -> &'static str {
        "export_modules"
    }

    fn sites(&self, doc: &Document, _cx: &PassContext<'_>) -> Vec<Site> {
        doc.sentences()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SentenceKind::ScopeOpener)
            .filter_map(|(i, s)| {
                let head = Head::parse(&s.text);
                let rest = head.rest();
                let plain = head.keyword() == Some("Module")
                    && rest.len() == 2
                    && rest[0].is_ident()
                    && !matches!(rest[0].text, "Type" | "Export" | "Import")
                    && rest[1].is(".");
                plain.then(|| {
                    Site::plain(
                        format!("export:{}", s.id.0),
                        vec![Change::replace(i..i + 1, format!("Module Export {}.", rest[0].text)).into()],
                    )
                })
            })
            .collect()
    }
}

fn singleton_site(key: String, i: usize, parts: Vec<String>) -> Site {
    Site::plain(key, vec![Change::replace(i..i + 1, parts.join("\n")).into()])
}

/// `Import A B.` becomes `Import A. Import B.`.
pub struct SplitImports;

impl Pass for SplitImports {
    fn name(&self) -> &'static str {
        "split_imports"
    }

    fn sites(&self, doc: &Document, _cx: &PassContext<'_>) -> Vec<Site> {
        doc.sentences()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SentenceKind::ImportLike)
            .filter_map(|(i, s)| {
                let (flavor, names) = parse_import(&s.text)?;
                let word = if flavor == crate::inliner::Flavor::Export { "Export" } else { "Import" };
                (names.len() > 1).then(|| {
                    singleton_site(format!("split_import:{}", s.id.0), i, names.iter().map(|n| format!("{word} {n}.")).collect())
                })
            })
            .collect()
    }
}

/// `Require A B.` becomes `Require A. Require B.`, keeping any flavor and
/// `From` prefix.
pub struct SplitRequires;

impl Pass for SplitRequires {
    fn name(&self) -> &'static str {
        "split_requires"
    }

    fn sites(&self, doc: &Document, _cx: &PassContext<'_>) -> Vec<Site> {
        doc.sentences()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SentenceKind::RequireLike)
            .filter_map(|(i, s)| {
                let form = parse_require(&s.text)?;
                (form.names.len() > 1).then(|| {
                    let parts = form
                        .names
                        .iter()
                        .map(|n| render_require(&RequireForm { names: vec![n.clone()], ..form.clone() }))
                        .collect();
                    singleton_site(format!("split_require:{}", s.id.0), i, parts)
                })
            })
            .collect()
    }
}

/// Removes one block at a time, from the end of the file backward.
pub struct RemoveBlocksBackward;

impl Pass for RemoveBlocksBackward {
    fn name(&self) -> &'static str {
        "remove_blocks_backward"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let mut blocks: Vec<&Block> = tree.all().into_iter().filter(|b| b.balanced && !holds_error(b, cx)).collect();
        blocks.sort_by_key(|b| std::cmp::Reverse(b.range.end));
        blocks
            .into_iter()
            .map(|b| Site::plain(format!("block:{}", sid(doc, b.range.start)), vec![Change::delete(b.range.clone()).into()]))
            .collect()
    }
}

/// Removes scopes with nothing inside.
pub struct RemoveEmptyScopes;

impl Pass for RemoveEmptyScopes {
    fn name(&self) -> &'static str {
        "remove_empty_scopes"
    }

    fn sites(&self, doc: &Document, _cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let s = doc.sentences();
        tree.all()
            .into_iter()
            .filter(|b| {
                b.kind == BlockKind::Scope
                    && b.balanced
                    && (b.range.start + 1..b.range.end - 1).all(|i| s[i].kind == SentenceKind::Blank)
            })
            .map(|b| Site::plain(format!("empty:{}", sid(doc, b.range.start)), vec![Change::delete(b.range.clone()).into()]))
            .collect()
    }
}

/// Rewrites `Definition n := body.` into proof mode so the body can later be
/// admitted.
pub struct SplitDefinitions;

impl Pass for SplitDefinitions {
    fn name(&self) -> &'static str {
        "split_definitions"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let tree = doc.blocks();
        let error_block = innermost_error_block(&tree, cx);
        doc.sentences()
            .iter()
            .enumerate()
            .filter(|(i, s)| s.kind == SentenceKind::Command && error_block.as_ref().is_none_or(|r| !r.contains(i)))
            .filter_map(|(i, s)| {
                let st = parse_statement(&s.text)?;
                let body = st.body?;
                if st.keyword != "Definition" || st.program || body.is_empty() {
                    return None;
                }
                if tokenize(body).len() == 1 && body.ends_with(AXIOM_SUFFIX) {
                    return None;
                }
                let binders = if st.binders.is_empty() { String::new() } else { format!(" {}", st.binders) };
                let ty = st.ty.map(|t| format!(" : {t}")).unwrap_or_default();
                let text = format!("Definition {}{binders}{ty}.\nProof.\nexact ({body}).\nDefined.", st.name);
                Some(Site::plain(format!("split_def:{}", s.id.0), vec![Change::replace(i..i + 1, text).into()]))
            })
            .collect()
    }
}

/// Inserts transitive requires, then inlines dependencies innermost-first.
pub struct InlineDependencies;

impl Pass for InlineDependencies {
    fn name(&self) -> &'static str {
        "inline"
    }

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site> {
        let Some(env) = cx.inline else { return Vec::new() };
        if !cx.progress.transitive_inserted && !cx.inline_all {
            let alternatives = env.insert_transitive_requires(doc).into_iter().collect();
            return vec![Site { key: "transitive".into(), kind: SiteKind::TransitiveRequires, alternatives, uid_counters: Vec::new() }];
        }
        env.eligible(doc, cx.progress)
            .into_iter()
            .map(|dep| {
                let variants = env.inline_variants(doc, &dep, cx.progress);
                let uid_counters = variants.iter().map(|(v, _)| v.uid_counter).collect();
                Site {
                    key: format!("inline:{dep}"),
                    kind: SiteKind::Inline { dep },
                    alternatives: variants.into_iter().map(|(_, e)| e).collect(),
                    uid_counters,
                }
            })
            .collect()
    }

    fn max_sweeps(&self) -> u32 {
        1
    }
}
