use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::blocks::{group_blocks, BlockTree};
use super::sentence::{classify_all, sentence_spans, split_sentences, ParseError, Sentence, SentenceId};

/// An ordered sequence of sentences and the layout needed to render it.
///
/// A freshly parsed document remembers the whitespace between its sentences
/// and renders back to the exact input. Once transformed, it renders with a
/// single newline between sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    name: String,
    sentences: Vec<Sentence>,
    /// `gaps[i]` precedes sentence `i`; the last entry trails the document.
    gaps: Option<Vec<String>>,
    next_id: u64,
}

/// Replacement of a contiguous sentence range with freshly split text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Change {
    pub range: Range<usize>,
    pub text: String,
}

impl Change {
    pub fn replace(range: Range<usize>, text: impl Into<String>) -> Self {
        Change { range, text: text.into() }
    }

    pub fn delete(range: Range<usize>) -> Self {
        Change { range, text: String::new() }
    }

    pub fn insert(at: usize, text: impl Into<String>) -> Self {
        Change { range: at..at, text: text.into() }
    }
}

/// A set of non-overlapping changes, applied simultaneously.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Edit {
    pub changes: Vec<Change>,
}

impl Edit {
    pub fn single(change: Change) -> Self {
        Edit { changes: vec![change] }
    }

    pub fn with(mut self, change: Change) -> Self {
        self.changes.push(change);
        self
    }
}

impl From<Change> for Edit {
    fn from(c: Change) -> Self {
        Edit::single(c)
    }
}

impl Document {
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, ParseError> {
        let sentences = split_sentences(text)?;
        let mut gaps = Vec::with_capacity(sentences.len() + 1);
        let mut pos = 0;
        for s in &sentences {
            gaps.push(text[pos..s.span.0].to_string());
            pos = s.span.1;
        }
        gaps.push(text[pos..].to_string());
        let next_id = sentences.len() as u64;
        Ok(Document { name: name.into(), sentences, gaps: Some(gaps), next_id })
    }

    /// Builds a normalized document from sentence texts, assigning fresh ids.
    pub fn from_sentences<S: AsRef<str>>(name: impl Into<String>, texts: &[S]) -> Self {
        let mut doc = Document { name: name.into(), sentences: Vec::new(), gaps: None, next_id: 0 };
        let entries = texts
            .iter()
            .map(|t| {
                let id = SentenceId(doc.next_id);
                doc.next_id += 1;
                (id, t.as_ref().to_string())
            })
            .collect();
        doc.rebuild(entries);
        doc
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_pristine(&self) -> bool {
        self.gaps.is_some()
    }

    pub fn blocks(&self) -> BlockTree {
        group_blocks(&self.sentences)
    }

    pub fn index_of(&self, id: SentenceId) -> Option<usize> {
        self.sentences.iter().position(|s| s.id == id)
    }

    pub fn render(&self) -> String {
        match &self.gaps {
            Some(gaps) => {
                let mut out = String::new();
                for (gap, s) in gaps.iter().zip(&self.sentences) {
                    out.push_str(gap);
                    out.push_str(&s.text);
                }
                out.push_str(gaps.last().map(String::as_str).unwrap_or(""));
                out
            }
            None => render_normalized(&self.sentences),
        }
    }

    pub fn line_count(&self) -> usize {
        self.render().lines().count()
    }

    /// The same sentences, laid out one per line.
    pub fn normalized(&self) -> Document {
        let mut doc = self.clone();
        doc.gaps = None;
        doc.relayout();
        doc
    }

    /// Index of the sentence whose span covers a byte offset of the render.
    pub fn sentence_at_offset(&self, offset: usize) -> Option<usize> {
        self.sentences
            .iter()
            .position(|s| (s.span.0..s.span.1.max(s.span.0 + 1)).contains(&offset))
            .or_else(|| self.sentences.iter().position(|s| s.span.0 >= offset))
    }

    pub fn apply(&self, edit: &Edit) -> Document {
        let mut changes: Vec<&Change> = edit.changes.iter().collect();
        changes.sort_by_key(|c| (c.range.start, c.range.end));
        let mut next_id = self.next_id;
        let mut fresh = |text: &str, out: &mut Vec<(SentenceId, String)>| {
            // Unparseable replacements are kept verbatim as one sentence.
            let spans = sentence_spans(text).unwrap_or_else(|_| vec![(0, text.len())]);
            for (s, e) in spans {
                out.push((SentenceId(next_id), text[s..e].to_string()));
                next_id += 1;
            }
        };
        let mut entries = Vec::with_capacity(self.sentences.len());
        let mut pos = 0;
        for c in changes {
            debug_assert!(c.range.start >= pos, "overlapping changes");
            for s in &self.sentences[pos..c.range.start] {
                entries.push((s.id, s.text.clone()));
            }
            fresh(&c.text, &mut entries);
            pos = c.range.end.max(pos);
        }
        for s in &self.sentences[pos.min(self.sentences.len())..] {
            entries.push((s.id, s.text.clone()));
        }
        let mut doc = Document { name: self.name.clone(), sentences: Vec::new(), gaps: None, next_id };
        doc.rebuild(entries);
        doc
    }

    fn rebuild(&mut self, entries: Vec<(SentenceId, String)>) {
        let texts: Vec<&str> = entries.iter().map(|(_, t)| t.as_str()).collect();
        let kinds = classify_all(&texts);
        self.sentences = entries
            .into_iter()
            .zip(kinds)
            .map(|((id, text), kind)| Sentence { id, text, kind, span: (0, 0) })
            .collect();
        self.relayout();
    }

    fn relayout(&mut self) {
        let mut pos = 0;
        for s in &mut self.sentences {
            s.span = (pos, pos + s.text.len());
            pos += s.text.len() + 1;
        }
    }
}

fn render_normalized(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.text);
        out.push('\n');
    }
    out
}
