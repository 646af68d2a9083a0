use std::ops::Range;

use super::sentence::{introduced_names, is_obligation_opener, opens_proof, Head, Sentence, SentenceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// A statement plus its proof, up to and including the closer.
    ProofBlock,
    /// `Module`/`Section` … `End`.
    Scope,
    Loose,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    /// Sentence indices covered, opener and closer included for scopes.
    pub range: Range<usize>,
    pub kind: BlockKind,
    pub name: Option<String>,
    /// Blocks partitioning the interior of a scope.
    pub children: Vec<Block>,
    /// False for a scope with no closer or a stray closer.
    pub balanced: bool,
}

impl Block {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    /// This block followed by all nested blocks, in pre-order.
    pub fn walk(&self) -> Vec<&Block> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn contains(&self, index: usize) -> bool {
        self.range.contains(&index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupError {
    /// A closer with no opener, or an opener never closed.
    UnbalancedScope { sentence: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockTree {
    pub blocks: Vec<Block>,
    pub issues: Vec<GroupError>,
}

impl BlockTree {
    pub fn is_balanced(&self) -> bool {
        self.issues.is_empty()
    }

    /// Every block at every depth, in pre-order.
    pub fn all(&self) -> Vec<&Block> {
        self.blocks.iter().flat_map(|b| b.walk()).collect()
    }

    /// Innermost block containing a sentence index.
    pub fn innermost(&self, index: usize) -> Option<&Block> {
        let mut level = &self.blocks;
        let mut found = None;
        while let Some(b) = level.iter().find(|b| b.contains(index)) {
            found = Some(b);
            level = &b.children;
        }
        found
    }
}

/// Groups sentences into definition blocks.
///
/// Every statement opens a proof block that runs to the next proof closer;
/// scope openers and closers pair up into scope blocks; everything else is a
/// loose block of one sentence.
pub fn group_blocks(sentences: &[Sentence]) -> BlockTree {
    let mut tree = BlockTree::default();
    let mut i = 0;
    tree.blocks = level(sentences, &mut i, false, &mut tree.issues);
    tree
}

fn first_name(text: &str) -> Option<String> {
    introduced_names(text).into_iter().next()
}

fn level(s: &[Sentence], i: &mut usize, nested: bool, issues: &mut Vec<GroupError>) -> Vec<Block> {
    let mut out = Vec::new();
    while *i < s.len() {
        let start = *i;
        let sentence = &s[start];
        match sentence.kind {
            SentenceKind::ScopeCloser if nested => return out,
            SentenceKind::ScopeCloser => {
                issues.push(GroupError::UnbalancedScope { sentence: start });
                *i += 1;
                out.push(Block {
                    range: start..*i,
                    kind: BlockKind::Loose,
                    name: None,
                    children: Vec::new(),
                    balanced: false,
                });
            }
            SentenceKind::ScopeOpener => {
                *i += 1;
                let children = level(s, i, true, issues);
                let balanced = *i < s.len();
                if balanced {
                    *i += 1;
                } else {
                    issues.push(GroupError::UnbalancedScope { sentence: start });
                }
                out.push(Block {
                    range: start..*i,
                    kind: BlockKind::Scope,
                    name: first_name(&sentence.text),
                    children,
                    balanced,
                });
            }
            _ if opens_proof(&sentence.text) => {
                *i += 1;
                while *i < s.len()
                    && !matches!(
                        s[*i].kind,
                        SentenceKind::ProofCloser | SentenceKind::ScopeCloser | SentenceKind::ScopeOpener
                    )
                {
                    *i += 1;
                }
                if *i < s.len() && s[*i].kind == SentenceKind::ProofCloser {
                    *i += 1;
                }
                let name = if is_obligation_opener(&sentence.text) { None } else { first_name(&sentence.text) };
                out.push(Block { range: start..*i, kind: BlockKind::ProofBlock, name, children: Vec::new(), balanced: true });
            }
            _ => {
                *i += 1;
                out.push(Block {
                    range: start..*i,
                    kind: BlockKind::Loose,
                    name: first_name(&sentence.text),
                    children: Vec::new(),
                    balanced: true,
                });
            }
        }
    }
    out
}

/// Whether a proof block's statement is an `Obligation`/`Next Obligation`.
pub fn is_obligation_block(sentences: &[Sentence], block: &Block) -> bool {
    block.kind == BlockKind::ProofBlock && is_obligation_opener(&sentences[block.range.start].text)
}

/// Whether a proof block ends in a closer.
pub fn is_closed_proof(sentences: &[Sentence], block: &Block) -> bool {
    block.kind == BlockKind::ProofBlock
        && block.range.end > block.range.start + 1
        && sentences[block.range.end - 1].kind == SentenceKind::ProofCloser
}

/// Head keyword of a closer sentence (`Qed`, `Defined`, ...).
pub fn closer_keyword(text: &str) -> Option<String> {
    Head::parse(text).keyword().map(str::to_string)
}
