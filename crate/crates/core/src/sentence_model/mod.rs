//! Sentence-level model of a vernacular source file.
//!
//! A file is a flat sequence of sentences. Blocks group them into the units
//! the reduction passes remove or rewrite together.

mod blocks;
mod document;
pub mod lexer;
mod sentence;

pub use blocks::{closer_keyword, group_blocks, is_closed_proof, is_obligation_block, Block, BlockKind, BlockTree, GroupError};
pub use document::{Change, Document, Edit};
pub use sentence::{
    classify, introduced_names, is_obligation_opener, opens_proof, split_sentences, Head, ParseError, Sentence,
    SentenceId, SentenceKind, STATEMENT_KEYWORDS,
};
