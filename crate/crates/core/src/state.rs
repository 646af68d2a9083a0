//! Minimization state and its on-disk checkpoint form.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error_equivalence::{ErrorSignature, RawError};
use crate::sentence_model::Document;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub pass: String,
    pub lines_before: usize,
    pub lines_after: usize,
}

impl LedgerEntry {
    pub fn new(pass: impl Into<String>, lines_before: usize, lines_after: usize) -> Self {
        LedgerEntry { pass: pass.into(), lines_before, lines_after }
    }
}

/// Inliner bookkeeping that must survive a resume.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineProgress {
    pub transitive_inserted: bool,
    /// Logical names, in inlining order.
    pub inlined: Vec<String>,
    pub failed: Vec<String>,
    pub next_uid: u64,
}

/// Position of the scheduler inside its nested loops.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub round: u32,
    pub phase: usize,
    pub phase_round: u32,
    pub pass: usize,
    pub sweep: u32,
    /// Site keys snapshotted at the start of the current sweep.
    pub keys: Option<Vec<String>>,
    pub position: usize,
    pub round_changed: bool,
    pub phase_changed: bool,
    pub sweep_changed: bool,
    pub lines_before: usize,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizationState {
    pub current: Document,
    pub expected: ErrorSignature,
    /// Location of the target error in `current`, from its last fail-leg run.
    pub error: Option<RawError>,
    pub ledger: Vec<LedgerEntry>,
    pub preserve_error_script: bool,
    pub checkpoint_path: Option<PathBuf>,
    pub cursor: Cursor,
    pub inline: InlineProgress,
    /// Non-identity candidates accepted so far.
    pub acceptances: u64,
    pub original_lines: usize,
    /// Per-check timeout fixed when the run started.
    pub check_timeout_secs: f64,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint is malformed: {0}")]
    Format(#[from] serde_json::Error),
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    rendered: String,
    state: MinimizationState,
}

impl MinimizationState {
    pub fn new(current: Document, expected: ErrorSignature, error: Option<RawError>) -> Self {
        let original_lines = current.line_count();
        MinimizationState {
            current,
            expected,
            error,
            ledger: Vec::new(),
            preserve_error_script: false,
            checkpoint_path: None,
            cursor: Cursor::default(),
            inline: InlineProgress::default(),
            acceptances: 0,
            original_lines,
            check_timeout_secs: 600.0,
        }
    }

    pub fn lines(&self) -> usize {
        self.current.line_count()
    }

    /// Writes the checkpoint atomically, if a path is configured.
    pub fn save_checkpoint(&self) -> Result<(), CheckpointError> {
        let Some(path) = &self.checkpoint_path else { return Ok(()) };
        let file = CheckpointFile { version: CHECKPOINT_VERSION, rendered: self.current.render(), state: self.clone() };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&file)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, CheckpointError> {
        let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
        let found = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found });
        }
        let file: CheckpointFile = serde_json::from_value(raw)?;
        let mut state = file.state;
        state.checkpoint_path = Some(path.to_path_buf());
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_equivalence::normalize;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let doc = Document::parse("bug.v", "A. B.\nC.").unwrap();
        let mut st = MinimizationState::new(doc, normalize("Error: x."), None);
        st.checkpoint_path = Some(path.clone());
        st.ledger.push(LedgerEntry::new("p", 2, 1));
        st.cursor.keys = Some(vec!["k".into()]);
        st.save_checkpoint().unwrap();
        let back = MinimizationState::load_checkpoint(&path).unwrap();
        assert_eq!(back, st);
        assert_eq!(back.current.render(), "A. B.\nC.");
    }

    #[test]
    fn version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        std::fs::write(&path, r#"{"version": 99}"#).unwrap();
        assert!(matches!(MinimizationState::load_checkpoint(&path), Err(CheckpointError::Version { found: 99 })));
    }
}
