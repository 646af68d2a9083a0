//! Reduction passes and the scheduler that drives them through the oracle.
//!
//! A pass does not produce whole candidate documents up front. It names
//! *sites* on the current document, each with an ordered list of alternative
//! edits; the scheduler tries the alternatives of one site at a time and
//! regenerates sites after every acceptance, so later sites always see the
//! latest document.

mod scheduler;
mod transforms;

use crate::inliner::InlineEnv;
use crate::sentence_model::{Document, Edit};
use crate::state::InlineProgress;

pub use scheduler::{default_plan, Limits, Phase, PhasePlan, RunEnd, Scheduler, TraceEvent, PASS_SWEEP_CAP, PHASE_ROUND_CAP, ROUND_CAP};
pub use transforms::{
    AdmitAbstractSubproofs, AdmitObligations, AdmitProofs, ExportModules, InlineDependencies, RemoveBlocksBackward,
    RemoveEmptyScopes, RemoveUnusedDefinitions, SplitDefinitions, SplitImports, SplitRequires, TruncateAfterError,
    AXIOM_SUFFIX,
};

/// What the scheduler must record after trying a site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteKind {
    Plain,
    TransitiveRequires,
    Inline { dep: String },
}

#[derive(Debug, Clone)]
pub struct Site {
    /// Stable across unrelated edits; built from sentence ids.
    pub key: String,
    pub kind: SiteKind,
    /// Tried in order; the first accepted one wins.
    pub alternatives: Vec<Edit>,
    /// Inline sites only: uid counter consumed by each alternative.
    pub uid_counters: Vec<u64>,
}

impl Site {
    pub fn plain(key: String, alternatives: Vec<Edit>) -> Self {
        Site { key, kind: SiteKind::Plain, alternatives, uid_counters: Vec::new() }
    }
}

pub struct PassContext<'a> {
    /// Index of the sentence the target error is reported at.
    pub error_index: Option<usize>,
    pub inline: Option<&'a InlineEnv>,
    pub progress: &'a InlineProgress,
    /// Inline every eligible dependency without waiting for removals.
    pub inline_all: bool,
}

pub trait Pass: Send + Sync {
    fn name(&self) -> &'static str;

    fn sites(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Site>;

    /// Sweeps per execution before the pass is considered at its fixpoint.
    fn max_sweeps(&self) -> u32 {
        PASS_SWEEP_CAP
    }

    /// Every alternative of every site applied to `doc`, in trial order.
    fn candidates(&self, doc: &Document, cx: &PassContext<'_>) -> Vec<Document> {
        self.sites(doc, cx).iter().flat_map(|s| s.alternatives.iter().map(|e| doc.apply(e))).collect()
    }
}
