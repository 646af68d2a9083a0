//! One minimization run: verify, normalize, schedule, report.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::error_equivalence::ErrorSignature;
use crate::inliner::InlineEnv;
use crate::oracle::{default_timeout, Leg, Oracle, OracleError, VerifyError};
use crate::passes::{default_plan, Limits, RunEnd, Scheduler, TraceEvent};
use crate::sentence_model::{Document, ParseError};
use crate::state::{LedgerEntry, MinimizationState};
use crate::stats::RunStats;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub inline_all_first: bool,
    pub preserve_error_script: bool,
    /// Overrides the timeout derived from the initial check.
    pub check_timeout: Option<Duration>,
    pub deadline: Option<Instant>,
    pub checkpoint: Option<PathBuf>,
    pub limits: Limits,
}

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error("cannot parse the target file: {0}")]
    Parse(#[from] ParseError),
    #[error("could not reproduce the error: {0}")]
    Verify(#[from] VerifyError),
    #[error("could not reproduce the error once the file is laid out one sentence per line")]
    NormalizationRejected,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Checks the original file and builds the starting state.
///
/// The working document is the normalized layout of the file; it is checked
/// like any candidate before minimization proceeds.
pub fn initialize(
    oracle: &mut Oracle,
    name: &str,
    text: &str,
    expected: ErrorSignature,
    opts: &Options,
) -> Result<MinimizationState, MinimizeError> {
    let doc = Document::parse(name, text)?;
    if let Some(t) = opts.check_timeout {
        oracle.set_timeout(t);
    }
    let fail = oracle.verify_initial(name, text, &expected)?;
    let timeout = opts.check_timeout.unwrap_or_else(|| default_timeout(Duration::from_secs_f64(fail.wall_time)));
    oracle.set_timeout(timeout);

    let mut state = MinimizationState::new(doc.clone(), expected, fail.error);
    state.preserve_error_script = opts.preserve_error_script;
    state.checkpoint_path = opts.checkpoint.clone();
    state.check_timeout_secs = timeout.as_secs_f64();
    let normalized = doc.normalized();
    let laid_out = normalized.render();
    if laid_out != text {
        let j = oracle.judge(name, &laid_out, &state.expected)?;
        if !j.accepted {
            return Err(MinimizeError::NormalizationRejected);
        }
        state.error = j.fail.error;
    }
    state.current = normalized;
    state.ledger.push(LedgerEntry::new("normalize", state.original_lines, state.lines()));
    if let Err(e) = state.save_checkpoint() {
        log::warn!("checkpoint not written: {e}");
    }
    Ok(state)
}

pub struct Outcome {
    pub end: RunEnd,
    pub trace: Vec<TraceEvent>,
}

/// Runs (or resumes) the pass schedule on `state`.
pub fn minimize(
    oracle: &mut Oracle,
    state: &mut MinimizationState,
    inline: Option<&InlineEnv>,
    opts: &Options,
) -> Result<Outcome, MinimizeError> {
    oracle.set_timeout(Duration::from_secs_f64(state.check_timeout_secs));
    oracle.set_deadline(opts.deadline);
    let mut scheduler = Scheduler::new(default_plan(opts.inline_all_first), oracle, inline, opts.limits);
    let end = scheduler.run(state);
    let trace = std::mem::take(&mut scheduler.trace);
    drop(scheduler);
    oracle.set_deadline(None);
    Ok(Outcome { end: end?, trace })
}

/// Header plus final document, and the statistics behind the header.
pub fn finalize(
    oracle: &mut Oracle,
    state: &MinimizationState,
    inline: Option<&InlineEnv>,
    original_file: &str,
) -> Result<(String, RunStats), MinimizeError> {
    let text = state.current.render();
    let mut times = Vec::with_capacity(3);
    for _ in 0..3 {
        times.push(oracle.check_uncached(Leg::Fail, state.current.name(), &text)?.wall_time);
    }
    times.sort_by(f64::total_cmp);
    let mut failed = state.inline.failed.clone();
    let mut original_lines = state.original_lines;
    if let Some(env) = inline {
        for q in env.remaining_requires(&state.current) {
            if !failed.contains(&q) {
                failed.push(q);
            }
        }
        original_lines += state.inline.inlined.iter().map(|d| env.graph.lines_of(d)).sum::<usize>();
    }
    let stats = RunStats::new(state.ledger.clone(), state.lines(), failed, times[1], original_file.to_string(), original_lines);
    Ok((format!("{}{text}", stats.header()), stats))
}
