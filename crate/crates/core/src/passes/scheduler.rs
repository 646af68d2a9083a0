use std::path::Path;

use log::{debug, warn};

use super::transforms::*;
use super::{Pass, PassContext, Site, SiteKind};
use crate::error_equivalence::RawError;
use crate::inliner::InlineEnv;
use crate::oracle::{Oracle, OracleError};
use crate::sentence_model::{Document, Edit};
use crate::state::{LedgerEntry, MinimizationState};

pub const PASS_SWEEP_CAP: u32 = 10;
pub const PHASE_ROUND_CAP: u32 = 10;
pub const ROUND_CAP: u32 = 10;
const INLINE_ALL_ROUND_CAP: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Only with `--inline-all-first`, and only in the first round.
    InlineAll,
    SpeedCritical,
    Structural,
    Cosmetic,
}

pub struct PhasePlan {
    pub phase: Phase,
    pub passes: Vec<Box<dyn Pass>>,
    pub round_cap: u32,
}

impl PhasePlan {
    fn new(phase: Phase, passes: Vec<Box<dyn Pass>>) -> Self {
        let round_cap = if phase == Phase::InlineAll { INLINE_ALL_ROUND_CAP } else { PHASE_ROUND_CAP };
        PhasePlan { phase, passes, round_cap }
    }
}

/// Speed-critical passes first, then structural ones, then cosmetic ones.
/// Within the structural phase, blocks are removed before any dependency is
/// inlined; the phase loop brings removal back after each inline.
pub fn default_plan(inline_all_first: bool) -> Vec<PhasePlan> {
    let mut plan = Vec::new();
    if inline_all_first {
        plan.push(PhasePlan::new(Phase::InlineAll, vec![Box::new(InlineDependencies)]));
    }
    plan.push(PhasePlan::new(
        Phase::SpeedCritical,
        vec![
            Box::new(TruncateAfterError),
            Box::new(RemoveUnusedDefinitions),
            Box::new(AdmitObligations),
            Box::new(AdmitProofs),
            Box::new(AdmitAbstractSubproofs),
        ],
    ));
    plan.push(PhasePlan::new(
        Phase::Structural,
        vec![
            Box::new(ExportModules),
            Box::new(SplitImports),
            Box::new(SplitRequires),
            Box::new(RemoveBlocksBackward),
            Box::new(InlineDependencies),
            Box::new(RemoveEmptyScopes),
        ],
    ));
    plan.push(PhasePlan::new(Phase::Cosmetic, vec![Box::new(SplitDefinitions), Box::new(RemoveBlocksBackward)]));
    plan
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    /// Stop (as if killed) once the state has this many acceptances.
    pub max_acceptances: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    Finished,
    BudgetExhausted,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Site { pass: &'static str, key: String, accepted: bool, judged: u32 },
    SweepEnd { pass: &'static str, sweep: u32, changed: bool },
}

/// Index of the sentence `error` points at, when it refers to `doc`.
pub fn error_index(doc: &Document, error: &RawError) -> Option<usize> {
    let file = Path::new(&error.file).file_name()?.to_string_lossy();
    if file != doc.name() {
        return None;
    }
    let text = doc.render();
    let line_start = if error.line <= 1 {
        0
    } else {
        text.match_indices('\n').nth(error.line - 2).map(|(i, _)| i + 1)?
    };
    doc.sentence_at_offset(line_start + error.chars.0)
}

/// True when `edit` changes a sentence in `protected` or inserts inside it.
fn touches(edit: &Edit, protected: &std::ops::RangeInclusive<usize>) -> bool {
    let (lo, hi) = (*protected.start(), *protected.end());
    edit.changes.iter().any(|c| {
        if c.range.is_empty() {
            c.range.start > lo && c.range.start <= hi
        } else {
            c.range.start <= hi && c.range.end > lo
        }
    })
}

pub struct Scheduler<'a> {
    plan: Vec<PhasePlan>,
    oracle: &'a mut Oracle,
    inline: Option<&'a InlineEnv>,
    limits: Limits,
    pub trace: Vec<TraceEvent>,
    /// Sites of the current pass on the current document; dropped whenever
    /// either changes.
    cached: Option<(usize, usize, Vec<Site>)>,
}

impl<'a> Scheduler<'a> {
    pub fn new(plan: Vec<PhasePlan>, oracle: &'a mut Oracle, inline: Option<&'a InlineEnv>, limits: Limits) -> Self {
        Scheduler { plan, oracle, inline, limits, trace: Vec::new(), cached: None }
    }

    fn sites(&mut self, state: &MinimizationState) -> Vec<Site> {
        let c = &state.cursor;
        if let Some((phase, pass, sites)) = &self.cached {
            if *phase == c.phase && *pass == c.pass {
                return sites.clone();
            }
        }
        let plan = &self.plan[c.phase];
        let cx = PassContext {
            error_index: state.error.as_ref().and_then(|e| error_index(&state.current, e)),
            inline: self.inline,
            progress: &state.inline,
            inline_all: plan.phase == Phase::InlineAll,
        };
        let sites = plan.passes[c.pass].sites(&state.current, &cx);
        self.cached = Some((c.phase, c.pass, sites.clone()));
        sites
    }

    fn protected(&self, state: &MinimizationState) -> Option<std::ops::RangeInclusive<usize>> {
        if !state.preserve_error_script {
            return None;
        }
        let e = error_index(&state.current, state.error.as_ref()?)?;
        let tree = state.current.blocks();
        let start = tree.innermost(e).map(|b| b.range.start).unwrap_or(e);
        Some(start..=e)
    }

    /// Tries one site's alternatives. Returns whether one was accepted.
    fn try_site(&mut self, state: &mut MinimizationState, site: Site) -> Result<bool, OracleError> {
        let rendered = state.current.render();
        let protected = self.protected(state);
        let pass = self.plan[state.cursor.phase].passes[state.cursor.pass].name();
        let mut judged = 0;
        let mut accepted_alt = None;
        for (k, alt) in site.alternatives.iter().enumerate() {
            if protected.as_ref().is_some_and(|p| touches(alt, p)) {
                continue;
            }
            let candidate = state.current.apply(alt);
            let text = candidate.render();
            if text == rendered {
                continue;
            }
            judged += 1;
            let j = self.oracle.judge(candidate.name(), &text, &state.expected)?;
            if j.accepted {
                state.current = candidate;
                state.error = j.fail.error;
                state.acceptances += 1;
                accepted_alt = Some(k);
                break;
            }
        }
        match &site.kind {
            SiteKind::Plain => {}
            SiteKind::TransitiveRequires => state.inline.transitive_inserted = true,
            SiteKind::Inline { dep } => match accepted_alt {
                Some(k) => {
                    state.inline.inlined.push(dep.clone());
                    state.inline.next_uid = site.uid_counters.get(k).copied().unwrap_or(state.inline.next_uid) + 1;
                }
                None => {
                    warn!("could not inline {dep}");
                    state.inline.failed.push(dep.clone());
                }
            },
        }
        if accepted_alt.is_some() || site.kind != SiteKind::Plain {
            self.cached = None;
        }
        self.trace.push(TraceEvent::Site { pass, key: site.key, accepted: accepted_alt.is_some(), judged });
        Ok(accepted_alt.is_some())
    }

    fn checkpoint(state: &MinimizationState) {
        if let Err(e) = state.save_checkpoint() {
            warn!("checkpoint not written: {e}");
        }
    }

    /// Drives the passes until a full round accepts nothing, the budget runs
    /// out, or the acceptance limit is hit. Resumes from `state.cursor`.
    pub fn run(&mut self, state: &mut MinimizationState) -> Result<RunEnd, OracleError> {
        loop {
            if state.cursor.finished {
                return Ok(RunEnd::Finished);
            }
            let c = &mut state.cursor;
            if c.phase >= self.plan.len() {
                if c.round_changed && c.round + 1 < ROUND_CAP {
                    c.round += 1;
                    c.phase = 0;
                    c.phase_round = 0;
                    c.pass = 0;
                    c.round_changed = false;
                    c.phase_changed = false;
                    continue;
                }
                if c.round_changed {
                    warn!("round cap of {ROUND_CAP} reached before a fixpoint");
                }
                c.finished = true;
                Self::checkpoint(state);
                return Ok(RunEnd::Finished);
            }
            let plan = &self.plan[c.phase];
            if plan.phase == Phase::InlineAll && c.round > 0 {
                c.phase += 1;
                continue;
            }
            if c.pass >= plan.passes.len() {
                if c.phase_changed && c.phase_round + 1 < plan.round_cap {
                    c.phase_round += 1;
                } else {
                    if c.phase_changed {
                        warn!("phase {:?} hit its round cap", plan.phase);
                    }
                    c.phase += 1;
                    c.phase_round = 0;
                }
                c.pass = 0;
                c.phase_changed = false;
                continue;
            }
            let pass_name = plan.passes[c.pass].name();
            let max_sweeps = plan.passes[c.pass].max_sweeps();
            let Some(keys) = state.cursor.keys.clone() else {
                if state.cursor.sweep == 0 {
                    state.cursor.lines_before = state.lines();
                }
                self.cached = None;
                let keys = self.sites(state).into_iter().map(|s| s.key).collect();
                let c = &mut state.cursor;
                c.keys = Some(keys);
                c.position = 0;
                c.sweep_changed = false;
                continue;
            };
            let c = &mut state.cursor;
            if c.position >= keys.len() {
                self.trace.push(TraceEvent::SweepEnd { pass: pass_name, sweep: c.sweep, changed: c.sweep_changed });
                if c.sweep_changed && c.sweep + 1 < max_sweeps {
                    c.sweep += 1;
                } else {
                    if c.sweep_changed && max_sweeps == PASS_SWEEP_CAP {
                        warn!("{pass_name} hit its sweep cap of {PASS_SWEEP_CAP}");
                    }
                    let before = c.lines_before;
                    c.pass += 1;
                    c.sweep = 0;
                    let after = state.lines();
                    state.ledger.push(LedgerEntry::new(pass_name, before, after));
                }
                state.cursor.keys = None;
                continue;
            }
            let key = &keys[c.position];
            let site = self.sites(state).into_iter().find(|s| &s.key == key);
            let accepted = match site {
                Some(site) => match self.try_site(state, site) {
                    Ok(a) => a,
                    Err(OracleError::BudgetExhausted) => {
                        Self::checkpoint(state);
                        return Ok(RunEnd::BudgetExhausted);
                    }
                    Err(e) => return Err(e),
                },
                None => false,
            };
            let c = &mut state.cursor;
            c.position += 1;
            if accepted {
                debug!("{pass_name}: accepted {}", keys[c.position - 1]);
                c.sweep_changed = true;
                c.phase_changed = true;
                c.round_changed = true;
                Self::checkpoint(state);
                if self.limits.max_acceptances.is_some_and(|m| state.acceptances >= m) {
                    return Ok(RunEnd::Interrupted);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protection_covers_changes_and_inner_inserts() {
        let p = 2..=4;
        assert!(touches(&crate::sentence_model::Change::delete(3..4).into(), &p));
        assert!(!touches(&crate::sentence_model::Change::delete(5..7).into(), &p));
        assert!(!touches(&crate::sentence_model::Change::insert(2, "X.").into(), &p));
        assert!(touches(&crate::sentence_model::Change::insert(3, "X.").into(), &p));
        assert!(!touches(&crate::sentence_model::Change::insert(5, "X.").into(), &p));
    }

    #[test]
    fn error_lines_map_to_sentences() {
        let doc = Document::parse("bug.v", "A.\nB. C.\nD.").unwrap();
        let err = |line, c| RawError { file: "/tmp/x/bug.v".into(), line, chars: (c, c + 2), message: String::new() };
        assert_eq!(error_index(&doc, &err(1, 0)), Some(0));
        assert_eq!(error_index(&doc, &err(2, 3)), Some(2));
        assert_eq!(error_index(&doc, &err(3, 0)), Some(3));
        let other = RawError { file: "dep.v".into(), ..err(1, 0) };
        assert_eq!(error_index(&doc, &other), None);
    }
}
