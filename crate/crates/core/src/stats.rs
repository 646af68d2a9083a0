//! Run statistics and the header written above the reduced file.

use serde::{Deserialize, Serialize};

use crate::state::LedgerEntry;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Lines removed across the ledger. Growth (from inlining) counts as zero,
/// not as negative removal.
pub fn total_removed(ledger: &[LedgerEntry]) -> usize {
    ledger.iter().map(|e| e.lines_before.saturating_sub(e.lines_after)).sum()
}

/// `final / (final + removed)`; 1 when nothing is left and nothing was removed.
pub fn reduction_ratio(final_lines: usize, removed: usize) -> f64 {
    if final_lines + removed == 0 {
        return 1.0;
    }
    final_lines as f64 / (final_lines + removed) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub ledger: Vec<LedgerEntry>,
    pub total_removed: usize,
    pub final_size: usize,
    pub reduction_ratio: f64,
    pub failed_inlines: Vec<String>,
    pub final_compile_time: f64,
    pub original_file: String,
    pub original_lines: usize,
}

impl RunStats {
    pub fn new(
        ledger: Vec<LedgerEntry>,
        final_size: usize,
        failed_inlines: Vec<String>,
        final_compile_time: f64,
        original_file: String,
        original_lines: usize,
    ) -> Self {
        let removed = total_removed(&ledger);
        RunStats {
            reduction_ratio: reduction_ratio(final_size, removed),
            total_removed: removed,
            ledger,
            final_size,
            failed_inlines,
            final_compile_time,
            original_file,
            original_lines,
        }
    }

    /// `(* key: value *)` lines, in a fixed order.
    pub fn header_fields(&self) -> Vec<(String, String)> {
        let failed = if self.failed_inlines.is_empty() { "none".to_string() } else { self.failed_inlines.join(", ") };
        let ledger = self
            .ledger
            .iter()
            .filter(|e| e.lines_before != e.lines_after)
            .map(|e| format!("{} {}->{}", e.pass, e.lines_before, e.lines_after))
            .collect::<Vec<_>>();
        vec![
            ("tool-version".into(), format!("vermin {TOOL_VERSION}")),
            ("original-file".into(), self.original_file.clone()),
            ("original-lines".into(), self.original_lines.to_string()),
            ("final-lines".into(), self.final_size.to_string()),
            ("reduction-ratio".into(), format!("{}", self.reduction_ratio)),
            ("expected-compile-time-seconds".into(), format!("{:.3}", self.final_compile_time)),
            ("failed-inlines".into(), failed),
            ("ledger".into(), if ledger.is_empty() { "no changes".into() } else { ledger.join("; ") }),
        ]
    }

    pub fn header(&self) -> String {
        self.header_fields().iter().map(|(k, v)| format!("(* {k}: {} *)\n", v.replace("*)", "* )"))).collect()
    }
}

/// Reads one header field back from an emitted file.
pub fn header_value<'a>(output: &'a str, key: &str) -> Option<&'a str> {
    let prefix = format!("(* {key}: ");
    output.lines().find_map(|l| l.strip_prefix(prefix.as_str()).and_then(|r| r.strip_suffix(" *)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_ledger() {
        let ledger = vec![LedgerEntry::new("a", 100, 60), LedgerEntry::new("inline", 60, 140), LedgerEntry::new("b", 140, 90)];
        assert_eq!(total_removed(&ledger), 90);
        assert_eq!(reduction_ratio(90, 90), 0.5);
    }

    #[test]
    fn header_round_trips_ratio() {
        let ledger = vec![LedgerEntry::new("a", 7, 3)];
        let st = RunStats::new(ledger, 3, vec![], 0.25, "bug.v".into(), 7);
        let h = st.header();
        let ratio: f64 = header_value(&h, "reduction-ratio").unwrap().parse().unwrap();
        assert_eq!(ratio, 3.0 / 7.0);
        assert_eq!(header_value(&h, "failed-inlines"), Some("none"));
        assert_eq!(header_value(&h, "ledger"), Some("a 7->3"));
    }

    #[test]
    fn degenerate_ratio() {
        assert_eq!(reduction_ratio(0, 0), 1.0);
        assert_eq!(reduction_ratio(5, 0), 1.0);
    }
}
