//! Locating the target error in a checker log and deciding when two errors
//! count as the same buggy behavior.
//!
//! Equivalence is equality on a quotient: universe inconsistencies,
//! forgotten-universe anomalies and bugged-tactic constraint failures each
//! collapse to one class, and everything else compares by normalized text
//! with locations, line wrapping and (usually) numbers stripped out.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawError {
    pub file: String,
    pub line: usize,
    pub chars: (usize, usize),
    /// Every line from `Error` to the end of the report.
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("log contains no `File ..., line ..., characters ...:` header followed by an Error line")]
    NoErrorFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorClass {
    UniverseInconsistency,
    ForgottenUniverse,
    BuggedTacticConstraints,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorSignature {
    pub class: ErrorClass,
    /// Empty unless `class` is `Normalized`.
    pub normalized_text: String,
    pub number_sensitive: bool,
}

const LENGTH_SENSITIVE: &str = "Universe instance should have length";

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^File "([^"]*)", line (\d+), characters (\d+)-(\d+):\s*$"#).expect("valid regex"))
}

fn location_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"File "[^"]*", line \d+, characters \d+-\d+:"#).expect("valid regex"))
}

fn digits_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9]+").expect("valid regex"))
}

/// Finds the last location header immediately followed by an `Error` line.
///
/// Headers followed by anything else (warnings, notices) are skipped.
pub fn extract_error(log: &str) -> Result<RawError, ExtractError> {
    let lines: Vec<&str> = log.lines().collect();
    let mut found = None;
    for (i, line) in lines.iter().enumerate() {
        let Some(caps) = header_re().captures(line.trim_end()) else { continue };
        let Some(next) = lines.get(i + 1) else { continue };
        if !next.starts_with("Error") {
            continue;
        }
        let body: Vec<&str> = lines[i + 1..]
            .iter()
            .take_while(|l| !l.trim().is_empty())
            .enumerate()
            .take_while(|(k, l)| *k == 0 || !header_re().is_match(l.trim_end()))
            .map(|(_, l)| *l)
            .collect();
        let num = |k: usize| caps[k].parse::<usize>().unwrap_or(0);
        found = Some(RawError {
            file: caps[1].to_string(),
            line: num(2),
            chars: (num(3), num(4)),
            message: body.join("\n"),
        });
    }
    found.ok_or(ExtractError::NoErrorFound)
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Classifier with a configurable literal for forgotten-universe anomalies.
#[derive(Debug, Clone)]
pub struct Normalizer {
    forgotten_marker: String,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer { forgotten_marker: "forgotten universe".to_string() }
    }
}

impl Normalizer {
    pub fn with_forgotten_marker(marker: impl Into<String>) -> Self {
        Normalizer { forgotten_marker: marker.into().to_lowercase() }
    }

    pub fn normalize(&self, message: &str) -> ErrorSignature {
        let flat = collapse(&location_re().replace_all(&collapse(message), " "));
        let message = flat.as_str();
        let number_sensitive = message.contains(LENGTH_SENSITIVE);
        let class_only = |class| ErrorSignature { class, normalized_text: String::new(), number_sensitive };
        if message.contains("Universe inconsistency") {
            return class_only(ErrorClass::UniverseInconsistency);
        }
        if message.to_lowercase().contains(&self.forgotten_marker) {
            return class_only(ErrorClass::ForgottenUniverse);
        }
        if message.contains("Unsatisfied constraints") && message.contains("maybe a bugged tactic") {
            return class_only(ErrorClass::BuggedTacticConstraints);
        }
        let mut text = flat.clone();
        if !number_sensitive {
            text = digits_re().replace_all(&text, "#").into_owned();
        }
        ErrorSignature { class: ErrorClass::Normalized, normalized_text: text, number_sensitive }
    }
}

pub fn normalize(message: &str) -> ErrorSignature {
    Normalizer::default().normalize(message)
}

pub fn equivalent(a: &ErrorSignature, b: &ErrorSignature) -> bool {
    a.class == b.class && (a.class != ErrorClass::Normalized || a.normalized_text == b.normalized_text)
}

impl ErrorSignature {
    pub fn equivalent(&self, other: &ErrorSignature) -> bool {
        equivalent(self, other)
    }
}

impl std::fmt::Display for ErrorSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.class {
            ErrorClass::Normalized => write!(f, "{}", self.normalized_text),
            c => write!(f, "<{c:?}>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extracts_single_error() {
        let log = "File \"bug.v\", line 4, characters 7-12:\nError: The reference crush was not found in the current environment.\n";
        let e = extract_error(log).unwrap();
        assert_eq!(e.file, "bug.v");
        assert_eq!(e.line, 4);
        assert_eq!(e.chars, (7, 12));
        assert!(e.message.starts_with("Error: The reference crush"));
    }

    #[test]
    fn warnings_are_skipped() {
        let log = "File \"a.v\", line 1, characters 0-3:\nWarning: something odd.\n\nFile \"a.v\", line 9, characters 2-4:\nError: real one.\n";
        let e = extract_error(log).unwrap();
        assert_eq!(e.line, 9);
        assert_eq!(e.message, "Error: real one.");
    }

    #[test]
    fn last_error_wins() {
        let log = "File \"a.v\", line 1, characters 0-3:\nError: first.\n\nFile \"b.v\", line 2, characters 0-3:\nError: second\ncontinues here.\n\ntrailing noise\n";
        let e = extract_error(log).unwrap();
        assert_eq!(e.file, "b.v");
        assert_eq!(e.message, "Error: second\ncontinues here.");
    }

    #[test]
    fn no_error_found() {
        assert_eq!(extract_error("all good\n"), Err(ExtractError::NoErrorFound));
        assert_eq!(
            extract_error("File \"a.v\", line 1, characters 0-3:\nWarning: w.\n"),
            Err(ExtractError::NoErrorFound)
        );
    }

    #[test]
    fn universe_messages_share_a_class() {
        let a = normalize("Error: Universe inconsistency. Cannot enforce u < v.");
        let b = normalize("Error: Universe inconsistency. Cannot enforce a <= b < c.");
        assert_eq!(a.class, ErrorClass::UniverseInconsistency);
        assert!(a.normalized_text.is_empty());
        assert!(equivalent(&a, &b));
    }

    #[test]
    fn length_messages_are_number_sensitive() {
        let a = normalize("Error: Universe instance should have length 2.");
        let b = normalize("Error: Universe instance should have length 3.");
        assert_eq!(a.class, ErrorClass::Normalized);
        assert!(a.number_sensitive);
        assert!(!equivalent(&a, &b));
    }

    #[test]
    fn digits_are_blinded() {
        let a = normalize("Error: Found x0 where x1 expected");
        let b = normalize("Error: Found x3 where x7 expected");
        assert_eq!(a.normalized_text, "Error: Found x# where x# expected");
        assert!(equivalent(&a, &b));
    }

    #[test]
    fn class_mismatch_is_inequivalent() {
        let a = normalize("Error: Unsatisfied constraints: u <= v (maybe a bugged tactic).");
        let b = normalize("Error: x");
        assert_eq!(a.class, ErrorClass::BuggedTacticConstraints);
        assert!(!equivalent(&a, &b));
    }

    #[test]
    fn forgotten_marker_is_configurable() {
        let msg = "Error: Anomaly: lost track of universe u.";
        assert_eq!(normalize(msg).class, ErrorClass::Normalized);
        let n = Normalizer::with_forgotten_marker("Lost track of universe");
        assert_eq!(n.normalize(msg).class, ErrorClass::ForgottenUniverse);
        assert_eq!(normalize("Error: Anomaly: Forgotten Universe u.2").class, ErrorClass::ForgottenUniverse);
    }

    #[test]
    fn locations_and_wrapping_are_ignored() {
        let a = normalize("Error: In File \"a.v\", line 3, characters 1-2: bad\n  thing");
        let b = normalize("Error: In File \"other.v\", line 90, characters 4-8: bad thing");
        assert!(equivalent(&a, &b));
    }

    fn message() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-z]{1,6}",
                "[0-9]{1,3}",
                Just("Universe".to_string()),
                Just("inconsistency".to_string()),
                Just("Universe inconsistency".to_string()),
                Just("Universe instance should have length".to_string()),
                Just("(maybe a bugged tactic)".to_string()),
                Just("Unsatisfied constraints".to_string()),
                Just("File \"f.v\", line 3, characters 4-5:".to_string()),
            ],
            1..8,
        )
        .prop_map(|w| format!("Error: {}", w.join(" ")))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(m in message()) {
            let s = normalize(&m);
            if s.class == ErrorClass::Normalized {
                let again = normalize(&s.normalized_text);
                prop_assert_eq!(again.normalized_text, s.normalized_text);
            }
        }

        #[test]
        fn wrapping_does_not_matter(m in message(), breaks in prop::collection::vec(any::<bool>(), 0..16)) {
            let mut it = breaks.into_iter();
            let wrapped: String = m
                .split(' ')
                .collect::<Vec<_>>()
                .iter()
                .enumerate()
                .map(|(i, w)| if i == 0 { w.to_string() } else if it.next().unwrap_or(false) { format!("\n  {w}") } else { format!(" {w}") })
                .collect();
            prop_assert_eq!(normalize(&m), normalize(&wrapped));
        }

        #[test]
        fn equivalence_laws(a in message(), b in message(), c in message()) {
            let (a, b, c) = (normalize(&a), normalize(&b), normalize(&c));
            prop_assert!(equivalent(&a, &a));
            prop_assert_eq!(equivalent(&a, &b), equivalent(&b, &a));
            if equivalent(&a, &b) && equivalent(&b, &c) {
                prop_assert!(equivalent(&a, &c));
            }
        }
    }
}
