//! Oracle-driven minimization of vernacular test cases.
//!
//! A failing file is shrunk one sentence block at a time, with every
//! candidate checked against two checker versions: the old one must accept
//! it and the new one must still fail with an equivalent error.

pub mod driver;
pub mod error_equivalence;
pub mod inliner;
pub mod loadpath;
pub mod oracle;
pub mod passes;
pub mod sentence_model;
pub mod state;
pub mod stats;

pub use driver::{finalize, initialize, minimize, MinimizeError, Options, Outcome};
pub use error_equivalence::{equivalent, extract_error, normalize, ErrorClass, ErrorSignature, RawError};
pub use oracle::{Checker, CheckerSpec, CheckOutcome, Oracle, ProcessChecker, Status};
pub use sentence_model::Document;
pub use state::{LedgerEntry, MinimizationState};
pub use stats::RunStats;
