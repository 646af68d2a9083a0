//! Running checkers on candidate documents and judging the two-version
//! contract: the pass version must succeed and the fail version must fail
//! with an error equivalent to the target.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error_equivalence::{equivalent, extract_error, ErrorSignature, Normalizer, RawError};
use crate::loadpath::SearchPath;
use crate::sentence_model::Document;
use crate::state::MinimizationState;

/// Flags that only affect output artifacts and are dropped before checking.
const FILTERED_FLAGS: &[&str] = &["-batch", "-time", "-noglob"];
const FILTERED_WITH_VALUE: &[&str] = &["-o", "-dump-glob"];

pub fn filter_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if FILTERED_FLAGS.contains(&a.as_str()) {
            continue;
        }
        if FILTERED_WITH_VALUE.contains(&a.as_str()) {
            it.next();
            continue;
        }
        out.push(a.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerSpec {
    pub executable: PathBuf,
    /// Already filtered; see [`filter_args`].
    pub extra_args: Vec<String>,
    pub search_paths: Vec<SearchPath>,
    pub env: BTreeMap<String, String>,
    /// Working directory the checker runs in; relative paths stay relative to it.
    pub cwd: Option<PathBuf>,
    /// Flag asking the checker to write a name-resolution sidecar, if supported.
    pub names_flag: Option<String>,
}

impl CheckerSpec {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        CheckerSpec {
            executable: executable.into(),
            extra_args: Vec::new(),
            search_paths: Vec::new(),
            env: BTreeMap::new(),
            cwd: None,
            names_flag: None,
        }
    }

    pub fn with_args(mut self, args: &[String]) -> Self {
        self.extra_args.extend(filter_args(args));
        self
    }

    pub fn with_search_path(mut self, sp: SearchPath) -> Self {
        self.search_paths.push(sp);
        self
    }

    pub fn base_dir(&self) -> PathBuf {
        self.cwd.clone().unwrap_or_else(|| std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")))
    }

    fn argv(&self, file: &Path) -> Vec<String> {
        let mut argv = self.extra_args.clone();
        for sp in &self.search_paths {
            argv.extend(sp.to_args());
        }
        argv.push(file.to_string_lossy().into_owned());
        argv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Timeout,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub status: Status,
    /// Present exactly when `status` is `Failure`.
    pub signature: Option<ErrorSignature>,
    pub error: Option<RawError>,
    pub wall_time: f64,
    pub log: String,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("checker executable not found: {0}")]
    CheckerNotFound(PathBuf),
    #[error("could not write scratch file: {0}")]
    ScratchWriteFailed(#[source] std::io::Error),
    #[error("could not launch checker: {0}")]
    Launch(#[source] std::io::Error),
    #[error("wall-clock budget exhausted")]
    BudgetExhausted,
}

/// Raw result of one checker run, before error extraction.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub exit_ok: bool,
    pub timed_out: bool,
    pub log: String,
}

/// Anything that can check a source text.
pub trait Checker: Send + Sync {
    /// Stable identity used as part of the cache key.
    fn identity(&self) -> String;

    /// Checks `text` as if it were a file called `name`.
    fn run(&self, name: &str, text: &str, timeout: Duration) -> Result<RunResult, OracleError>;

    /// Asks the checker which library each `Require`/`Import`/`Export` name
    /// in `file` resolves to.
    fn emit_names(&self, _file: &Path) -> Option<Vec<(String, String)>> {
        None
    }

    fn search_paths(&self) -> Vec<SearchPath> {
        Vec::new()
    }

    fn base_dir(&self) -> PathBuf {
        std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."))
    }
}

/// A checker run as an external process.
#[derive(Debug, Clone)]
pub struct ProcessChecker {
    pub spec: CheckerSpec,
}

impl ProcessChecker {
    pub fn new(spec: CheckerSpec) -> Self {
        ProcessChecker { spec }
    }

    fn resolve_executable(&self) -> Result<PathBuf, OracleError> {
        let exe = &self.spec.executable;
        if exe.components().count() > 1 {
            let full = if exe.is_absolute() { exe.clone() } else { self.spec.base_dir().join(exe) };
            return if full.is_file() { Ok(full) } else { Err(OracleError::CheckerNotFound(exe.clone())) };
        }
        std::env::var_os("PATH")
            .into_iter()
            .flat_map(|p| std::env::split_paths(&p).collect::<Vec<_>>())
            .map(|d| d.join(exe))
            .find(|p| p.is_file())
            .ok_or_else(|| OracleError::CheckerNotFound(exe.clone()))
    }

    fn command(&self, exe: &Path, argv: &[String]) -> Command {
        let mut cmd = Command::new(exe);
        cmd.args(argv).envs(&self.spec.env).stdin(Stdio::null());
        if let Some(cwd) = &self.spec.cwd {
            cmd.current_dir(cwd);
        }
        cmd
    }
}

fn read_to_string_thread<R: Read + Send + 'static>(r: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl Checker for ProcessChecker {
    fn identity(&self) -> String {
        serde_json::to_string(&self.spec).unwrap_or_default()
    }

    fn run(&self, name: &str, text: &str, timeout: Duration) -> Result<RunResult, OracleError> {
        let exe = self.resolve_executable()?;
        let dir = tempfile::Builder::new().prefix("vermin-check").tempdir().map_err(OracleError::ScratchWriteFailed)?;
        let file = dir.path().join(name);
        std::fs::write(&file, text).map_err(OracleError::ScratchWriteFailed)?;
        let mut child = self
            .command(&exe, &self.spec.argv(&file))
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(OracleError::Launch)?;
        let out = read_to_string_thread(child.stdout.take());
        let err = read_to_string_thread(child.stderr.take());
        let deadline = Instant::now() + timeout;
        let mut pause = Duration::from_millis(1);
        let (exit_ok, timed_out) = loop {
            match child.try_wait().map_err(OracleError::Launch)? {
                Some(status) => break (status.success(), false),
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break (false, true);
                }
                None => {
                    thread::sleep(pause);
                    pause = (pause * 2).min(Duration::from_millis(20));
                }
            }
        };
        let mut log = out.join().unwrap_or_default();
        log.push_str(&err.join().unwrap_or_default());
        Ok(RunResult { exit_ok, timed_out, log })
    }

    fn emit_names(&self, file: &Path) -> Option<Vec<(String, String)>> {
        let flag = self.spec.names_flag.as_ref()?;
        let exe = self.resolve_executable().ok()?;
        let dir = tempfile::tempdir().ok()?;
        let sidecar = dir.path().join("names.txt");
        let mut argv = vec![flag.clone(), sidecar.to_string_lossy().into_owned()];
        argv.extend(self.spec.argv(file));
        // The sidecar is trusted whatever the exit status: a dependency may
        // well fail to check under the version asked.
        self.command(&exe, &argv).stdout(Stdio::null()).stderr(Stdio::null()).status().ok()?;
        let text = std::fs::read_to_string(&sidecar).ok()?;
        Some(parse_names(&text))
    }

    fn search_paths(&self) -> Vec<SearchPath> {
        self.spec.search_paths.clone()
    }

    fn base_dir(&self) -> PathBuf {
        self.spec.base_dir()
    }
}

/// Parses the `<short> <qualified>` sidecar format.
pub fn parse_names(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            Some((it.next()?.to_string(), it.next()?.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Fail,
    Pass,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("the pass version does not accept the file:\n{log}")]
    PassLegFails { log: String },
    #[error("the fail version accepts the file")]
    FailLegSucceeds,
    #[error("the fail version reports a different error: expected `{expected}`, got `{actual}`")]
    SignatureMismatch { expected: ErrorSignature, actual: ErrorSignature },
    #[error("the fail version produced no recognizable error ({status:?}):\n{log}")]
    FailLegUnusable { status: Status, log: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone)]
pub struct Judgement {
    pub accepted: bool,
    pub fail: CheckOutcome,
}

/// Checker pair plus result cache and timing policy.
pub struct Oracle {
    fail: Arc<dyn Checker>,
    pass: Option<Arc<dyn Checker>>,
    normalizer: Normalizer,
    cache: HashMap<(String, String), CheckOutcome>,
    timeout: Duration,
    deadline: Option<Instant>,
    /// Candidate judgements requested.
    pub judgements: u64,
    /// Checker runs actually performed (cache misses).
    pub launches: u64,
}

pub const MIN_CHECK_TIMEOUT: Duration = Duration::from_secs(10);

/// Per-check timeout derived from the initial fail-leg wall time.
pub fn default_timeout(initial: Duration) -> Duration {
    (initial * 3).max(MIN_CHECK_TIMEOUT)
}

fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Oracle {
    pub fn new(fail: Arc<dyn Checker>, pass: Option<Arc<dyn Checker>>) -> Self {
        Oracle {
            fail,
            pass,
            normalizer: Normalizer::default(),
            cache: HashMap::new(),
            timeout: Duration::from_secs(600),
            deadline: None,
            judgements: 0,
            launches: 0,
        }
    }

    pub fn with_normalizer(mut self, n: Normalizer) -> Self {
        self.normalizer = n;
        self
    }

    pub fn set_timeout(&mut self, t: Duration) {
        self.timeout = t;
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_deadline(&mut self, d: Option<Instant>) {
        self.deadline = d;
    }

    pub fn dual(&self) -> bool {
        self.pass.is_some()
    }

    pub fn fail_checker(&self) -> &Arc<dyn Checker> {
        &self.fail
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn checker(&self, leg: Leg) -> &Arc<dyn Checker> {
        match leg {
            Leg::Fail => &self.fail,
            Leg::Pass => self.pass.as_ref().unwrap_or(&self.fail),
        }
    }

    /// Runs without consulting the cache; used for timing measurements.
    pub fn check_uncached(&mut self, leg: Leg, name: &str, text: &str) -> Result<CheckOutcome, OracleError> {
        let mut budget_bound = false;
        let mut timeout = self.timeout;
        if let Some(d) = self.deadline {
            let left = d.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(OracleError::BudgetExhausted);
            }
            if left < timeout {
                timeout = left;
                budget_bound = true;
            }
        }
        let started = Instant::now();
        let run = self.checker(leg).run(name, text, timeout)?;
        self.launches += 1;
        let wall_time = started.elapsed().as_secs_f64();
        if run.timed_out && budget_bound {
            return Err(OracleError::BudgetExhausted);
        }
        let outcome = if run.timed_out {
            CheckOutcome { status: Status::Timeout, signature: None, error: None, wall_time, log: run.log }
        } else if run.exit_ok {
            CheckOutcome { status: Status::Success, signature: None, error: None, wall_time, log: run.log }
        } else {
            match extract_error(&run.log) {
                Ok(err) => CheckOutcome {
                    status: Status::Failure,
                    signature: Some(self.normalizer.normalize(&err.message)),
                    error: Some(err),
                    wall_time,
                    log: run.log,
                },
                Err(_) => CheckOutcome { status: Status::Crash, signature: None, error: None, wall_time, log: run.log },
            }
        };
        Ok(outcome)
    }

    pub fn check(&mut self, leg: Leg, name: &str, text: &str) -> Result<CheckOutcome, OracleError> {
        let key = (text_hash(text), format!("{name}\u{0}{}", self.checker(leg).identity()));
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let outcome = self.check_uncached(leg, name, text)?;
        self.cache.insert(key, outcome.clone());
        Ok(outcome)
    }

    pub fn check_doc(&mut self, leg: Leg, doc: &Document) -> Result<CheckOutcome, OracleError> {
        self.check(leg, doc.name(), &doc.render())
    }

    /// Confirms the starting file reproduces `expected` and meets the
    /// pass-version contract. Returns the fail-leg outcome.
    pub fn verify_initial(
        &mut self,
        name: &str,
        text: &str,
        expected: &ErrorSignature,
    ) -> Result<CheckOutcome, VerifyError> {
        let fail = self.check(Leg::Fail, name, text)?;
        match fail.status {
            Status::Success => return Err(VerifyError::FailLegSucceeds),
            Status::Failure => {
                let actual = fail.signature.clone().expect("failure carries a signature");
                if !equivalent(&actual, expected) {
                    return Err(VerifyError::SignatureMismatch { expected: expected.clone(), actual });
                }
            }
            status => return Err(VerifyError::FailLegUnusable { status, log: fail.log }),
        }
        if self.dual() {
            let pass = self.check(Leg::Pass, name, text)?;
            if pass.status != Status::Success {
                return Err(VerifyError::PassLegFails { log: pass.log });
            }
        }
        Ok(fail)
    }

    /// Decides whether `text` still exhibits the target behavior. Timeouts and
    /// crashes on either leg reject.
    pub fn judge(&mut self, name: &str, text: &str, expected: &ErrorSignature) -> Result<Judgement, OracleError> {
        self.judgements += 1;
        let fail = self.check(Leg::Fail, name, text)?;
        let fail_ok = fail.status == Status::Failure && fail.signature.as_ref().is_some_and(|s| equivalent(s, expected));
        if !fail_ok {
            return Ok(Judgement { accepted: false, fail });
        }
        if self.dual() {
            let pass = self.check(Leg::Pass, name, text)?;
            if pass.status != Status::Success {
                if pass.status == Status::Timeout {
                    log::warn!("pass version timed out on a candidate; rejecting it");
                }
                return Ok(Judgement { accepted: false, fail });
            }
        }
        Ok(Judgement { accepted: true, fail })
    }
}

/// Replaces the state's document with `candidate` when the oracle accepts it.
pub fn accept_candidate(
    oracle: &mut Oracle,
    state: &mut MinimizationState,
    candidate: Document,
) -> Result<bool, OracleError> {
    let j = oracle.judge(candidate.name(), &candidate.render(), &state.expected)?;
    if j.accepted {
        state.current = candidate;
        state.error = j.fail.error;
    }
    Ok(j.accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn filters_output_flags() {
        assert_eq!(filter_args(&s(&["-time", "-Q", ".", "Top"])), s(&["-Q", ".", "Top"]));
        assert_eq!(filter_args(&[]), Vec::<String>::new());
        assert_eq!(filter_args(&s(&["-o", "out.vo", "-w", "all"])), s(&["-w", "all"]));
        assert_eq!(filter_args(&s(&["-batch", "-noglob", "-dump-glob", "g", "../rel"])), s(&["../rel"]));
    }

    /// Fails whenever the text contains `BUG`, counting runs.
    struct Fake {
        runs: AtomicU64,
        fail: bool,
    }

    impl Checker for Fake {
        fn identity(&self) -> String {
            format!("fake-{}", self.fail)
        }
        fn run(&self, _: &str, text: &str, _: Duration) -> Result<RunResult, OracleError> {
            self.runs.fetch_add(1, Ordering::SeqCst);
            if self.fail && text.contains("BUG") {
                Ok(RunResult { exit_ok: false, timed_out: false, log: "File \"x.v\", line 1, characters 0-4:\nError: bug 7.\n".into() })
            } else if text.contains("CRASH") {
                Ok(RunResult { exit_ok: false, timed_out: false, log: "segfault".into() })
            } else {
                Ok(RunResult { exit_ok: true, timed_out: false, log: String::new() })
            }
        }
    }

    fn oracle() -> (Oracle, Arc<Fake>) {
        let f = Arc::new(Fake { runs: AtomicU64::new(0), fail: true });
        let p = Arc::new(Fake { runs: AtomicU64::new(0), fail: false });
        (Oracle::new(f.clone(), Some(p)), f)
    }

    #[test]
    fn cache_prevents_second_launch() {
        let (mut o, f) = oracle();
        let a = o.check(Leg::Fail, "x.v", "BUG.").unwrap();
        let b = o.check(Leg::Fail, "x.v", "BUG.").unwrap();
        assert_eq!(a, b);
        assert_eq!(f.runs.load(Ordering::SeqCst), 1);
        assert_eq!(a.status, Status::Failure);
        assert_eq!(a.signature.unwrap().normalized_text, "Error: bug #.");
    }

    #[test]
    fn crash_is_not_failure() {
        let (mut o, _) = oracle();
        assert_eq!(o.check(Leg::Fail, "x.v", "CRASH.").unwrap().status, Status::Crash);
    }

    #[test]
    fn verify_initial_diagnostics() {
        let (mut o, _) = oracle();
        let expected = crate::error_equivalence::normalize("Error: bug 3.");
        assert!(o.verify_initial("x.v", "BUG.", &expected).is_ok());
        let other = crate::error_equivalence::normalize("Error: other.");
        assert!(matches!(o.verify_initial("x.v", "BUG.", &other), Err(VerifyError::SignatureMismatch { .. })));
        assert!(matches!(o.verify_initial("x.v", "fine.", &expected), Err(VerifyError::FailLegSucceeds)));
        let p = Arc::new(Fake { runs: AtomicU64::new(0), fail: false });
        let mut swapped = Oracle::new(p.clone(), Some(p));
        assert!(matches!(swapped.verify_initial("x.v", "BUG.", &expected), Err(VerifyError::FailLegSucceeds)));
    }

    #[test]
    fn expired_budget_is_reported() {
        let (mut o, _) = oracle();
        o.set_deadline(Some(Instant::now()));
        assert!(matches!(o.check(Leg::Fail, "x.v", "BUG."), Err(OracleError::BudgetExhausted)));
    }

    #[test]
    fn default_timeout_has_floor() {
        assert_eq!(default_timeout(Duration::from_secs(1)), Duration::from_secs(10));
        assert_eq!(default_timeout(Duration::from_secs(5)), Duration::from_secs(15));
    }

    #[test]
    fn sidecar_parsing() {
        assert_eq!(parse_names("A Top.A\n\nB  Top.B\n"), vec![("A".into(), "Top.A".into()), ("B".into(), "Top.B".into())]);
    }
}
