//! The `vermin` driver: build-log discovery, run orchestration,
//! checkpoint/resume and output emission.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use clap::Parser;
use regex::Regex;
use thiserror::Error;

use vermin_core::error_equivalence::{extract_error, ErrorSignature, RawError};
use vermin_core::inliner::{DependencyGraph, InlineEnv};
use vermin_core::loadpath::{env_search_paths, SearchPath};
use vermin_core::oracle::{Checker, CheckerSpec, Leg, OracleError, ProcessChecker, Status, VerifyError};
use vermin_core::passes::{Limits, RunEnd};
use vermin_core::state::CheckpointError;
use vermin_core::{finalize, initialize, minimize, MinimizationState, MinimizeError, Oracle, Options, RunStats};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_REPRODUCED: i32 = 10;
pub const EXIT_RESUMABLE: i32 = 11;
pub const EXIT_CONFIG: i32 = 12;

/// Environment variable holding extra search paths, honoured for both versions.
pub const PATH_ENV: &str = "VERMINPATH";

#[derive(Debug, Parser, Clone)]
#[command(name = "vermin", version, about = "Minimize a failing vernacular file against a pair of checker versions")]
pub struct Cli {
    /// File to minimize. Taken from the build log when omitted.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Build log holding wrapper invocation lines and the error report.
    #[arg(long)]
    pub build_log: Option<PathBuf>,
    /// Checker version that exhibits the bug.
    #[arg(long)]
    pub fail_checker: PathBuf,
    /// Checker version that accepts the file.
    #[arg(long)]
    pub pass_checker: Option<PathBuf>,
    /// Search path for the fail version as `flag,dir,prefix`.
    #[arg(long = "fail-path", value_name = "FLAG,DIR,PREFIX", allow_hyphen_values = true)]
    pub fail_paths: Vec<String>,
    /// Search path for the pass version as `flag,dir,prefix`.
    #[arg(long = "pass-path", value_name = "FLAG,DIR,PREFIX", allow_hyphen_values = true)]
    pub pass_paths: Vec<String>,
    /// Argument passed to both checkers.
    #[arg(long = "arg", allow_hyphen_values = true)]
    pub args: Vec<String>,
    /// Argument passed to the fail version only.
    #[arg(long = "fail-arg", allow_hyphen_values = true)]
    pub fail_args: Vec<String>,
    /// Argument passed to the pass version only.
    #[arg(long = "pass-arg", allow_hyphen_values = true)]
    pub pass_args: Vec<String>,
    /// Flag asking a checker to write its name-resolution sidecar.
    #[arg(long, allow_hyphen_values = true)]
    pub names_flag: Option<String>,
    /// Inline every dependency before any other pass.
    #[arg(long)]
    pub inline_all_first: bool,
    /// Use only the fail version, even if a pass checker is given.
    #[arg(long)]
    pub single_version: bool,
    /// Never modify the sentences of the error's enclosing script.
    #[arg(long)]
    pub preserve_error_script: bool,
    /// Wall-clock budget in seconds; on expiry the run can be resumed.
    #[arg(long)]
    pub wall_budget: Option<f64>,
    /// Per-check timeout in seconds, instead of one derived from the first check.
    #[arg(long)]
    pub check_timeout: Option<f64>,
    /// Continue from the checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Minimized file. Defaults to `<stem>.min.v` next to the input
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON statistics sidecar. Defaults to `<output>.stats.json`
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Checkpoint file. Defaults to `<output>.checkpoint.json`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop as if interrupted after this many accepted candidates.
    #[arg(long, hide = true)]
    pub stop_after: Option<u64>,
}

// ----- build-log discovery -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub cwd: PathBuf,
    pub env_path: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    /// The file the error points at, as the invocation names it.
    pub file: PathBuf,
    pub invocation: Invocation,
    pub error: RawError,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiscoverError {
    #[error("the build log contains no error report")]
    NoErrorFound,
    #[error("no checker invocation in the build log names `{0}`")]
    NoMatchingInvocation(String),
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^VERMIN_CALL: cwd=(.*?) env_path=(.*?) args=(\[.*\])\s*$").expect("static regex"))
}

pub fn parse_invocations(log: &str) -> Vec<Invocation> {
    log.lines()
        .filter_map(|l| {
            let c = call_re().captures(l)?;
            let args: Vec<String> = serde_json::from_str(&c[3]).ok()?;
            Some(Invocation { cwd: PathBuf::from(&c[1]), env_path: c[2].to_string(), args })
        })
        .collect()
}

fn names_file(inv: &Invocation, arg: &str, error_file: &Path) -> bool {
    if arg.starts_with('-') {
        return false;
    }
    let arg = Path::new(arg);
    let full = if arg.is_absolute() { arg.to_path_buf() } else { inv.cwd.join(arg) };
    let err_full = if error_file.is_absolute() { error_file.to_path_buf() } else { inv.cwd.join(error_file) };
    full == err_full || arg == error_file
}

/// The error of the log and the last invocation that checked its file.
pub fn discover_task(log: &str) -> Result<Task, DiscoverError> {
    let error = extract_error(log).map_err(|_| DiscoverError::NoErrorFound)?;
    let error_file = PathBuf::from(&error.file);
    let invocation = parse_invocations(log)
        .into_iter()
        .rev()
        .find(|inv| inv.args.iter().any(|a| names_file(inv, a, &error_file)))
        .ok_or_else(|| DiscoverError::NoMatchingInvocation(error.file.clone()))?;
    let file = invocation
        .args
        .iter()
        .find(|a| names_file(&invocation, a, &error_file))
        .map(PathBuf::from)
        .expect("matched above");
    Ok(Task { file, invocation, error })
}

// ----- running -------------------------------------------------------------------

/// One minimization job with its checkers already built.
#[derive(Debug, Clone)]
pub struct Job {
    /// Target file, relative to the fail checker's base directory or absolute.
    pub file: PathBuf,
    /// The error to preserve; found by a first fail-version run when absent.
    pub error: Option<RawError>,
    pub options: Options,
    pub output: PathBuf,
    pub stats: Option<PathBuf>,
    pub resume: bool,
    pub inline: bool,
}

#[derive(Debug)]
pub struct Report {
    pub output: String,
    pub stats: RunStats,
    pub oracle_launches: u64,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    NotReproduced(MinimizeError),
    #[error("budget exhausted; resume with --resume (checkpoint: {0})")]
    Resumable(String),
    #[error("{0}")]
    Config(String),
    #[error("could not write {path}: {source}")]
    OutputWriteFailed { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::NotReproduced(_) => EXIT_NOT_REPRODUCED,
            RunError::Resumable(_) => EXIT_RESUMABLE,
            RunError::Config(_) | RunError::OutputWriteFailed { .. } => EXIT_CONFIG,
        }
    }
}

impl From<MinimizeError> for RunError {
    fn from(e: MinimizeError) -> Self {
        match e {
            MinimizeError::Oracle(OracleError::BudgetExhausted) => RunError::Resumable(String::new()),
            MinimizeError::Oracle(e) | MinimizeError::Verify(VerifyError::Oracle(e)) => RunError::Config(e.to_string()),
            other => RunError::NotReproduced(other),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::OutputWriteFailed { path: path.to_path_buf(), source })
}

fn expected_signature(oracle: &mut Oracle, name: &str, text: &str, error: Option<&RawError>) -> Result<ErrorSignature, RunError> {
    if let Some(e) = error {
        return Ok(oracle.normalizer().normalize(&e.message));
    }
    let out = oracle.check(Leg::Fail, name, text).map_err(|e| RunError::Config(e.to_string()))?;
    match (out.status, out.signature) {
        (Status::Failure, Some(sig)) => Ok(sig),
        (Status::Success, _) => Err(RunError::NotReproduced(MinimizeError::Verify(VerifyError::FailLegSucceeds))),
        (status, _) => Err(RunError::NotReproduced(MinimizeError::Verify(VerifyError::FailLegUnusable { status, log: out.log }))),
    }
}

/// Runs `job` to completion (or to its budget) and writes its outputs.
pub fn execute(job: &Job, fail: Arc<dyn Checker>, pass: Option<Arc<dyn Checker>>) -> Result<Report, RunError> {
    let base = fail.base_dir();
    let path = if job.file.is_absolute() { job.file.clone() } else { base.join(&job.file) };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).ok_or_else(|| RunError::Config("target has no file name".into()))?;
    let original_file = job.file.display().to_string();
    let names_source = pass.clone().unwrap_or_else(|| fail.clone());
    let mut oracle = Oracle::new(fail.clone(), pass);

    let checkpoint = job.options.checkpoint.clone();
    let mut state = match (&checkpoint, job.resume) {
        (Some(cp), true) if cp.exists() => {
            MinimizationState::load_checkpoint(cp).map_err(|e: CheckpointError| RunError::Config(e.to_string()))?
        }
        (_, true) => return Err(RunError::Config("--resume needs an existing checkpoint".into())),
        _ => {
            let text = std::fs::read_to_string(&path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
            let expected = expected_signature(&mut oracle, &name, &text, job.error.as_ref())?;
            initialize(&mut oracle, &name, &text, expected, &job.options)?
        }
    };

    let inline = if job.inline {
        match DependencyGraph::build(&path, &fail.search_paths(), &base) {
            Ok(graph) => Some(InlineEnv::new(graph, Some(names_source))),
            Err(e) => {
                log::warn!("dependencies will not be inlined: {e}");
                None
            }
        }
    } else {
        None
    };

    let outcome = minimize(&mut oracle, &mut state, inline.as_ref(), &job.options)?;
    if outcome.end != RunEnd::Finished {
        if let Err(e) = state.save_checkpoint() {
            log::warn!("checkpoint not written: {e}");
        }
        let cp = checkpoint.map(|p| p.display().to_string()).unwrap_or_else(|| "none".into());
        return Err(RunError::Resumable(cp));
    }
    let (output, stats) = finalize(&mut oracle, &state, inline.as_ref(), &original_file)?;
    write(&job.output, &output)?;
    if let Some(p) = &job.stats {
        let json = serde_json::to_string_pretty(&stats).map_err(|e| RunError::Config(e.to_string()))?;
        write(p, &json)?;
    }
    Ok(Report { output, stats, oracle_launches: oracle.launches })
}

fn parse_paths(specs: &[String]) -> Result<Vec<SearchPath>, RunError> {
    specs.iter().map(|s| SearchPath::parse_triple(s).map_err(|e| RunError::Config(e.to_string()))).collect()
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct Plan {
    job: Job,
    fail: CheckerSpec,
    pass: Option<CheckerSpec>,
}

fn plan(cli: &Cli) -> Result<Plan, RunError> {
    let task = match &cli.build_log {
        Some(p) => {
            let log = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("cannot read {}: {e}", p.display())))?;
            Some(discover_task(&log).map_err(|e| RunError::Config(e.to_string()))?)
        }
        None => None,
    };
    let file = cli
        .file
        .clone()
        .or_else(|| task.as_ref().map(|t| t.file.clone()))
        .ok_or_else(|| RunError::Config("either --file or --build-log is required".into()))?;

    let mut common = cli.args.clone();
    let mut env_paths = std::env::var(PATH_ENV).map(|v| env_search_paths(&v)).unwrap_or_default();
    let mut cwd = None;
    let mut env = Vec::new();
    if let Some(t) = &task {
        cwd = Some(t.invocation.cwd.clone());
        let passthrough: Vec<String> = t.invocation.args.iter().filter(|a| Path::new(a.as_str()) != t.file).cloned().collect();
        common.extend(passthrough);
        if !t.invocation.env_path.is_empty() {
            env.push((PATH_ENV.to_string(), t.invocation.env_path.clone()));
            env_paths.extend(env_search_paths(&t.invocation.env_path));
        }
    }
    let build = |exe: &Path, own: &[String], paths: &[String]| -> Result<CheckerSpec, RunError> {
        let mut spec = CheckerSpec::new(exe).with_args(&common).with_args(own);
        for sp in parse_paths(paths)?.into_iter().chain(env_paths.iter().cloned()) {
            spec = spec.with_search_path(sp);
        }
        spec.cwd = cwd.clone();
        spec.env.extend(env.iter().cloned());
        spec.names_flag = cli.names_flag.clone();
        Ok(spec)
    };
    let fail = build(&cli.fail_checker, &cli.fail_args, &cli.fail_paths)?;
    let pass = match (&cli.pass_checker, cli.single_version) {
        (Some(exe), false) => Some(build(exe, &cli.pass_args, &cli.pass_paths)?),
        _ => None,
    };

    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let output = cli.output.clone().unwrap_or_else(|| PathBuf::from(format!("{stem}.min.v")));
    let stats = cli.stats.clone().unwrap_or_else(|| with_suffix(&output, ".stats.json"));
    let checkpoint = cli.checkpoint.clone().unwrap_or_else(|| with_suffix(&output, ".checkpoint.json"));
    let deadline = cli.wall_budget.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    let options = Options {
        inline_all_first: cli.inline_all_first,
        preserve_error_script: cli.preserve_error_script,
        check_timeout: cli.check_timeout.map(|s| Duration::from_secs_f64(s.max(0.0))),
        deadline,
        checkpoint: Some(checkpoint),
        limits: Limits { max_acceptances: cli.stop_after },
    };
    let job = Job { file, error: task.map(|t| t.error), options, output, stats: Some(stats), resume: cli.resume, inline: true };
    Ok(Plan { job, fail, pass })
}

/// Runs the command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = plan(cli).and_then(|p| {
        let fail: Arc<dyn Checker> = Arc::new(ProcessChecker::new(p.fail));
        let pass = p.pass.map(|s| Arc::new(ProcessChecker::new(s)) as Arc<dyn Checker>);
        execute(&p.job, fail, pass).map(|r| (p.job.output, r))
    });
    match result {
        Ok((path, report)) => {
            eprintln!(
                "vermin: wrote {} ({} lines, ratio {:.3}, failed inlines: {})",
                path.display(),
                report.stats.final_size,
                report.stats.reduction_ratio,
                if report.stats.failed_inlines.is_empty() { "none".to_string() } else { report.stats.failed_inlines.join(", ") }
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("vermin: {e}");
            if let RunError::NotReproduced(_) = e {
                eprintln!("Error: Could not minimize file");
            }
            e.exit_code()
        }
    }
}
