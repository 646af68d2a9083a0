//! A small two-version checker for vernacular files.
//!
//! It resolves names, tracks modules, sections, proofs and obligations, and
//! runs a tiny Ltac dialect. The `fail` version additionally honours
//! `trigger_*` sentences and tactics, which raise configurable errors; the
//! `pass` version treats them as no-ops. Term typing is not modelled: a term
//! is accepted when every name it mentions resolves.

mod interp;
mod tactics;
mod terms;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use vermin_core::loadpath::{env_search_paths, SearchPath};
use vermin_core::oracle::{Checker, OracleError, RunResult};

use interp::{FileInterp, Stop, World};

pub use interp::VERBOSE_FLAG;

/// Exit code of an error report.
pub const EXIT_ERROR: i32 = 1;
/// Exit code of an internal fault (unreadable file, bad arguments).
pub const EXIT_FAULT: i32 = 2;
/// Exit code when the run hits its deadline.
pub const EXIT_TIMEOUT: i32 = 124;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Version {
    Pass,
    Fail,
}

impl Version {
    pub fn parse(s: &str) -> Option<Version> {
        match s {
            "pass" => Some(Version::Pass),
            "fail" => Some(Version::Fail),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Version::Pass => "pass",
            Version::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub version: Version,
    pub search_paths: Vec<SearchPath>,
    pub base_dir: PathBuf,
    pub deadline: Option<Instant>,
}

impl Config {
    pub fn new(version: Version) -> Self {
        Config {
            version,
            search_paths: Vec::new(),
            base_dir: std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")),
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub log: String,
    /// `(short, qualified)` for every `Require`/`Import`/`Export` name of the
    /// checked file that resolved.
    pub names: Vec<(String, String)>,
    pub timed_out: bool,
}

/// Checks `text` as the contents of the file `path`.
pub fn check_text(path: &Path, text: &str, cfg: &Config) -> Outcome {
    let mut world = World::new(cfg);
    let root = world.logical_name_of(path);
    let mut file = FileInterp::new(&mut world, path.display().to_string(), root, true);
    let result = file.run(text);
    let names = std::mem::take(&mut file.names);
    let (code, log, timed_out) = match result {
        Ok(()) => (0, String::new(), false),
        Err(Stop::Error(e)) => (EXIT_ERROR, e.render(), false),
        Err(Stop::Timeout) => (EXIT_TIMEOUT, "Timeout!\n".to_string(), true),
        Err(Stop::Internal(m)) => (EXIT_FAULT, format!("toycheck: {m}\n"), false),
    };
    Outcome { code, log, names, timed_out }
}

pub fn check_file(path: &Path, cfg: &Config) -> Outcome {
    match std::fs::read_to_string(path) {
        Ok(text) => check_text(path, &text, cfg),
        Err(e) => Outcome {
            code: EXIT_FAULT,
            log: format!("toycheck: cannot read {}: {e}\n", path.display()),
            names: Vec::new(),
            timed_out: false,
        },
    }
}

/// Renders a names table as the `--emit-names` sidecar expects it.
pub fn render_names(names: &[(String, String)]) -> String {
    names.iter().map(|(s, q)| format!("{s} {q}\n")).collect()
}

const USAGE: &str = "usage: toycheck [--version=pass|fail] [--emit-names FILE] [-Q DIR PREFIX] [-R DIR PREFIX] FILE.v";

/// The `toycheck` command line. Returns the process exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let mut version = Version::Pass;
    let mut emit = None;
    let mut paths = Vec::new();
    let mut file = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let value = |it: &mut std::slice::Iter<'_, String>| it.next().cloned();
        match a.as_str() {
            "--version" => match value(&mut it).as_deref().and_then(Version::parse) {
                Some(v) => version = v,
                None => return usage("--version expects pass or fail"),
            },
            s if s.starts_with("--version=") => match Version::parse(&s["--version=".len()..]) {
                Some(v) => version = v,
                None => return usage("--version expects pass or fail"),
            },
            "--emit-names" => match value(&mut it) {
                Some(p) => emit = Some(PathBuf::from(p)),
                None => return usage("--emit-names expects a path"),
            },
            "-Q" | "-R" => match (value(&mut it), value(&mut it)) {
                (Some(dir), Some(prefix)) => paths.push(SearchPath::new(a, dir, &prefix)),
                _ => return usage("search path flags expect DIR PREFIX"),
            },
            "-h" | "--help" => {
                println!("{USAGE}");
                return 0;
            }
            s if s.starts_with('-') => {}
            s => {
                if file.replace(PathBuf::from(s)).is_some() {
                    return usage("exactly one file expected");
                }
            }
        }
    }
    let Some(file) = file else {
        return usage("no file given");
    };
    if let Ok(v) = std::env::var("VERMINPATH") {
        paths.extend(env_search_paths(&v));
    }
    let mut cfg = Config::new(version);
    cfg.search_paths = paths;
    let out = check_file(&file, &cfg);
    if let Some(p) = emit {
        if let Err(e) = std::fs::write(&p, render_names(&out.names)) {
            eprintln!("toycheck: cannot write {}: {e}", p.display());
            return EXIT_FAULT;
        }
    }
    print!("{}", out.log);
    out.code
}

fn usage(msg: &str) -> i32 {
    eprintln!("toycheck: {msg}\n{USAGE}");
    EXIT_FAULT
}

/// The toy checker as an in-process [`Checker`].
#[derive(Debug, Clone)]
pub struct ToyChecker {
    pub version: Version,
    pub search_paths: Vec<SearchPath>,
    pub base_dir: PathBuf,
}

impl ToyChecker {
    pub fn new(version: Version, search_paths: Vec<SearchPath>, base_dir: impl Into<PathBuf>) -> Self {
        ToyChecker { version, search_paths, base_dir: base_dir.into() }
    }

    fn config(&self, deadline: Option<Instant>) -> Config {
        Config { version: self.version, search_paths: self.search_paths.clone(), base_dir: self.base_dir.clone(), deadline }
    }
}

impl Checker for ToyChecker {
    fn identity(&self) -> String {
        let paths: Vec<String> = self.search_paths.iter().map(|p| p.to_args().join(" ")).collect();
        format!("toy:{}:{}:{}", self.version.as_str(), self.base_dir.display(), paths.join(";"))
    }

    fn run(&self, name: &str, text: &str, timeout: Duration) -> Result<RunResult, OracleError> {
        let out = check_text(Path::new(name), text, &self.config(Some(Instant::now() + timeout)));
        Ok(RunResult { exit_ok: out.code == 0, timed_out: out.timed_out, log: out.log })
    }

    fn emit_names(&self, file: &Path) -> Option<Vec<(String, String)>> {
        let path = if file.is_absolute() { file.to_path_buf() } else { self.base_dir.join(file) };
        let text = std::fs::read_to_string(&path).ok()?;
        Some(check_text(&path, &text, &self.config(None)).names)
    }

    fn search_paths(&self) -> Vec<SearchPath> {
        self.search_paths.clone()
    }

    fn base_dir(&self) -> PathBuf {
        self.base_dir.clone()
    }
}
