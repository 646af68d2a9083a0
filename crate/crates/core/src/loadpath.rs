//! Mapping between logical library names and source files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Environment variable listing extra library roots, separated by `:`.
/// Each root is bound to the empty logical prefix.
pub const PATH_ENV: &str = "VERMINPATH";

/// Logical roots that belong to the standard library and are never inlined.
pub const STDLIB_PREFIXES: &[&str] = &["Coq", "Stdlib", "Corelib"];

pub const SOURCE_EXT: &str = "v";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchPath {
    /// `-Q` or `-R`.
    pub flag: String,
    pub dir: PathBuf,
    pub prefix: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchPathError {
    #[error("expected `flag,dir,prefix`, got `{0}`")]
    Malformed(String),
    #[error("unknown search-path flag `{0}` (expected -Q or -R)")]
    UnknownFlag(String),
}

impl SearchPath {
    pub fn new(flag: &str, dir: impl Into<PathBuf>, prefix: &str) -> Self {
        SearchPath { flag: flag.to_string(), dir: dir.into(), prefix: prefix.to_string() }
    }

    /// Parses the `flag,dir,prefix` form used on the command line.
    pub fn parse_triple(spec: &str) -> Result<Self, SearchPathError> {
        let parts: Vec<&str> = spec.splitn(3, ',').collect();
        let [flag, dir, prefix] = parts[..] else {
            return Err(SearchPathError::Malformed(spec.to_string()));
        };
        if flag != "-Q" && flag != "-R" {
            return Err(SearchPathError::UnknownFlag(flag.to_string()));
        }
        Ok(SearchPath::new(flag, dir, prefix))
    }

    pub fn to_args(&self) -> [String; 3] {
        [self.flag.clone(), self.dir.to_string_lossy().into_owned(), self.prefix.clone()]
    }
}

/// Extracts `-Q dir prefix` / `-R dir prefix` triples from an argument list,
/// returning them and the remaining arguments.
pub fn split_search_args(args: &[String]) -> (Vec<SearchPath>, Vec<String>) {
    let mut paths = Vec::new();
    let mut rest = Vec::new();
    let mut i = 0;
    while i < args.len() {
        if (args[i] == "-Q" || args[i] == "-R") && i + 2 < args.len() {
            paths.push(SearchPath::new(&args[i], &args[i + 1], &args[i + 2]));
            i += 3;
        } else {
            rest.push(args[i].clone());
            i += 1;
        }
    }
    (paths, rest)
}

pub fn env_search_paths(value: &str) -> Vec<SearchPath> {
    value.split(':').filter(|d| !d.is_empty()).map(|d| SearchPath::new("-R", d, "")).collect()
}

pub fn is_stdlib(name: &str) -> bool {
    let root = name.split('.').next().unwrap_or("");
    STDLIB_PREFIXES.contains(&root)
}

fn join_logical(prefix: &str, rest: &str) -> String {
    match (prefix.is_empty(), rest.is_empty()) {
        (true, _) => rest.to_string(),
        (_, true) => prefix.to_string(),
        _ => format!("{prefix}.{rest}"),
    }
}

/// True when `short` names `full`: equal, or a dot-aligned suffix.
pub fn names_suffix(full: &str, short: &str) -> bool {
    full == short || (full.len() > short.len() && full.ends_with(short) && full.as_bytes()[full.len() - short.len() - 1] == b'.')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Library {
    pub logical: String,
    pub path: PathBuf,
}

/// The set of libraries visible through a list of search paths, indexed
/// eagerly. Paths are resolved relative to `base` without being rewritten.
#[derive(Debug, Clone, Default)]
pub struct LoadPath {
    libraries: Vec<Library>,
}

impl LoadPath {
    pub fn scan(paths: &[SearchPath], base: &Path) -> Self {
        let mut libraries = Vec::new();
        for sp in paths {
            let root = base.join(&sp.dir);
            let mut found: Vec<Library> = WalkDir::new(&root)
                .follow_links(true)
                .into_iter()
                .filter_map(Result::ok)
                .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == SOURCE_EXT))
                .filter_map(|e| {
                    let rel = e.path().strip_prefix(&root).ok()?.with_extension("");
                    let comps: Vec<String> =
                        rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                    Some(Library { logical: join_logical(&sp.prefix, &comps.join(".")), path: e.path().to_path_buf() })
                })
                .collect();
            found.sort_by(|a, b| a.logical.cmp(&b.logical));
            for lib in found {
                if !libraries.iter().any(|l: &Library| l.logical == lib.logical) {
                    libraries.push(lib);
                }
            }
        }
        LoadPath { libraries }
    }

    pub fn libraries(&self) -> &[Library] {
        &self.libraries
    }

    /// Resolves a name as written in a `Require`, optionally under a
    /// `From` prefix. Exact matches win over suffix matches; among suffix
    /// matches the first search path wins.
    pub fn resolve(&self, from: Option<&str>, name: &str) -> Option<&Library> {
        let candidates: Vec<&Library> = self
            .libraries
            .iter()
            .filter(|l| match from {
                Some(p) => l.logical.starts_with(&format!("{p}.")) && names_suffix(&l.logical[p.len() + 1..], name),
                None => names_suffix(&l.logical, name),
            })
            .collect();
        let full = from.map(|p| join_logical(p, name)).unwrap_or_else(|| name.to_string());
        candidates.iter().find(|l| l.logical == full).or(candidates.first()).copied()
    }

    pub fn logical_name_of(&self, file: &Path) -> Option<&str> {
        let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        let target = canon(file);
        self.libraries.iter().find(|l| canon(&l.path) == target).map(|l| l.logical.as_str())
    }
}
