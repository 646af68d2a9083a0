//! Fixtures and harness shared by the integration targets.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vermin_core::loadpath::SearchPath;
use vermin_core::oracle::Checker;
use vermin_core::Options;
use vermin_toy::{ToyChecker, Version};

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Copies a fixture directory into a fresh temporary directory.
pub fn copy_fixture(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixture_dir(name)).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

pub fn top_path() -> Vec<SearchPath> {
    vec![SearchPath::new("-Q", ".", "Top")]
}

pub fn toy(version: Version, base: &Path) -> Arc<dyn Checker> {
    Arc::new(ToyChecker::new(version, top_path(), base))
}

pub fn pair(base: &Path) -> (Arc<dyn Checker>, Option<Arc<dyn Checker>>) {
    (toy(Version::Fail, base), Some(toy(Version::Pass, base)))
}

pub fn options(checkpoint: Option<PathBuf>) -> Options {
    Options { checkpoint, ..Options::default() }
}

/// Lines of an output file without its header comments.
pub fn body_of(output: &str) -> String {
    output.lines().filter(|l| !l.starts_with("(* ")).map(|l| format!("{l}\n")).collect()
}

/// Sentences of `text`, whitespace-collapsed, with inlining scaffolding
/// (wrapper modules, their `End`s and imports) dropped.
pub fn logical_sentences(text: &str) -> Vec<String> {
    let doc = vermin_core::Document::parse("out.v", text).unwrap();
    let mut wrappers: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for s in doc.sentences() {
        let stripped = vermin_core::sentence_model::lexer::strip_comments(&s.text);
        let flat = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
        if flat.is_empty() {
            continue;
        }
        let words: Vec<&str> = flat.trim_end_matches('.').split(' ').collect();
        match words.as_slice() {
            ["Module", name] | ["Module", "Export", name] | ["Module", "Import", name] => wrappers.push(name.to_string()),
            ["End", name] if wrappers.iter().any(|w| w == name) => {}
            ["Import" | "Export", names @ ..] if names.iter().all(|n| wrappers.iter().any(|w| n.ends_with(w.as_str()))) => {}
            _ => out.push(flat),
        }
    }
    out
}

// ----- randomized fixtures -------------------------------------------------------

const TRIGGERS: &[&str] = &["trigger_bug \"random bug\"", "trigger_universe", "trigger_bugged_tactic", "trigger_numbered", "trigger_forgotten"];

/// A random single-file fixture: definitions, lemmas, modules, sections,
/// obligations and tactics, with one trigger somewhere in it.
pub fn random_fixture(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..28);
    let trigger_at = rng.gen_range(n / 2..n);
    let mut defs: Vec<String> = Vec::new();
    let mut tactics: Vec<String> = Vec::new();
    let mut out = String::new();
    for i in 0..n {
        let dep = |rng: &mut ChaCha8Rng, defs: &[String]| defs.choose(rng).cloned().unwrap_or_else(|| "0".to_string());
        if i == trigger_at {
            let trig = TRIGGERS.choose(&mut rng).unwrap();
            let d = dep(&mut rng, &defs);
            match rng.gen_range(0..4) {
                0 => out.push_str(&format!("{trig}.\n")),
                1 => out.push_str(&format!("Lemma bug_{i} : {d} = {d}.\nProof.\nsimpl.\n{trig}.\nQed.\n")),
                2 => {
                    out.push_str(&format!("Ltac bad_{i} := idtac; {trig}.\n"));
                    out.push_str(&format!("Goal {d} = {d}.\nProof.\ntry reflexivity; bad_{i}.\nQed.\n"));
                }
                _ => out.push_str(&format!("Definition pre_{i} := {d}.\nLemma bug_{i} : True.\nProof.\nexact I.\n{trig}.\nQed.\n")),
            }
            continue;
        }
        match rng.gen_range(0..8) {
            0 | 1 => {
                let d = dep(&mut rng, &defs);
                out.push_str(&format!("Definition d{i} := S {d}.\n"));
                defs.push(format!("d{i}"));
            }
            2 => {
                let d = dep(&mut rng, &defs);
                let t = tactics.choose(&mut rng).cloned().unwrap_or_else(|| "reflexivity".into());
                out.push_str(&format!("Lemma l{i} : {d} = {d}.\nProof.\n{t}.\nQed.\n"));
            }
            3 => {
                let d = dep(&mut rng, &defs);
                out.push_str(&format!("Module M{i}.\nDefinition m{i} := {d}.\nEnd M{i}.\n"));
                if rng.gen_bool(0.5) {
                    out.push_str(&format!("Import M{i}.\n"));
                    defs.push(format!("m{i}"));
                } else {
                    defs.push(format!("M{i}.m{i}"));
                }
            }
            4 => out.push_str(&format!("Section S{i}.\nVariable v{i} : nat.\nDefinition s{i} := v{i}.\nEnd S{i}.\n")),
            5 => {
                out.push_str(&format!("Program Definition p{i} : nat := _.\nNext Obligation.\nexact 0.\nDefined.\n"));
                defs.push(format!("p{i}"));
            }
            6 => {
                out.push_str(&format!("Ltac t{i} := reflexivity.\n"));
                tactics.push(format!("t{i}"));
            }
            _ => {
                let d = dep(&mut rng, &defs);
                out.push_str(&format!("Definition f{i} : nat.\nProof.\nexact (S {d}).\nDefined.\n"));
                defs.push(format!("f{i}"));
            }
        }
    }
    out
}

/// `count` independent definitions interleaved with a chain of `necessary`
/// blocks the error depends on; the error block is the last necessary one.
pub fn chain_fixture(count: usize, necessary: usize, seed: u64) -> (String, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = count - necessary;
    let mut slots: Vec<bool> = std::iter::repeat_n(true, necessary - 1).chain(std::iter::repeat_n(false, filler)).collect();
    slots.shuffle(&mut rng);
    let mut text = String::new();
    let mut kept = Vec::new();
    let (mut chain, mut fill) = (0, 0);
    for needed in slots {
        if needed {
            let prev = if chain == 0 { "0".to_string() } else { format!("n{}", chain - 1) };
            let s = format!("Definition n{chain} := S {prev}.");
            kept.push(s.clone());
            text.push_str(&s);
            text.push('\n');
            chain += 1;
        } else {
            if rng.gen_bool(0.5) {
                text.push_str(&format!("Definition junk{fill} := {fill}.\n"));
            } else {
                text.push_str(&format!("Lemma junk{fill} : True.\nProof.\nexact I.\nQed.\n"));
            }
            fill += 1;
        }
    }
    let last = format!("Lemma target : n{} = n{}.", chain - 1, chain - 1);
    text.push_str(&format!("{last}\nProof.\nunfold n{}.\ntrigger_bug \"chain bug\".\nQed.\n", chain - 1));
    kept.push(last);
    (text, kept)
}
