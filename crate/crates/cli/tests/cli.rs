//! End-to-end runs of the `vermin` binary against `toycheck`.

mod support;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use vermin_core::oracle::{CheckerSpec, Leg, ProcessChecker, Status};
use vermin_core::Oracle;

use support::*;

const TOY: &str = env!("CARGO_BIN_EXE_toycheck");

fn vermin(dir: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vermin"))
        .current_dir(dir)
        .args(["--fail-checker", TOY, "--fail-arg=--version=fail", "--fail-path", "-Q,.,Top"])
        .args(["--pass-checker", TOY, "--pass-arg=--version=pass", "--pass-path", "-Q,.,Top"])
        .args(["--names-flag", "--emit-names"])
        .args(extra)
        .output()
        .unwrap()
}

fn comparable(out: &str) -> String {
    out.lines().filter(|l| !l.starts_with("(* expected-compile-time-seconds:")).map(|l| format!("{l}\n")).collect()
}

#[test]
fn pass_version_rejecting_the_original_is_not_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bug.v"), "Check missing.\n").unwrap();
    let out = vermin(dir.path(), &["--file", "bug.v"]);
    assert_eq!(out.status.code(), Some(vermin_cli::EXIT_NOT_REPRODUCED));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pass version does not accept"), "{err}");
    assert!(err.contains("Could not minimize file"), "{err}");
}

#[test]
fn configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vermin(dir.path(), &[]).status.code(), Some(vermin_cli::EXIT_CONFIG));
    assert_eq!(vermin(dir.path(), &["--file", "absent.v"]).status.code(), Some(vermin_cli::EXIT_CONFIG));
    assert_eq!(vermin(dir.path(), &["--file", "x.v", "--fail-path", "-X,.,Top"]).status.code(), Some(vermin_cli::EXIT_CONFIG));
    assert_eq!(vermin(dir.path(), &["--file", "x.v", "--resume"]).status.code(), Some(vermin_cli::EXIT_CONFIG));
}

#[test]
fn build_log_drives_the_run() {
    let dir = copy_fixture("golden");
    let toy_fail = Command::new(TOY).current_dir(dir.path()).args(["--version=fail", "-Q", ".", "Top", "./bug.v"]).output().unwrap();
    let mut log = String::new();
    let call = |file: &str| format!("VERMIN_CALL: cwd={} env_path= args=[\"-Q\",\".\",\"Top\",\"{file}\"]\n", dir.path().display());
    log.push_str(&call("./UsefulTactics.v"));
    log.push_str(&call("./bug.v"));
    log.push_str(&String::from_utf8_lossy(&toy_fail.stdout));
    fs::write(dir.path().join("build.log"), log).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vermin"))
        .current_dir(dir.path())
        .args(["--build-log", "build.log", "--fail-checker", TOY, "--fail-arg=--version=fail"])
        .args(["--pass-checker", TOY, "--pass-arg=--version=pass", "--names-flag", "--emit-names"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let min = fs::read_to_string(dir.path().join("bug.min.v")).unwrap();
    assert!(logical_sentences(&body_of(&min)).contains(&"crush.".to_string()), "{min}");
}

#[test]
fn budget_exhaustion_resumes_to_the_unbudgeted_output() {
    let (text, _) = chain_fixture(120, 10, 11);
    let straight_dir = tempfile::tempdir().unwrap();
    fs::write(straight_dir.path().join("bug.v"), &text).unwrap();
    let out = vermin(straight_dir.path(), &["--file", "bug.v"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let straight = fs::read_to_string(straight_dir.path().join("bug.min.v")).unwrap();

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bug.v"), &text).unwrap();
    let first = vermin(dir.path(), &["--file", "bug.v", "--wall-budget", "1"]);
    assert_eq!(first.status.code(), Some(vermin_cli::EXIT_RESUMABLE), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(!dir.path().join("bug.min.v").exists());
    let resumed = vermin(dir.path(), &["--file", "bug.v", "--resume"]);
    assert_eq!(resumed.status.code(), Some(0), "{}", String::from_utf8_lossy(&resumed.stderr));
    let resumed = fs::read_to_string(dir.path().join("bug.min.v")).unwrap();
    assert_eq!(comparable(&resumed), comparable(&straight));
}

#[test]
fn interrupted_runs_resume_one_acceptance_at_a_time() {
    let dir = copy_fixture("diamond");
    let straight = vermin(dir.path(), &["--file", "bug.v", "--output", "straight.v"]);
    assert_eq!(straight.status.code(), Some(0));
    let mut args = vec!["--file", "bug.v", "--stop-after", "1"];
    let mut steps = 0;
    loop {
        let out = vermin(dir.path(), &args);
        match out.status.code() {
            Some(0) => break,
            Some(c) if c == vermin_cli::EXIT_RESUMABLE => {}
            other => panic!("unexpected exit {other:?}: {}", String::from_utf8_lossy(&out.stderr)),
        }
        steps += 1;
        let limit: &'static str = Box::leak((steps + 1).to_string().into_boxed_str());
        args = vec!["--file", "bug.v", "--resume", "--stop-after", limit];
    }
    assert!(steps > 1);
    let a = fs::read_to_string(dir.path().join("straight.v")).unwrap();
    let b = fs::read_to_string(dir.path().join("bug.min.v")).unwrap();
    assert_eq!(comparable(&a), comparable(&b));
}

#[test]
fn stats_sidecar_matches_header() {
    let dir = copy_fixture("uninlinable");
    assert_eq!(vermin(dir.path(), &["--file", "bug.v"]).status.code(), Some(0));
    let out = fs::read_to_string(dir.path().join("bug.min.v")).unwrap();
    let stats: vermin_core::RunStats = serde_json::from_str(&fs::read_to_string(dir.path().join("bug.min.v.stats.json")).unwrap()).unwrap();
    let header = vermin_core::stats::header_value(&out, "reduction-ratio").unwrap();
    assert_eq!(header.parse::<f64>().unwrap(), stats.reduction_ratio);
    assert_eq!(vermin_core::stats::header_value(&out, "failed-inlines"), Some("Top.Dep"));
}

#[test]
fn slow_checks_time_out_and_are_killed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CheckerSpec { cwd: Some(dir.path().to_path_buf()), ..CheckerSpec::new(TOY) }.with_args(&["--version=fail".to_string()]);
    let mut oracle = Oracle::new(std::sync::Arc::new(ProcessChecker::new(spec)), None);
    oracle.set_timeout(Duration::from_millis(200));
    let started = Instant::now();
    let out = oracle.check(Leg::Fail, "bug.v", "Sleep 5000.\ntrigger_bug \"late\".\n").unwrap();
    assert_eq!(out.status, Status::Timeout);
    assert!(started.elapsed() < Duration::from_secs(3));
    let quick = oracle.check(Leg::Fail, "bug.v", "trigger_bug \"late\".\n").unwrap();
    assert_eq!(quick.status, Status::Failure);
}
