//! Acceptance suite: one printed verdict line per criterion.
//!
//! Run with `cargo test -p vermin-cli --test acceptance -- --nocapture` to
//! see the verdicts.

mod support;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vermin_cli::{execute, Job};
use vermin_core::error_equivalence::{equivalent, normalize};
use vermin_core::oracle::{Leg, Status};
use vermin_core::passes::{Phase, PhasePlan, RemoveBlocksBackward, RunEnd, Scheduler};
use vermin_core::stats::{header_value, reduction_ratio, total_removed};
use vermin_core::{finalize, initialize, minimize, LedgerEntry, MinimizationState, Oracle, RunStats};
use vermin_toy::Version;

use support::*;

/// Golden run wall-clock limit.
const GOLDEN_RUNTIME: Duration = Duration::from_secs(10);
const CHAIN_BLOCKS: usize = 200;
const CHAIN_NECESSARY: usize = 10;
const MAX_CALLS_PER_BLOCK: u64 = 2;
const LAW_TRIPLES: usize = 10_000;
const SOUNDNESS_FIXTURES: u64 = 100;
const RESUME_FIXTURES: u64 = 10;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn expected_of(oracle: &mut Oracle, name: &str, text: &str) -> vermin_core::ErrorSignature {
    let out = oracle.check(Leg::Fail, name, text).unwrap();
    assert_eq!(out.status, Status::Failure, "fixture does not fail:\n{text}\n{}", out.log);
    out.signature.unwrap()
}

// ----- 1 ---------------------------------------------------------------------

fn golden() -> Verdict {
    let dir = copy_fixture("golden");
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_vermin"))
        .current_dir(dir.path())
        .args(["--file", "bug.v", "--output", "bug.min.v"])
        .args(["--fail-checker", env!("CARGO_BIN_EXE_toycheck"), "--fail-arg=--version=fail", "--fail-path", "-Q,.,Top"])
        .args(["--pass-checker", env!("CARGO_BIN_EXE_toycheck"), "--pass-arg=--version=pass", "--pass-path", "-Q,.,Top"])
        .args(["--names-flag", "--emit-names"])
        .status()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(status.code() == Some(0), format!("vermin exited with {status}"))?;
    let out = std::fs::read_to_string(dir.path().join("bug.min.v")).map_err(|e| e.to_string())?;
    let got = logical_sentences(&body_of(&out));
    let expected = vec![
        "Ltac crush := intros; subst; try reflexivity; trigger_bug \"crush left a goal\".",
        "Definition zero := 0.",
        "Definition one := 1.",
        "Lemma foo : forall x, x = zero -> S x = one.",
        "Proof.",
        "crush.",
    ];
    ensure(got == expected, format!("retained sentences differ:\n{got:#?}\nfull output:\n{out}"))?;
    ensure(header_value(&out, "failed-inlines") == Some("none"), "dependency not inlined")?;
    ensure(elapsed < GOLDEN_RUNTIME, format!("took {elapsed:?}"))?;
    Ok(format!("{} sentences retained in {:.2}s", got.len(), elapsed.as_secs_f64()))
}

// ----- 2 ---------------------------------------------------------------------

fn oracle_budget() -> Verdict {
    let (text, kept) = chain_fixture(CHAIN_BLOCKS, CHAIN_NECESSARY, 7);
    let dir = tempfile::tempdir().unwrap();
    let (fail, pass) = pair(dir.path());
    let mut oracle = Oracle::new(fail, pass);
    let expected = expected_of(&mut oracle, "bug.v", &text);
    let mut state = initialize(&mut oracle, "bug.v", &text, expected, &options(None)).map_err(|e| e.to_string())?;
    let blocks = state.current.blocks().blocks.len();
    ensure(blocks == CHAIN_BLOCKS, format!("fixture has {blocks} blocks"))?;
    let judged_before = oracle.judgements;
    let plan = vec![PhasePlan { phase: Phase::Structural, passes: vec![Box::new(RemoveBlocksBackward)], round_cap: 1 }];
    let mut scheduler = Scheduler::new(plan, &mut oracle, None, Default::default());
    let end = scheduler.run(&mut state).map_err(|e| e.to_string())?;
    drop(scheduler);
    ensure(end == RunEnd::Finished, format!("run ended with {end:?}"))?;
    let calls = oracle.judgements - judged_before;
    let limit = MAX_CALLS_PER_BLOCK * CHAIN_BLOCKS as u64;
    ensure(calls <= limit, format!("{calls} oracle calls > {limit}"))?;
    let remaining: Vec<String> = state
        .current
        .blocks()
        .blocks
        .iter()
        .map(|b| state.current.sentences()[b.range.start].text.trim().to_string())
        .collect();
    ensure(remaining == kept, format!("retained blocks differ: {remaining:#?}"))?;
    Ok(format!("{calls} oracle calls for {CHAIN_BLOCKS} blocks, {} retained", remaining.len()))
}

// ----- 3 ---------------------------------------------------------------------

const TABLE: &[(&str, &str, bool)] = &[
    // Any two universe inconsistencies match.
    ("Universe inconsistency. Cannot enforce a.u1 <= a.u2 because a.u2 < a.u1.", "Universe inconsistency. Cannot enforce Set <= b.u9.", true),
    ("Universe inconsistency. Cannot enforce a.u1 <= a.u2.", "Unable to unify nat with bool.", false),
    // Forgotten universes, case-insensitively.
    ("Anomaly: Universe Top.u12 undefined (forgotten universe).", "Universe X.foo undefined (Forgotten Universe).", true),
    ("Anomaly: Universe Top.u12 undefined (forgotten universe).", "Universe inconsistency. Cannot enforce Top.u12 < Set.", false),
    // Digits are blind.
    ("Unable to unify \"?X12\" with \"nat\".", "Unable to unify \"?X7\" with \"nat\".", true),
    ("Unable to unify \"?X12\" with \"nat\".", "Unable to unify \"?Y12\" with \"nat\".", false),
    // Except in instance-length errors.
    ("Universe instance should have length 1.", "Universe instance should have length 2.", false),
    ("Universe instance should have length 3.", "Universe instance should have length 3.", true),
    // Bugged-tactic constraints.
    ("Unsatisfied constraints: u1 <= Set (maybe a bugged tactic).", "Unsatisfied constraints: v.3 < w.4 (maybe a bugged tactic).", true),
    ("Unsatisfied constraints: u1 <= Set.", "Unsatisfied constraints: u1 <= Set (maybe a bugged tactic).", false),
    // File, line and wrapping are ignored.
    ("In nested File \"a.v\", line 3, characters 1-4: The term foo has type nat.", "In nested File \"dir/b.v\", line 90, characters 0-2: The term foo has type nat.", true),
    ("The term\n  foo\nhas type nat.", "The term foo has type   nat.", true),
    ("The term foo has type nat.", "The term bar has type nat.", false),
];

const FRAGMENTS: &[&str] = &[
    "Universe inconsistency.",
    "forgotten universe",
    "Unsatisfied constraints:",
    "(maybe a bugged tactic)",
    "Universe instance should have length",
    "File \"f.v\", line 2, characters 3-4:",
    "foo",
    "bar",
    "12",
    "7",
    "\n",
    "  ",
];

fn random_message(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..5);
    (0..n).map(|_| FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]).collect::<Vec<_>>().join(" ")
}

fn equivalence_suite() -> Verdict {
    for (a, b, want) in TABLE {
        let got = equivalent(&normalize(a), &normalize(b));
        ensure(got == *want, format!("`{a}` vs `{b}`: expected {want}, got {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut transitive_cases = 0;
    for _ in 0..LAW_TRIPLES {
        let (a, b, c) = (random_message(&mut rng), random_message(&mut rng), random_message(&mut rng));
        let (sa, sb, sc) = (normalize(&a), normalize(&b), normalize(&c));
        ensure(equivalent(&sa, &sa), format!("not reflexive on `{a}`"))?;
        ensure(equivalent(&sa, &sb) == equivalent(&sb, &sa), format!("not symmetric on `{a}`, `{b}`"))?;
        if equivalent(&sa, &sb) && equivalent(&sb, &sc) {
            transitive_cases += 1;
            ensure(equivalent(&sa, &sc), format!("not transitive on `{a}`, `{b}`, `{c}`"))?;
        }
    }
    Ok(format!("{} table pairs, {LAW_TRIPLES} triples ({transitive_cases} exercised transitivity)", TABLE.len()))
}

// ----- 4 ---------------------------------------------------------------------

fn requires_left(output: &str) -> Vec<String> {
    vermin_core::Document::parse("out.v", output)
        .unwrap()
        .sentences()
        .iter()
        .filter_map(|s| vermin_core::inliner::parse_require(&s.text))
        .flat_map(|f| f.names)
        .filter(|n| !vermin_core::loadpath::is_stdlib(n))
        .collect()
}

fn run_fixture(name: &str) -> Result<(tempfile::TempDir, String, RunStats), String> {
    let dir = copy_fixture(name);
    let (fail, pass) = pair(dir.path());
    let job = Job {
        file: "bug.v".into(),
        error: None,
        options: options(None),
        output: dir.path().join("bug.min.v"),
        stats: Some(dir.path().join("bug.stats.json")),
        resume: false,
        inline: true,
    };
    let report = execute(&job, fail, pass).map_err(|e| e.to_string())?;
    Ok((dir, report.output, report.stats))
}

fn output_verifies(dir: &Path, output: &str, original: &str) -> Result<(), String> {
    let (fail, pass) = pair(dir);
    let mut oracle = Oracle::new(fail, pass);
    let expected = expected_of(&mut oracle, "bug.v", original);
    oracle.verify_initial("bug.v", output, &expected).map(|_| ()).map_err(|e| e.to_string())
}

fn standalone() -> Verdict {
    let (dir, out, stats) = run_fixture("diamond")?;
    let left = requires_left(&out);
    ensure(left.is_empty(), format!("diamond output still requires {left:?}:\n{out}"))?;
    ensure(header_value(&out, "failed-inlines") == Some("none"), format!("diamond header: {:?}", stats.failed_inlines))?;
    let original = std::fs::read_to_string(dir.path().join("bug.v")).unwrap();
    output_verifies(dir.path(), &out, &original)?;

    let (dir, out, stats) = run_fixture("uninlinable")?;
    ensure(stats.failed_inlines == vec!["Top.Dep".to_string()], format!("failed inlines: {:?}", stats.failed_inlines))?;
    ensure(header_value(&out, "failed-inlines") == Some("Top.Dep"), "header does not list Top.Dep")?;
    let original = std::fs::read_to_string(dir.path().join("bug.v")).unwrap();
    output_verifies(dir.path(), &out, &original)?;
    Ok("diamond standalone; uninlinable dependency reported as Top.Dep".to_string())
}

// ----- 5 ---------------------------------------------------------------------

fn ratio_bookkeeping() -> Verdict {
    let ledger = vec![LedgerEntry::new("a", 100, 60), LedgerEntry::new("inline", 60, 140), LedgerEntry::new("b", 140, 90)];
    ensure(total_removed(&ledger) == 90, "scripted ledger removal is not 90")?;
    let stats = RunStats::new(ledger, 90, vec![], 0.0, "bug.v".into(), 100);
    let header: f64 = header_value(&stats.header(), "reduction-ratio").unwrap().parse().unwrap();
    ensure(header == 0.5 && header == reduction_ratio(90, 90), format!("scripted header ratio {header}"))?;

    // The sidecar of a real run recomputes to its header.
    let (dir, out, _) = run_fixture("golden")?;
    let sidecar: RunStats = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bug.stats.json")).unwrap()).unwrap();
    let recomputed = reduction_ratio(sidecar.final_size, total_removed(&sidecar.ledger));
    let header: f64 = header_value(&out, "reduction-ratio").unwrap().parse().unwrap();
    ensure(recomputed == header, format!("sidecar gives {recomputed}, header says {header}"))?;
    Ok(format!("scripted ratio 0.5; golden run ratio {header:.3}"))
}

// ----- 6 ---------------------------------------------------------------------

fn minimize_text(text: &str, base: &Path) -> Result<(MinimizationState, String), String> {
    let (fail, pass) = pair(base);
    let mut oracle = Oracle::new(fail, pass);
    let expected = expected_of(&mut oracle, "bug.v", text);
    let mut state = initialize(&mut oracle, "bug.v", text, expected, &options(None)).map_err(|e| e.to_string())?;
    let end = minimize(&mut oracle, &mut state, None, &options(None)).map_err(|e| e.to_string())?.end;
    ensure(end == RunEnd::Finished, format!("run ended with {end:?}"))?;
    let (out, _) = finalize(&mut oracle, &state, None, "bug.v").map_err(|e| e.to_string())?;
    Ok((state, out))
}

fn soundness() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut total_before = 0;
    let mut total_after = 0;
    for seed in 0..SOUNDNESS_FIXTURES {
        let text = random_fixture(seed);
        let (state, out) = minimize_text(&text, dir.path()).map_err(|e| format!("seed {seed}: {e}\n{text}"))?;
        let (fail, pass) = pair(dir.path());
        let mut oracle = Oracle::new(fail, pass);
        let f = oracle.check(Leg::Fail, "bug.v", &out).unwrap();
        let same = f.signature.as_ref().is_some_and(|s| equivalent(s, &state.expected));
        ensure(f.status == Status::Failure && same, format!("seed {seed}: output fails differently:\n{out}\n{}", f.log))?;
        let p = oracle.check(Leg::Pass, "bug.v", &out).unwrap();
        ensure(p.status == Status::Success, format!("seed {seed}: pass version rejects output:\n{out}\n{}", p.log))?;
        let (again, _) = minimize_text(&out, dir.path()).map_err(|e| format!("seed {seed} rerun: {e}"))?;
        ensure(again.acceptances == 0, format!("seed {seed}: rerun accepted {} candidates:\n{out}", again.acceptances))?;
        total_before += text.lines().count();
        total_after += state.lines();
    }
    Ok(format!("{SOUNDNESS_FIXTURES} fixtures sound and at fixpoint ({total_before} -> {total_after} lines)"))
}

// ----- 7 ---------------------------------------------------------------------

/// Output of a run with the measured compile time blanked out: the only
/// header field that legitimately varies between runs.
fn comparable(out: &str) -> String {
    out.lines()
        .filter(|l| !l.starts_with("(* expected-compile-time-seconds:"))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn resume_equivalence() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut interruptions = 0;
    for seed in 0..RESUME_FIXTURES {
        let text = random_fixture(1000 + seed);
        let (_, straight) = minimize_text(&text, dir.path())?;
        let cp = dir.path().join(format!("ckpt{seed}.json"));
        let mut k = 1;
        let resumed = loop {
            let (fail, pass) = pair(dir.path());
            let mut oracle = Oracle::new(fail, pass);
            let mut opts = options(Some(cp.clone()));
            opts.limits.max_acceptances = Some(k);
            let mut state = if k == 1 {
                let expected = expected_of(&mut oracle, "bug.v", &text);
                initialize(&mut oracle, "bug.v", &text, expected, &opts).map_err(|e| e.to_string())?
            } else {
                MinimizationState::load_checkpoint(&cp).map_err(|e| e.to_string())?
            };
            let end = minimize(&mut oracle, &mut state, None, &opts).map_err(|e| e.to_string())?.end;
            if end == RunEnd::Finished {
                break finalize(&mut oracle, &state, None, "bug.v").map_err(|e| e.to_string())?.0;
            }
            interruptions += 1;
            k += 1;
        };
        ensure(comparable(&resumed) == comparable(&straight), format!("seed {seed}: resumed output differs:\n{resumed}\nvs\n{straight}"))?;
    }
    Ok(format!("{RESUME_FIXTURES} fixtures identical after {interruptions} interruptions"))
}

// ----- 8 ---------------------------------------------------------------------

fn preserve_error_script() -> Verdict {
    let dir = copy_fixture("guard");
    let text = std::fs::read_to_string(dir.path().join("bug.v")).unwrap();
    let guard = text.lines().find(|l| l.contains("lazymatch goal")).unwrap().to_string();
    let run = |preserve: bool| -> Result<String, String> {
        let job = Job {
            file: "bug.v".into(),
            error: None,
            options: vermin_core::Options { preserve_error_script: preserve, ..options(None) },
            output: dir.path().join("bug.min.v"),
            stats: None,
            resume: false,
            inline: false,
        };
        execute(&job, toy(Version::Fail, dir.path()), None).map(|r| r.output).map_err(|e| e.to_string())
    };
    let preserved = run(true)?;
    ensure(preserved.contains(&guard), format!("guard modified:\n{preserved}"))?;
    ensure(!preserved.contains("Lemma unrelated"), "unrelated lemma survived")?;
    let unprotected = run(false)?;
    let note = if unprotected.contains(&guard) { "unchanged" } else { "rewritten" };
    Ok(format!("guard kept verbatim (without the mode it is {note})"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("golden reproduction", golden),
        ("oracle-call budget", oracle_budget),
        ("error-equivalence suite", equivalence_suite),
        ("standalone guarantee", standalone),
        ("reduction-ratio bookkeeping", ratio_bookkeeping),
        ("soundness property", soundness),
        ("resume equivalence", resume_equivalence),
        ("preserve-error-script mode", preserve_error_script),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match verdict {
            Ok(detail) => format!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("criterion {}: FAIL {name}: {why}", i + 1)
            }
        };
        // Written past the harness's output capture so the report shows in every run.
        writeln!(std::io::stderr(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
