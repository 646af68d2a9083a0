//! Inputs shared by the benchmarks under `benches/`.

use std::fmt::Write;

/// `filler` unused definitions interleaved with a `chain`-long dependency
/// chain ending in a failing lemma.
pub fn chain_input(filler: usize, chain: usize) -> String {
    let mut text = String::new();
    let every = (filler / chain.max(1)).max(1);
    let mut link = 0;
    for i in 0..filler {
        if i % every == 0 && link < chain {
            let prev = if link == 0 { "0".to_string() } else { format!("n{}", link - 1) };
            writeln!(text, "Definition n{link} := S {prev}.").unwrap();
            link += 1;
        }
        writeln!(text, "Lemma junk{i} : True.\nProof.\nexact I.\nQed.").unwrap();
    }
    let top = link.saturating_sub(1);
    writeln!(text, "Lemma target : n{top} = n{top}.\nProof.\nunfold n{top}.\ntrigger_bug \"bench\".\nQed.").unwrap();
    text
}

/// A spread of checker messages covering every normalization class.
pub const MESSAGES: &[&str] = &[
    "Universe inconsistency. Cannot enforce Top.u12 <= Top.u13 because Top.u13 < Top.u12.",
    "Unable to unify \"?X42\" with \"nat\".",
    "Anomaly \"Universe Top.u7 undefined (forgotten universe).\" Please report.",
    "Unsatisfied constraints: Top.u3 <= Top.u4 (maybe a bugged tactic).",
    "The reference missing was not found in the current environment.",
];
