mod common;

use proptest::prelude::*;

use triplet_analogy::encoders::{encode_letter_pair, encode_letter_prompt, Alphabet};
use triplet_analogy::rules::check_consistency;
use triplet_analogy::scenarios::{complete_strings, letter_rules};
use triplet_analogy::search::{canonical_key, search, SearchConfig, SearchOutcome};
use triplet_analogy::workspace::Workspace;

fn letter_workspace(examples: &[(&str, &str)], prompt: &str) -> Workspace {
    let alphabet = Alphabet::default();
    let mut ws = Workspace::new();
    for (i, (b, a)) in examples.iter().enumerate() {
        encode_letter_pair(&mut ws, b, a, &format!("ex{}", i + 1), &alphabet).unwrap();
    }
    encode_letter_prompt(&mut ws, prompt, "prompt", &alphabet).unwrap();
    ws
}

fn run(budget: usize, parallel: usize) -> SearchOutcome {
    let ws = letter_workspace(&[("abc", "abd"), ("efg", "efh")], "ijk");
    let (rules, consistency) = letter_rules(&Alphabet::default(), false);
    let config = SearchConfig {
        budget,
        parallel,
        ..SearchConfig::default()
    };
    search(ws, &rules, &consistency, &config)
}

#[test]
fn repeated_runs_are_identical() {
    let a = run(500, 1);
    let b = run(500, 1);
    assert_eq!(a.trace_jsonl(), b.trace_jsonl());
    assert_eq!(a.workspace.structure.to_text(), b.workspace.structure.to_text());
}

#[test]
fn parallel_branches_reach_the_same_abstraction() {
    let serial = run(500, 1);
    let parallel = run(500, 3);
    assert_eq!(canonical_key(&serial.workspace), canonical_key(&parallel.workspace));
    assert_eq!(serial.report.abstract_fact_count, parallel.report.abstract_fact_count);
}

#[test]
fn final_workspace_violates_no_consistency_rule() {
    for (examples, prompt, slips) in [
        (vec![("abc", "abd"), ("efg", "efh")], "ijk", false),
        (vec![("abc", "cba"), ("efg", "gfe")], "ijk", true),
    ] {
        let c = complete_strings(&examples, prompt, &SearchConfig::default(), slips).unwrap();
        let (_, consistency) = letter_rules(&Alphabet::default(), slips);
        let bad = check_consistency(&c.outcome.workspace.structure, &consistency);
        assert!(bad.is_empty(), "{} violations, first {}", bad.len(), bad[0].0.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn applications_never_exceed_the_budget(budget in 0usize..120) {
        let out = run(budget, 1);
        prop_assert!(out.applications <= budget);
        prop_assert!(out.trace.len() <= budget);
    }
}
