mod common;

use std::collections::BTreeSet;

use triplet_analogy::abstracter::CompletionStatus;
use triplet_analogy::encoders::{encode_letter_string, Alphabet};
use triplet_analogy::scenarios::{complete_strings, correspond, Completion};
use triplet_analogy::search::SearchConfig;
use triplet_analogy::structure::TripletStructure;
use triplet_analogy::workspace::Workspace;

use common::{checks, fixture_dir, words};

fn letters(examples: &[(&str, &str)], prompt: &str, slips: bool) -> Completion {
    complete_strings(examples, prompt, &SearchConfig::default(), slips).unwrap()
}

#[test]
fn successor_change_completes_ijk() {
    checks::successor_golden().unwrap();
}

#[test]
fn reversal_matches_the_hand_built_abstraction() {
    checks::reversal_golden().unwrap();
}

#[test]
fn gemm_prompt_is_rewritten_in_one_token_and_bad_prompt_scores_lower() {
    checks::gemm_golden().unwrap();
}

#[test]
fn api_migration_uses_the_code_from_the_docs() {
    checks::api_golden().unwrap();
}

#[test]
fn identity_example_copies_the_prompt() {
    let c = letters(&[("ab", "ab")], "xy", false);
    assert_eq!(c.tokens.concat(), "xy");
}

#[test]
fn shorter_prompt_is_incomplete() {
    let c = letters(&[("abc", "abd")], "ij", false);
    assert!(matches!(c.status, CompletionStatus::Missing(n) if n >= 1), "{:?}", c.status);
    assert!(c.tokens.is_empty());
}

#[test]
fn letters_outside_the_alphabet_are_rejected() {
    assert!(complete_strings(&[("aB", "aB")], "xy", &SearchConfig::default(), false).is_err());
}

fn pairs(left: &[(String, String)], right: &[(String, String)]) -> triplet_analogy::scenarios::CorrespondenceReport {
    correspond(left, right, None, &SearchConfig::default()).unwrap().0
}

#[test]
fn shell_builtins_pair_by_name_and_signature() {
    let r = pairs(&fixture_dir("shell/bash"), &fixture_dir("shell/fish"));
    let tokens: BTreeSet<(&str, &str)> = r.pairs.iter().map(|p| (p.left.as_str(), p.right.as_str())).collect();
    assert!(tokens.contains(&("cd_builtin", "builtin_cd")), "{tokens:?}");
    assert!(tokens.contains(&("pwd_builtin", "builtin_pwd")), "{tokens:?}");
    assert!(!tokens.contains(&("cd_builtin", "builtin_pwd")));
}

#[test]
fn identical_files_map_every_lexeme_to_itself() {
    let files = fixture_dir("shell/bash");
    let r = pairs(&files[..1], &files[..1]);
    let lexemes = words(&files[0].1).len();
    assert_eq!(r.pairs.len(), lexemes);
    for p in &r.pairs {
        assert_eq!(p.left, p.right);
        assert_eq!(p.left_node.strip_prefix("a/"), p.right_node.strip_prefix("b/"), "{p:?}");
    }
}

#[test]
fn disjoint_files_get_a_low_score() {
    let same = fixture_dir("shell/bash");
    let identical = pairs(&same[..1], &same[..1]);
    let left = vec![("x.txt".to_string(), "alpha beta gamma".to_string())];
    let right = vec![("y.txt".to_string(), "one two three".to_string())];
    let r = pairs(&left, &right);
    assert!(r.pairs.len() <= 3);
    assert!(r.weighted_score * 4.0 < identical.weighted_score);
}

#[test]
fn dump_of_two_letter_strings_has_the_reference_facts() {
    let mut ws = Workspace::new();
    let alphabet = Alphabet::default();
    encode_letter_string(&mut ws, "ab", "x", &alphabet).unwrap();
    encode_letter_string(&mut ws, "ef", "y", &alphabet).unwrap();
    let text = ws.structure.to_text();
    let facts: Vec<&str> = text.lines().filter(|l| l.starts_with("fact ")).collect();
    assert_eq!(facts.len(), 8);
    let platonic = facts.iter().filter(|l| l.contains("Letter:")).count();
    let adjacency = facts.iter().filter(|l| l.contains("NextTo")).count();
    assert_eq!((platonic, adjacency), (4, 4));
}

#[test]
fn empty_dump_is_header_only() {
    let text = TripletStructure::new().to_text();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with('#'));
}
