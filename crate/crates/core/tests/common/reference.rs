//! Two-letter strings "ab" and "ef": encoding, the hand-built target abstraction,
//! and an isomorphism check modulo generated names.

use std::collections::{BTreeMap, BTreeSet};

use triplet_analogy::abstracter::abstractions;
use triplet_analogy::encoders::{encode_letter_string, gen_successor_rules, Alphabet};
use triplet_analogy::rules::Rule;
use triplet_analogy::structure::{HolePattern, NodeId, TripletStructure};
use triplet_analogy::workspace::Workspace;

pub fn two_strings() -> Workspace {
    let mut ws = Workspace::new();
    let alphabet = Alphabet::default();
    encode_letter_string(&mut ws, "ab", "x", &alphabet).unwrap();
    encode_letter_string(&mut ws, "ef", "y", &alphabet).unwrap();
    ws
}

pub fn successor_rule(a: char, b: char) -> Rule {
    gen_successor_rules(&Alphabet::default())
        .into_iter()
        .find(|r| r.name == format!("successor-{a}-{b}"))
        .unwrap()
}

/// The hand-built target: triples of the abstraction over symbolic
/// abstraction nodes and named concrete nodes.
pub fn expected(s: &TripletStructure) -> Vec<[String; 3]> {
    let succ_fact = |x: &str| -> String {
        let id = s.get(x).unwrap();
        let pred = s.get("Predecessor").unwrap();
        let t = s.query(&HolePattern::new(None, Some(id), Some(pred)));
        s.name(t[0].fact).to_string()
    };
    let (s1, s2) = (succ_fact("x:0"), succ_fact("y:0"));
    let t = |f: &str, v: &str, k: &str| [f.to_string(), v.to_string(), k.to_string()];
    vec![
        t("?root", "?m1", "Abstraction"),
        t("?root", "?m2", "Abstraction"),
        t("?m1", "x:0", "?a1"),
        t("?m1", "x:1", "?a2"),
        t("?m1", "x:n0", "?an"),
        t("?m1", &s1, "?as"),
        t("?m2", "y:0", "?a1"),
        t("?m2", "y:1", "?a2"),
        t("?m2", "y:n0", "?an"),
        t("?m2", &s2, "?as"),
        t("?an", "?a1", "NextToLeft"),
        t("?an", "?a2", "NextToRight"),
        t("?as", "?a1", "Predecessor"),
        t("?as", "?a2", "Successor"),
    ]
}

/// Triples whose fact is a node of the abstraction, by name.
pub fn abstraction_subgraph(ws: &Workspace) -> (BTreeSet<[String; 3]>, Vec<String>) {
    let views = abstractions(ws);
    assert_eq!(views.len(), 1, "exactly one abstraction");
    let v = &views[0];
    let mut internal: BTreeSet<NodeId> = v.abstract_nodes.clone();
    internal.insert(v.abstraction_id);
    internal.extend(v.mappings.iter().copied());
    let s = &ws.structure;
    let triples = s
        .facts()
        .filter(|t| internal.contains(&t.fact))
        .map(|t| [s.name(t.fact).to_string(), s.name(t.value).to_string(), s.name(t.key).to_string()])
        .collect();
    (triples, internal.iter().map(|n| s.name(*n).to_string()).collect())
}

pub fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// Brute force over every bijection from symbolic nodes to generated names.
pub fn isomorphic(actual: &BTreeSet<[String; 3]>, internal: &[String], expected: &[[String; 3]]) -> bool {
    let symbols: BTreeSet<String> = expected
        .iter()
        .flat_map(|t| t.iter().filter(|x| x.starts_with('?')).cloned())
        .collect();
    let symbols: Vec<String> = symbols.into_iter().collect();
    if symbols.len() != internal.len() {
        return false;
    }
    permutations(internal).into_iter().any(|perm| {
        let map: BTreeMap<&String, &String> = symbols.iter().zip(&perm).collect();
        let image: BTreeSet<[String; 3]> = expected
            .iter()
            .map(|t| t.clone().map(|x| map.get(&x).map_or(x.clone(), |y| (*y).clone())))
            .collect();
        &image == actual
    })
}

