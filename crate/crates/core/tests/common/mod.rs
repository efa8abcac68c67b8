//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod reference;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triplet_analogy::rules::{parse_rules, Assignment, Rule, Term};
use triplet_analogy::structure::{NodeId, Triplet, TripletStructure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random structure over `nodes` named nodes `n0..` with `facts` triples.
/// A small pool of "key" nodes makes patterns with constants hit often.
pub fn random_structure(r: &mut ChaCha8Rng, nodes: usize, facts: usize) -> TripletStructure {
    let mut s = TripletStructure::new();
    let ids: Vec<NodeId> = (0..nodes).map(|i| s.intern(&format!("n{i}"))).collect();
    let keys = &ids[..nodes.min(4)];
    for _ in 0..facts {
        let f = ids[r.gen_range(0..ids.len())];
        let v = ids[r.gen_range(0..ids.len())];
        let k = if r.gen_bool(0.7) {
            keys[r.gen_range(0..keys.len())]
        } else {
            ids[r.gen_range(0..ids.len())]
        };
        s.add_fact(f, v, k);
    }
    s
}

/// A random rule text with at most five variables. Every variable occurs in
/// some required pattern; constants are drawn from the key nodes.
pub fn random_rule_text(r: &mut ChaCha8Rng, name: &str) -> String {
    let nvars: usize = r.gen_range(1..=5);
    let vars: Vec<String> = (0..nvars).map(|i| format!("v{i}")).collect();
    let consts = ["n0", "n1", "n2", "n3"];
    let npat = r.gen_range(1..=4).max(nvars.div_ceil(3));
    let mut pats: Vec<[String; 3]> = Vec::new();
    let mut used_consts = BTreeSet::new();
    for p in 0..npat {
        let mut slot = |i: usize| -> String {
            // make sure every variable is placed at least once
            let forced = p * 3 + i;
            if forced < nvars {
                return vars[forced].clone();
            }
            if r.gen_bool(0.25) {
                let c = consts[r.gen_range(0..consts.len())];
                used_consts.insert(c);
                c.to_string()
            } else {
                vars[r.gen_range(0..nvars)].clone()
            }
        };
        pats.push([slot(0), slot(1), slot(2)]);
    }
    let mut text = format!("rule {name}\nvar {}\n", vars.join(" "));
    if !used_consts.is_empty() {
        text.push_str(&format!("const {}\n", used_consts.into_iter().collect::<Vec<_>>().join(" ")));
    }
    if nvars >= 2 && r.gen_bool(0.3) {
        text.push_str("distinct v0 v1\n");
    }
    for [f, v, k] in pats {
        text.push_str(&format!("require ({f} {v} {k})\n"));
    }
    text
}

pub fn random_rule(r: &mut ChaCha8Rng, name: &str) -> Rule {
    let text = random_rule_text(r, name);
    parse_rules(&text)
        .unwrap_or_else(|e| panic!("{e}\n{text}"))
        .remove(0)
}

/// Nested-loop join over a plain scan of the fact list: each required
/// pattern in declaration order against every fact.
pub fn brute_force(s: &TripletStructure, rule: &Rule) -> BTreeSet<Vec<NodeId>> {
    let Some(consts) = rule
        .consts
        .iter()
        .map(|c| s.get(c))
        .collect::<Option<Vec<NodeId>>>()
    else {
        return BTreeSet::new();
    };
    let facts: Vec<Triplet> = s.facts().copied().collect();
    let mut out = BTreeSet::new();
    let mut bound = vec![None; rule.vars.len()];
    extend(rule, &consts, &facts, 0, &mut bound, &mut out);
    out
}

fn extend(
    rule: &Rule,
    consts: &[NodeId],
    facts: &[Triplet],
    depth: usize,
    bound: &mut Vec<Option<NodeId>>,
    out: &mut BTreeSet<Vec<NodeId>>,
) {
    if depth == rule.requires.len() {
        let full: Option<Vec<NodeId>> = bound.iter().copied().collect();
        if let Some(full) = full {
            if rule.distinct.iter().all(|&(a, b)| full[a] != full[b]) {
                out.insert(full);
            }
        }
        return;
    }
    let tpl = rule.requires[depth];
    for t in facts {
        let saved = bound.clone();
        let ok = tpl.iter().zip(t.slots()).all(|(term, node)| match *term {
            Term::Const(i) => consts[i] == node,
            Term::Var(v) => match bound[v] {
                Some(b) => b == node,
                None => {
                    bound[v] = Some(node);
                    true
                }
            },
            Term::New(_) => false,
        });
        if ok {
            extend(rule, consts, facts, depth + 1, bound, out);
        }
        *bound = saved;
    }
}

pub fn as_set(found: Vec<Assignment>) -> BTreeSet<Vec<NodeId>> {
    found.into_iter().map(|a| a.0).collect()
}

/// The required facts of a rule under a full binding.
pub fn required_facts(s: &TripletStructure, rule: &Rule, binding: &[NodeId]) -> Vec<Triplet> {
    rule.requires
        .iter()
        .map(|tpl| {
            let node = |t: Term| match t {
                Term::Var(v) => binding[v],
                Term::Const(i) => s.get(&rule.consts[i]).unwrap(),
                Term::New(_) => unreachable!(),
            };
            Triplet::new(node(tpl[0]), node(tpl[1]), node(tpl[2]))
        })
        .collect()
}

/// Adds `count` random facts over existing nodes, sometimes interning a new
/// node first.
pub fn mutate(r: &mut ChaCha8Rng, s: &mut TripletStructure, count: usize) {
    for _ in 0..count {
        if r.gen_bool(0.2) {
            let n = s.node_count();
            s.intern(&format!("n{n}"));
        }
        let ids: Vec<NodeId> = s.nodes().collect();
        let pick = |r: &mut ChaCha8Rng| *ids.choose(r).unwrap();
        let k = if r.gen_bool(0.7) { ids[r.gen_range(0..ids.len().min(4))] } else { pick(r) };
        let (f, v) = (pick(r), pick(r));
        s.add_fact(f, v, k);
    }
}

/// Named view used to compare structures built in different orders.
pub fn named(s: &TripletStructure) -> (BTreeSet<String>, BTreeSet<[String; 3]>) {
    s.named_snapshot()
}

pub fn names(s: &TripletStructure, a: &Assignment, rule: &Rule) -> BTreeMap<String, String> {
    a.named(rule, s)
}

// ---------------------------------------------------------------------------
// fixtures

pub fn fixture(rel: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The GEMM scenario; `bad` swaps in the prompt that breaks the size
/// annotation.
pub fn gemm_input(bad: bool) -> triplet_analogy::scenarios::TransformInput {
    let (prompt, ann) = match bad {
        false => ("gemm/prompt.txt", "gemm/annotations.json"),
        true => ("gemm/prompt_bad.txt", "gemm/annotations_bad.json"),
    };
    triplet_analogy::scenarios::TransformInput {
        examples: vec![
            (fixture("gemm/ex1.before.txt"), fixture("gemm/ex1.after.txt")),
            (fixture("gemm/ex2.before.txt"), fixture("gemm/ex2.after.txt")),
        ],
        prompt: fixture(prompt),
        annotations: Some(fixture(ann)),
        docs: None,
    }
}

pub fn api_input() -> triplet_analogy::scenarios::TransformInput {
    triplet_analogy::scenarios::TransformInput {
        examples: vec![
            (fixture("api/ex1.before.txt"), fixture("api/ex1.after.txt")),
            (fixture("api/ex2.before.txt"), fixture("api/ex2.after.txt")),
        ],
        prompt: fixture("api/prompt.txt"),
        annotations: Some(fixture("api/annotations.json")),
        docs: Some((fixture("api/docs.before.txt"), fixture("api/docs.after.txt"))),
    }
}

/// `(file name, text)` for every file under a fixture directory, sorted.
pub fn fixture_dir(rel: &str) -> Vec<(String, String)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect()
}

/// Minimal whitespace/punctuation tokenizer, independent of the library's
/// lexer, used as a diff oracle.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Positions where two token lists differ, or `None` if the lengths differ.
pub fn token_diff(a: &[String], b: &[String]) -> Option<Vec<usize>> {
    (a.len() == b.len()).then(|| (0..a.len()).filter(|&i| a[i] != b[i]).collect())
}
