//! Analogies as abstractions.
//!
//! An abstraction is rooted at a bookkeeping node `abs`. Each instance taking
//! part in the analogy has a mapping fact node `M` with `(abs, M, Abstraction)`
//! and one triple `(M, concrete, abstract)` per mapped node. Abstract fact
//! nodes carry triples over abstract nodes with the same keys their concrete
//! counterparts use, so the abstraction is itself a small triplet structure
//! that every instance embeds into.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::encoders::{Alphabet, PAIR_AFTER, PREDECESSOR, SAME, SUCCESSOR};
use crate::error::AnalogyError;
use crate::rules::{apply_rule, is_match, parse_rules, Assignment, Rule};
use crate::structure::{HolePattern, NodeId, Triplet};
use crate::workspace::{Instance, InstanceKind, Side, Workspace};

const BEGIN: &str = "\
rule abs:begin
var A B C M_A M_B
const Abstraction
require (M_A A C)
require (M_B B C)
create aAB aMAB MaA MaB abs
add (aMAB aAB C)
add (MaA A aAB)
add (MaB B aAB)
add (MaA M_A aMAB)
add (MaB M_B aMAB)
add (abs MaA Abstraction)
add (abs MaB Abstraction)
";

const FOLLOW: &str = "\
rule abs:follow
var A B C M_A M_B MaA MaB aMAB abs
const Abstraction
distinct MaA MaB
require (M_A A C)
require (M_B B C)
require (MaA M_A aMAB)
require (MaB M_B aMAB)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
create aAB
add (aMAB aAB C)
add (MaA A aAB)
add (MaB B aAB)
";

const MAP_FACT: &str = "\
rule abs:map-fact
var A B C M_A M_B MaA MaB aAB abs
const Abstraction
distinct MaA MaB
require (M_A A C)
require (M_B B C)
require (MaA A aAB)
require (MaB B aAB)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
create aMAB
add (aMAB aAB C)
add (MaA M_A aMAB)
add (MaB M_B aMAB)
";

const LIFT_FACT: &str = "\
rule abs:lift-fact
var A B C M_A M_B MaA MaB aAB aMAB abs
const Abstraction
distinct MaA MaB
require (M_A A C)
require (M_B B C)
require (MaA A aAB)
require (MaB B aAB)
require (MaA M_A aMAB)
require (MaB M_B aMAB)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
add (aMAB aAB C)
";

const COMPLETE_NODE: &str = "\
rule abs:complete-node
var A C M_A M_B MaA MaB aAB aMAB abs
const Abstraction
distinct MaA MaB
require (M_A A C)
require (MaA A aAB)
require (MaA M_A aMAB)
require (MaB M_B aMAB)
require (aMAB aAB C)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
create B
add (M_B B C)
add (MaB B aAB)
";

const TYPE_SLIP: &str = "\
rule abs:type-slip
var A B C1 C2 M_A M_B
const Abstraction
require (M_A A C1)
require (M_B B C2)
create aAB aC aMAB MaA MaB abs
add (aMAB aAB aC)
add (MaA A aAB)
add (MaB B aAB)
add (MaA C1 aC)
add (MaB C2 aC)
add (MaA M_A aMAB)
add (MaB M_B aMAB)
add (abs MaA Abstraction)
add (abs MaB Abstraction)
";

const SLIP_FOLLOW: &str = "\
rule abs:slip-follow
var A B C1 C2 M_A M_B MaA MaB aMAB aC abs
const Abstraction
distinct MaA MaB
require (M_A A C1)
require (M_B B C2)
require (MaA M_A aMAB)
require (MaB M_B aMAB)
require (MaA C1 aC)
require (MaB C2 aC)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
create aAB
add (aMAB aAB aC)
add (MaA A aAB)
add (MaB B aAB)
";

const SLIP_MAP_FACT: &str = "\
rule abs:slip-map-fact
var A B C1 C2 M_A M_B MaA MaB aAB aC abs
const Abstraction
distinct MaA MaB
require (M_A A C1)
require (M_B B C2)
require (MaA A aAB)
require (MaB B aAB)
require (MaA C1 aC)
require (MaB C2 aC)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
create aMAB
add (aMAB aAB aC)
add (MaA M_A aMAB)
add (MaB M_B aMAB)
";

const SLIP_LIFT: &str = "\
rule abs:slip-lift
var A B C1 C2 M_A M_B MaA MaB aAB aMAB aC abs
const Abstraction
distinct MaA MaB
require (M_A A C1)
require (M_B B C2)
require (MaA A aAB)
require (MaB B aAB)
require (MaA M_A aMAB)
require (MaB M_B aMAB)
require (MaA C1 aC)
require (MaB C2 aC)
require (abs MaA Abstraction)
require (abs MaB Abstraction)
add (aMAB aAB aC)
";

const JOIN_INSTANCE: &str = "\
rule abs:join-instance
var B C M_B MaA M_A aAB aMAB abs
const Abstraction
require (abs MaA Abstraction)
require (MaA M_A aMAB)
require (aMAB aAB C)
require (M_B B C)
create MaB
add (abs MaB Abstraction)
add (MaB B aAB)
add (MaB M_B aMAB)
";

const JOIN_NODE: &str = "\
rule abs:join-node
var B C M_B MaB aAB aMAB abs
const Abstraction
require (abs MaB Abstraction)
require (MaB M_B aMAB)
require (aMAB aAB C)
require (M_B B C)
add (MaB B aAB)
";

const JOIN_FACT: &str = "\
rule abs:join-fact
var B C M_B MaB aAB aMAB abs
const Abstraction
require (abs MaB Abstraction)
require (MaB B aAB)
require (aMAB aAB C)
require (M_B B C)
add (MaB M_B aMAB)
";

const ANCHOR: &str = "\
rule abs:anchor
var A B C M_A M_B MaA MaB abs
const Abstraction
distinct MaA MaB
require (abs MaA Abstraction)
require (abs MaB Abstraction)
require (M_A A C)
require (M_B B C)
create aAB aMAB
add (aMAB aAB C)
add (MaA A aAB)
add (MaB B aAB)
add (MaA M_A aMAB)
add (MaB M_B aMAB)
";

const CONSISTENCY: &str = "\
rule abs:functional consistency
var abs M X a1 a2
const Abstraction
distinct a1 a2
require (abs M Abstraction)
require (M X a1)
require (M X a2)

rule abs:injective consistency
var abs M X1 X2 a
const Abstraction
distinct X1 X2
require (abs M Abstraction)
require (M X1 a)
require (M X2 a)
";

fn parse_one(text: &str) -> Rule {
    parse_rules(text).expect("built-in rules are well formed").remove(0)
}

/// The six named rules: begin, follow, map-fact, lift-fact, complete-node and
/// type-slip.
pub fn builtin_rules() -> Vec<Rule> {
    [BEGIN, FOLLOW, MAP_FACT, LIFT_FACT, COMPLETE_NODE, TYPE_SLIP]
        .into_iter()
        .map(parse_one)
        .collect()
}

/// Slip-aware begin, follow, map-fact and lift: the key nodes `C1`, `C2`
/// themselves map to an abstract type `aC`.
pub fn type_slip_rules() -> Vec<Rule> {
    [TYPE_SLIP, SLIP_FOLLOW, SLIP_MAP_FACT, SLIP_LIFT]
        .into_iter()
        .map(parse_one)
        .collect()
}

/// Rules that bring a further instance into an existing abstraction without
/// creating abstract nodes: start its mapping, map a node, map a fact.
pub fn join_rules() -> Vec<Rule> {
    [JOIN_INSTANCE, JOIN_NODE, JOIN_FACT].into_iter().map(parse_one).collect()
}

/// Starts a new region inside an existing pair abstraction from two
/// unmapped nodes that share a unary fact, such as a token type or a name
/// part. Useful when the two sides differ in length and adjacency alone
/// loses the alignment.
pub fn anchor_rule() -> Rule {
    parse_one(ANCHOR)
}

/// Mapping functionality and injectivity.
pub fn abstraction_consistency_rules() -> Vec<Rule> {
    parse_rules(CONSISTENCY).expect("built-in rules are well formed")
}

pub fn rule_named(name: &str) -> Option<Rule> {
    builtin_rules()
        .into_iter()
        .chain(type_slip_rules())
        .chain(join_rules())
        .find(|r| r.name == name)
}

/// Builds an assignment from `(variable, node)` pairs.
pub fn assignment_by_name(rule: &Rule, bindings: &[(&str, NodeId)]) -> Option<Assignment> {
    let mut out = vec![None; rule.vars.len()];
    for (v, n) in bindings {
        out[rule.var_index(v)?] = Some(*n);
    }
    out.into_iter().collect::<Option<Vec<_>>>().map(Assignment)
}

// ---------------------------------------------------------------------------
// views

/// Read-only view of one abstraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractionView {
    pub abstraction_id: NodeId,
    /// Mapping fact nodes, sorted by name.
    pub mappings: Vec<NodeId>,
    pub abstract_nodes: BTreeSet<NodeId>,
    /// Abstract nodes in fact position of at least one abstract triple.
    pub abstract_facts: BTreeSet<NodeId>,
    /// Per mapping: concrete node to abstract node.
    pub forward: BTreeMap<NodeId, BTreeMap<NodeId, NodeId>>,
    /// Per mapping: abstract node to concrete node.
    pub inverse: BTreeMap<NodeId, BTreeMap<NodeId, NodeId>>,
    /// Triples among abstract nodes.
    pub abstract_triples: Vec<Triplet>,
}

impl AbstractionView {
    pub fn build(ws: &Workspace, abs: NodeId) -> Self {
        let s = &ws.structure;
        let key = ws.abstraction_key();
        let mut mappings: Vec<NodeId> = s
            .query(&HolePattern::new(Some(abs), None, Some(key)))
            .into_iter()
            .map(|t| t.value)
            .collect();
        mappings.sort_by(|a, b| s.name(*a).cmp(s.name(*b)));
        let mut forward = BTreeMap::new();
        let mut inverse = BTreeMap::new();
        let mut abstract_nodes = BTreeSet::new();
        for &m in &mappings {
            let mut f = BTreeMap::new();
            let mut inv = BTreeMap::new();
            for t in s.query(&HolePattern::new(Some(m), None, None)) {
                f.insert(t.value, t.key);
                inv.insert(t.key, t.value);
                abstract_nodes.insert(t.key);
            }
            forward.insert(m, f);
            inverse.insert(m, inv);
        }
        let mut abstract_facts = BTreeSet::new();
        let mut abstract_triples = Vec::new();
        for &a in &abstract_nodes {
            for t in s.query(&HolePattern::new(Some(a), None, None)) {
                if abstract_nodes.contains(&t.value) {
                    abstract_facts.insert(a);
                    abstract_triples.push(t);
                }
            }
        }
        AbstractionView {
            abstraction_id: abs,
            mappings,
            abstract_nodes,
            abstract_facts,
            forward,
            inverse,
            abstract_triples,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.abstract_nodes.is_empty()
    }

    /// Abstract nodes that stand for objects: values of abstract triples
    /// that are never facts themselves.
    pub fn object_nodes(&self) -> BTreeSet<NodeId> {
        self.abstract_triples
            .iter()
            .map(|t| t.value)
            .filter(|v| !self.abstract_facts.contains(v))
            .collect()
    }

    pub fn triples_of_fact(&self, f: NodeId) -> impl Iterator<Item = &Triplet> + '_ {
        self.abstract_triples.iter().filter(move |t| t.fact == f)
    }

    /// The instance a mapping covers: the registered instance of its first
    /// mapped non-shared node.
    pub fn mapping_instance(&self, ws: &Workspace, m: NodeId) -> Option<usize> {
        let f = self.forward.get(&m)?;
        let mut nodes: Vec<&NodeId> = f.keys().collect();
        nodes.sort_by(|a, b| ws.structure.name(**a).cmp(ws.structure.name(**b)));
        nodes
            .into_iter()
            .filter(|n| !ws.is_shared(**n))
            .find_map(|n| ws.instance_of(*n))
    }

    pub fn mapping_for_instance(&self, ws: &Workspace, instance: usize) -> Option<NodeId> {
        self.mappings
            .iter()
            .copied()
            .find(|m| self.mapping_instance(ws, *m) == Some(instance))
    }

    /// The mapping used to decide which side an abstract node is on: the one
    /// for the earliest registered example (or plain) instance.
    pub fn reference_mapping(&self, ws: &Workspace) -> Option<(NodeId, usize)> {
        self.mappings
            .iter()
            .filter_map(|m| self.mapping_instance(ws, *m).map(|i| (*m, i)))
            .filter(|(_, i)| ws.instances()[*i].kind != InstanceKind::Prompt)
            .min_by_key(|(m, i)| (*i, ws.structure.name(*m).to_string()))
    }

    pub fn side(&self, ws: &Workspace, a: NodeId) -> Side {
        let Some((m, i)) = self.reference_mapping(ws) else {
            return Side::Before;
        };
        let inst = &ws.instances()[i];
        match self.inverse[&m].get(&a) {
            Some(x) if inst.after.contains(x) || inst.files.get(1) == Some(x) => Side::After,
            _ => Side::Before,
        }
    }
}

/// Every abstraction in the workspace, sorted by root name.
pub fn abstractions(ws: &Workspace) -> Vec<AbstractionView> {
    let s = &ws.structure;
    let key = ws.abstraction_key();
    let roots: BTreeSet<NodeId> = s
        .query(&HolePattern::new(None, None, Some(key)))
        .into_iter()
        .map(|t| t.fact)
        .collect();
    let mut roots: Vec<NodeId> = roots.into_iter().collect();
    roots.sort_by(|a, b| s.name(*a).cmp(s.name(*b)));
    roots.into_iter().map(|r| AbstractionView::build(ws, r)).collect()
}

// ---------------------------------------------------------------------------
// correspondences

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    pub abstract_node: NodeId,
    /// `(instance tag or mapping name, concrete node)`, one per mapping, in
    /// instance registration order.
    pub instances: Vec<(String, NodeId)>,
}

fn mapping_label(ws: &Workspace, view: &AbstractionView, m: NodeId) -> String {
    match view.mapping_instance(ws, m) {
        Some(i) => ws.instances()[i].tag.clone(),
        None => ws.structure.name(m).to_string(),
    }
}

/// One correspondence per object node of every abstraction, ordered by
/// abstract node name.
pub fn correspondences(ws: &Workspace) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for view in abstractions(ws) {
        for a in view.object_nodes() {
            let mut ordered: Vec<(Option<usize>, NodeId)> = view
                .mappings
                .iter()
                .map(|m| (view.mapping_instance(ws, *m), *m))
                .collect();
            ordered.sort_by_key(|(i, _)| i.unwrap_or(usize::MAX));
            let instances: Vec<(String, NodeId)> = ordered
                .iter()
                .filter_map(|(_, m)| view.inverse[m].get(&a).map(|x| (mapping_label(ws, &view, *m), *x)))
                .collect();
            if !instances.is_empty() {
                out.push(Correspondence {
                    abstract_node: a,
                    instances,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        ws.structure
            .name(a.abstract_node)
            .cmp(ws.structure.name(b.abstract_node))
    });
    out
}

// ---------------------------------------------------------------------------
// scoring

/// Relation weights by key node name. Relations not listed weigh `default`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub by_relation: BTreeMap<String, f64>,
    pub default: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            by_relation: BTreeMap::new(),
            default: 1.0,
        }
    }
}

impl Weights {
    pub fn from_map(by_relation: BTreeMap<String, f64>) -> Self {
        Weights {
            by_relation,
            default: 1.0,
        }
    }

    pub fn get(&self, relation: &str) -> f64 {
        self.by_relation.get(relation).copied().unwrap_or(self.default)
    }

    /// Every weight, including the default, multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Weights {
        Weights {
            by_relation: self.by_relation.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            default: self.default * factor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Complete,
    Missing(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    pub abstraction: Option<String>,
    pub abstract_fact_count: usize,
    pub weighted_score: f64,
    /// Only computed when a prompt instance is registered.
    pub completion: Option<CompletionStatus>,
    /// Share of the smallest mapped example's nodes that the abstraction covers.
    pub coverage: f64,
    /// Share of before-side abstract facts the prompt realizes.
    pub prompt_fit: Option<f64>,
    pub weak: bool,
    pub degenerate: bool,
}

impl ScoreReport {
    pub fn empty() -> Self {
        ScoreReport {
            abstraction: None,
            abstract_fact_count: 0,
            weighted_score: 0.0,
            completion: None,
            coverage: 0.0,
            prompt_fit: None,
            weak: true,
            degenerate: true,
        }
    }

    pub fn missing(&self) -> usize {
        match self.completion {
            Some(CompletionStatus::Missing(n)) => n,
            _ => 0,
        }
    }
}

/// Tunables for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOptions {
    pub weights: Weights,
    /// Coverage below this marks the analogy weak.
    pub weak_coverage: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            weights: Weights::default(),
            weak_coverage: 0.5,
        }
    }
}

fn fact_weight(ws: &Workspace, view: &AbstractionView, f: NodeId, weights: &Weights) -> f64 {
    view.triples_of_fact(f)
        .map(|t| weights.get(ws.structure.name(t.key)))
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
        .unwrap_or(1.0)
}

fn fact_is_after_side(ws: &Workspace, view: &AbstractionView, f: NodeId) -> bool {
    view.triples_of_fact(f).any(|t| view.side(ws, t.value) == Side::After)
}

fn prompt_mappings(ws: &Workspace, view: &AbstractionView) -> Vec<NodeId> {
    view.mappings
        .iter()
        .copied()
        .filter(|m| {
            view.mapping_instance(ws, *m)
                .is_some_and(|i| ws.instances()[i].kind == InstanceKind::Prompt)
        })
        .collect()
}

/// Scores one abstraction. An abstract fact counts when every mapping
/// realizes it; prompt mappings are excused from after-side facts.
pub fn score_view(ws: &Workspace, view: &AbstractionView, opts: &ScoreOptions, alphabet: &Alphabet) -> ScoreReport {
    let prompts = prompt_mappings(ws, view);
    let mut count = 0;
    let mut weighted = 0.0;
    let mut before_facts = 0usize;
    let mut before_realized = 0usize;
    for &f in &view.abstract_facts {
        let after = fact_is_after_side(ws, view, f);
        let mut ok = true;
        for m in &view.mappings {
            let realized = view.inverse[m].contains_key(&f);
            let is_prompt = prompts.contains(m);
            if is_prompt && !after {
                before_facts += 1;
                if realized {
                    before_realized += 1;
                }
            }
            if !realized && !(is_prompt && after) {
                ok = false;
            }
        }
        if ok {
            count += 1;
            weighted += fact_weight(ws, view, f, &opts.weights);
        }
    }
    let coverage = coverage(ws, view);
    let prompt_fit = if prompts.is_empty() {
        None
    } else if before_facts == 0 {
        Some(1.0)
    } else {
        Some(before_realized as f64 / before_facts as f64)
    };
    let completion = if prompts.is_empty() {
        None
    } else {
        let tag = view
            .mapping_instance(ws, prompts[0])
            .map(|i| ws.instances()[i].tag.clone());
        Some(completion_status(ws, view, tag.as_deref(), alphabet))
    };
    let degenerate = view.abstract_facts.is_empty();
    ScoreReport {
        abstraction: Some(ws.structure.name(view.abstraction_id).to_string()),
        abstract_fact_count: count,
        weighted_score: weighted,
        completion,
        coverage,
        prompt_fit,
        weak: degenerate || coverage < opts.weak_coverage || prompt_fit.is_some_and(|p| p < 1.0),
        degenerate,
    }
}

fn coverage(ws: &Workspace, view: &AbstractionView) -> f64 {
    let mut best: Option<(usize, f64)> = None;
    for m in &view.mappings {
        let Some(i) = view.mapping_instance(ws, *m) else { continue };
        let inst = &ws.instances()[i];
        if inst.kind == InstanceKind::Prompt {
            continue;
        }
        let total = inst.nodes().count();
        if total == 0 {
            continue;
        }
        let mapped = inst.nodes().filter(|n| view.forward[m].contains_key(n)).count();
        let frac = mapped as f64 / total as f64;
        if best.is_none_or(|(t, _)| total < t) {
            best = Some((total, frac));
        }
    }
    best.map_or(0.0, |(_, f)| f)
}

/// Scores the best abstraction in the workspace; an empty report if there
/// is none.
pub fn score(ws: &Workspace, opts: &ScoreOptions, alphabet: &Alphabet) -> ScoreReport {
    abstractions(ws)
        .iter()
        .map(|v| score_view(ws, v, opts, alphabet))
        .fold(None, |best: Option<ScoreReport>, r| match best {
            Some(b) if b.weighted_score >= r.weighted_score => Some(b),
            _ => Some(r),
        })
        .unwrap_or_else(ScoreReport::empty)
}

// ---------------------------------------------------------------------------
// completion

/// Abstract object nodes whose example instances are tokens, split by side.
fn token_nodes(ws: &Workspace, view: &AbstractionView) -> (Vec<NodeId>, Vec<NodeId>) {
    let Some((m, ri)) = view.reference_mapping(ws) else {
        return (vec![], vec![]);
    };
    let mut before = Vec::new();
    let mut after = Vec::new();
    for a in view.object_nodes() {
        let Some(x) = view.inverse[&m].get(&a) else { continue };
        // shared context mapped alongside the example is not part of it
        if ws.token(*x).is_none() || ws.instance_of(*x) != Some(ri) {
            continue;
        }
        match view.side(ws, a) {
            Side::Before => before.push(a),
            Side::After => after.push(a),
        }
    }
    // order by position in the reference instance
    let inst = &ws.instances()[ri];
    let pos = |a: &NodeId| {
        let x = view.inverse[&m][a];
        inst.nodes().position(|n| n == x).unwrap_or(usize::MAX)
    };
    before.sort_by_key(pos);
    after.sort_by_key(pos);
    (before, after)
}

/// Infers tokens for after-side abstract nodes from the prompt's mapped
/// tokens: a relational vote (`Same`, `Successor`/`Predecessor`) counts twice,
/// a shared platonic type once; ties go to the smaller token.
pub fn resolve_tokens(
    ws: &Workspace,
    view: &AbstractionView,
    prompt_mapping: Option<NodeId>,
    alphabet: &Alphabet,
) -> BTreeMap<NodeId, String> {
    let s = &ws.structure;
    let mut known: BTreeMap<NodeId, String> = BTreeMap::new();
    if let Some(pm) = prompt_mapping {
        for (a, x) in &view.inverse[&pm] {
            if let Some(t) = ws.token(*x) {
                known.insert(*a, t.to_string());
            }
        }
    }
    let (_, after) = token_nodes(ws, view);
    let (same, succ, pred) = (s.get(SAME), s.get(SUCCESSOR), s.get(PREDECESSOR));
    let mut resolved: BTreeMap<NodeId, String> = BTreeMap::new();
    loop {
        let mut changed = false;
        for &a in &after {
            if known.contains_key(&a) {
                continue;
            }
            let mut votes: BTreeMap<String, u32> = BTreeMap::new();
            for t in view.abstract_triples.iter().filter(|t| t.value == a) {
                if let Some(tok) = ws.platonic_token(t.key) {
                    *votes.entry(tok.to_string()).or_default() += 1;
                    continue;
                }
                let partner_key = if Some(t.key) == same {
                    same
                } else if Some(t.key) == succ {
                    pred
                } else if Some(t.key) == pred {
                    succ
                } else {
                    None
                };
                let Some(pk) = partner_key else { continue };
                for o in view.triples_of_fact(t.fact) {
                    if o.key != pk || o.value == a {
                        continue;
                    }
                    let Some(src) = known.get(&o.value) else { continue };
                    let derived = if Some(t.key) == same {
                        Some(src.clone())
                    } else {
                        let mut chars = src.chars();
                        match (chars.next(), chars.next()) {
                            (Some(c), None) if Some(t.key) == succ => alphabet.successor(c).map(String::from),
                            (Some(c), None) => alphabet.predecessor(c).map(String::from),
                            _ => None,
                        }
                    };
                    if let Some(d) = derived {
                        *votes.entry(d).or_default() += 2;
                    }
                }
            }
            let best = votes
                .into_iter()
                .max_by(|(ta, va), (tb, vb)| va.cmp(vb).then_with(|| tb.cmp(ta)));
            if let Some((tok, _)) = best {
                known.insert(a, tok.clone());
                resolved.insert(a, tok);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    resolved
}

fn completion_status(ws: &Workspace, view: &AbstractionView, prompt: Option<&str>, alphabet: &Alphabet) -> CompletionStatus {
    let pm = prompt
        .and_then(|t| ws.instance_index(t))
        .and_then(|i| view.mapping_for_instance(ws, i));
    let (before, after) = token_nodes(ws, view);
    let mapped = |a: &NodeId| pm.is_some_and(|m| view.inverse[&m].contains_key(a));
    let mut missing = before.iter().filter(|a| !mapped(a)).count();
    let resolved = resolve_tokens(ws, view, pm, alphabet);
    missing += after
        .iter()
        .filter(|a| {
            let known_token = pm
                .and_then(|m| view.inverse[&m].get(a))
                .and_then(|x| ws.token(*x))
                .is_some();
            !known_token && !resolved.contains_key(a)
        })
        .count();
    if missing == 0 {
        CompletionStatus::Complete
    } else {
        CompletionStatus::Missing(missing)
    }
}

fn view_for_prompt(ws: &Workspace, prompt: &str) -> Result<(AbstractionView, usize), AnalogyError> {
    let idx = ws
        .instance_index(prompt)
        .ok_or_else(|| AnalogyError::UnknownInstance(prompt.to_string()))?;
    let views = abstractions(ws);
    if views.is_empty() {
        return Err(AnalogyError::NoAbstraction);
    }
    let view = views
        .iter()
        .find(|v| v.mapping_for_instance(ws, idx).is_some())
        .unwrap_or(&views[0])
        .clone();
    Ok((view, idx))
}

/// Whether the prompt fully instantiates the abstraction. An empty
/// abstraction is trivially complete.
pub fn completion_check(ws: &Workspace, prompt: &str, alphabet: &Alphabet) -> Result<CompletionStatus, AnalogyError> {
    let idx = ws
        .instance_index(prompt)
        .ok_or_else(|| AnalogyError::UnknownInstance(prompt.to_string()))?;
    let views = abstractions(ws);
    let Some(view) = views
        .iter()
        .find(|v| v.mapping_for_instance(ws, idx).is_some())
        .or(views.first())
    else {
        return Ok(CompletionStatus::Complete);
    };
    Ok(completion_status(ws, view, Some(prompt), alphabet))
}

/// Builds the prompt's after side: each after-side abstract node gets a
/// concrete node via the complete-node rule, and its token is inferred.
/// Returns the tokens in the reference example's after order.
pub fn extract_completion(ws: &mut Workspace, prompt: &str, alphabet: &Alphabet) -> Result<Vec<String>, AnalogyError> {
    let (view, pidx) = view_for_prompt(ws, prompt)?;
    if let CompletionStatus::Missing(n) = completion_status(ws, &view, Some(prompt), alphabet) {
        return Err(AnalogyError::Incomplete { missing: n });
    }
    let pm = view.mapping_for_instance(ws, pidx);
    let resolved = resolve_tokens(ws, &view, pm, alphabet);
    let (_, after) = token_nodes(ws, &view);
    let (ref_m, ref_i) = view.reference_mapping(ws).ok_or(AnalogyError::NoAbstraction)?;
    let rule = parse_one(COMPLETE_NODE);
    let ref_inst = ws.instances()[ref_i].clone();
    let prompt_link = ws.instances()[pidx].link;
    let pair_after = ws.structure.get(PAIR_AFTER);
    let mut tokens = Vec::with_capacity(after.len());
    for a in after {
        let existing = pm.and_then(|m| view.inverse[&m].get(&a).copied());
        let tok = match existing.and_then(|x| ws.token(x).map(str::to_string)) {
            Some(t) => t,
            None => resolved
                .get(&a)
                .cloned()
                .ok_or(AnalogyError::Incomplete { missing: 1 })?,
        };
        if existing.is_none() {
            materialize(ws, &view, &rule, a, ref_m, &ref_inst, pm, prompt_link, pair_after, pidx, &tok);
        }
        tokens.push(tok);
    }
    Ok(tokens)
}

#[allow(clippy::too_many_arguments)]
fn materialize(
    ws: &mut Workspace,
    view: &AbstractionView,
    rule: &Rule,
    a: NodeId,
    ref_m: NodeId,
    ref_inst: &Instance,
    pm: Option<NodeId>,
    prompt_link: Option<NodeId>,
    pair_after: Option<NodeId>,
    pidx: usize,
    tok: &str,
) {
    let (Some(pm), Some(plink), Some(c), Some(rlink)) = (pm, prompt_link, pair_after, ref_inst.link) else {
        return;
    };
    let (Some(&x), Some(&alink)) = (view.inverse[&ref_m].get(&a), view.forward[&ref_m].get(&rlink)) else {
        return;
    };
    let bindings = [
        ("A", x),
        ("C", c),
        ("M_A", rlink),
        ("M_B", plink),
        ("MaA", ref_m),
        ("MaB", pm),
        ("aAB", a),
        ("aMAB", alink),
        ("abs", view.abstraction_id),
    ];
    let Some(asg) = assignment_by_name(rule, &bindings) else { return };
    if !is_match(&ws.structure, rule, &asg) {
        return;
    }
    if let Ok(delta) = apply_rule(&mut ws.structure, rule, &asg) {
        for n in delta.created_nodes {
            ws.push_after(pidx, n);
            ws.set_token(n, tok);
        }
    }
}
