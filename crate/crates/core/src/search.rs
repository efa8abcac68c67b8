//! Greedy search over rule applications.
//!
//! The search runs in phases:
//!
//! 1. Saturation: every rule outside the `abs:` family (successor rules,
//!    `Same` rules, user rules) is applied to a fixpoint, one input at a time.
//! 2. Abstraction: for a handful of seed matches of the begin rule between
//!    the first two examples, an abstraction is grown greedily with follow,
//!    map-fact and lift-fact. The best-scoring branch is kept.
//! 3. Joining: further examples and the prompt are brought into the chosen
//!    abstraction with the join rules.
//!
//! Every application is checked against the consistency rules and undone if
//! it matches one. All tie-breaks are lexicographic on node names.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::abstracter::{abstractions, assignment_by_name, score_view, AbstractionView, ScoreOptions, ScoreReport, Weights};
use crate::encoders::{Alphabet, FILE, FILE_MEMBER, PAIR_AFTER, PAIR_BEFORE};
use crate::rules::{
    apply_rule, find_assignments_touching, generated_name, violations_since, would_change, Assignment, Delta,
    Rule,
};
use crate::structure::{HolePattern, NodeId, Triplet, TripletStructure};
use crate::workspace::{InstanceKind, Workspace};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Maximum number of rule applications, accepted or undone.
    pub budget: usize,
    /// Graph distance used to prefer candidates near the last change;
    /// 0 disables the preference.
    pub locality_radius: usize,
    pub weights: Weights,
    /// Recorded for reproducibility. Every tie-break is lexicographic, so no
    /// step consumes randomness.
    pub seed: u64,
    /// Prefer (rule, assignment) keys accepted in earlier branches.
    pub phase_reuse: bool,
    /// Begin matches tried per abstraction.
    pub max_seeds: usize,
    /// Follow steps are only taken when at most this many unmapped nodes
    /// could play the role.
    pub max_follow_ambiguity: usize,
    /// Coverage below this marks an analogy weak.
    pub weak_coverage: f64,
    /// Worker threads for seed branches; 1 runs them in order.
    pub parallel: usize,
    pub alphabet: Alphabet,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 500,
            locality_radius: 2,
            weights: Weights::default(),
            seed: 0,
            phase_reuse: true,
            max_seeds: 3,
            max_follow_ambiguity: 1,
            weak_coverage: 0.5,
            parallel: 1,
            alphabet: Alphabet::default(),
        }
    }
}

impl SearchConfig {
    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            weights: self.weights.clone(),
            weak_coverage: self.weak_coverage,
        }
    }
}

/// One rule application in search order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub rule: String,
    pub assignment: BTreeMap<String, String>,
    pub accepted: bool,
    pub score_after: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub workspace: Workspace,
    pub report: ScoreReport,
    pub trace: Vec<TraceRecord>,
    /// Applications used, accepted or undone.
    pub applications: usize,
}

impl SearchOutcome {
    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Saturate,
    Seed,
    SlipSeed,
    Follow,
    MapFact,
    Lift,
    JoinSeed,
    JoinNode,
    JoinFact,
    Anchor,
    Ignored,
}

fn kind_of(rule: &Rule) -> Kind {
    match rule.name.as_str() {
        "abs:begin" => Kind::Seed,
        "abs:type-slip" => Kind::SlipSeed,
        "abs:follow" | "abs:slip-follow" => Kind::Follow,
        "abs:map-fact" | "abs:slip-map-fact" => Kind::MapFact,
        "abs:lift-fact" | "abs:slip-lift" => Kind::Lift,
        "abs:join-instance" => Kind::JoinSeed,
        "abs:join-node" => Kind::JoinNode,
        "abs:join-fact" => Kind::JoinFact,
        "abs:anchor" => Kind::Anchor,
        n if n.starts_with("abs:") => Kind::Ignored,
        _ => Kind::Saturate,
    }
}

#[derive(Clone)]
struct RuleInfo {
    rule: Rule,
    kind: Kind,
}

impl RuleInfo {
    fn var(&self, a: &Assignment, name: &str) -> Option<NodeId> {
        self.rule.var_index(name).map(|i| a.get(i))
    }
}

/// Which part of the workspace a growth phase may touch.
#[derive(Clone, Copy, Debug)]
enum Scope {
    /// Growing an abstraction between two instances (equal for a
    /// self-abstraction).
    Pair {
        left: usize,
        right: usize,
        map_left: NodeId,
        map_right: NodeId,
        abs: NodeId,
    },
    /// Extending one instance's mapping into an existing abstraction.
    Join { target: usize, mapping: NodeId, abs: NodeId },
}

/// Candidate priority, smallest first: class, not previously accepted,
/// ambiguity, mismatch, negated agreement, node names.
type CandKey = (u8, bool, usize, usize, i64, Vec<String>);

#[derive(Clone)]
struct Engine<'a> {
    ws: Workspace,
    rules: &'a [RuleInfo],
    consistency: &'a [Rule],
    config: &'a SearchConfig,
    trace: Vec<TraceRecord>,
    applied: usize,
    budget: usize,
    /// Keys accepted in any branch so far.
    accepted_keys: HashSet<(usize, Vec<String>)>,
    current_abs: Option<NodeId>,
    /// Nodes created by abstraction rules, plus the `Abstraction` key. They
    /// are never treated as concrete data.
    meta: HashSet<NodeId>,
    /// Owners of every node present after saturation.
    owners: std::sync::Arc<HashMap<NodeId, Owner>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Owner {
    /// Platonic types, shared context and other nodes open to every input.
    Free,
    Inst(usize),
    /// Abstraction bookkeeping, or a fact spanning two inputs.
    Out,
}

enum Verdict {
    Drop,
    Wait,
    Take(CandKey),
}

fn mapped(s: &TripletStructure, mapping: NodeId, x: NodeId) -> Option<NodeId> {
    s.bucket(&HolePattern::new(Some(mapping), Some(x), None)).map(|t| t.key).min()
}

/// Key-indexed values of a fact, read through a mapping. Without a mapping
/// the fact is taken to be abstract already.
fn profile(s: &TripletStructure, fact: NodeId, mapping: Option<NodeId>) -> BTreeMap<NodeId, Vec<Option<NodeId>>> {
    let mut out: BTreeMap<NodeId, Vec<Option<NodeId>>> = BTreeMap::new();
    for t in s.bucket(&HolePattern::new(Some(fact), None, None)) {
        let (key, val) = match mapping {
            Some(m) => (mapped(s, m, t.key).unwrap_or(t.key), mapped(s, m, t.value)),
            None => (t.key, Some(t.value)),
        };
        out.entry(key).or_default().push(val);
    }
    out
}

struct Comparison {
    full: bool,
    mismatch: usize,
    agreement: usize,
}

fn compare(
    left: &BTreeMap<NodeId, Vec<Option<NodeId>>>,
    right: &BTreeMap<NodeId, Vec<Option<NodeId>>>,
) -> Option<Comparison> {
    let keys: BTreeSet<NodeId> = left.keys().chain(right.keys()).copied().collect();
    let empty = Vec::new();
    let mut cmp = Comparison {
        full: true,
        mismatch: 0,
        agreement: 0,
    };
    for k in keys {
        let l = left.get(&k).unwrap_or(&empty);
        let r = right.get(&k).unwrap_or(&empty);
        cmp.mismatch += l.len().abs_diff(r.len());
        let lm: BTreeSet<NodeId> = l.iter().flatten().copied().collect();
        let rm: BTreeSet<NodeId> = r.iter().flatten().copied().collect();
        let l_open = l.iter().any(Option::is_none);
        let r_open = r.iter().any(Option::is_none);
        if (!lm.is_empty() && !rm.is_empty() && lm.is_disjoint(&rm))
            || (!r_open && !r.is_empty() && !lm.is_subset(&rm))
            || (!l_open && !l.is_empty() && !rm.is_subset(&lm))
        {
            return None;
        }
        cmp.agreement += lm.intersection(&rm).count();
        if l_open || r_open || lm != rm || l.len() != r.len() {
            cmp.full = false;
        }
    }
    Some(cmp)
}

fn signature(ws: &Workspace, x: NodeId) -> BTreeSet<NodeId> {
    ws.structure
        .bucket(&HolePattern::new(None, Some(x), None))
        .map(|t| t.key)
        .filter(|k| *k != ws.abstraction_key())
        .collect()
}

fn similarity(ws: &Workspace, a: NodeId, b: NodeId) -> f64 {
    let (sa, sb) = (signature(ws, a), signature(ws, b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

impl<'a> Engine<'a> {
    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.applied)
    }

    fn current_score(&self) -> f64 {
        match self.current_abs {
            Some(abs) => {
                let view = AbstractionView::build(&self.ws, abs);
                light_score(&self.ws, &view, &self.config.weights)
            }
            None => 0.0,
        }
    }

    fn key_of(&self, ri: usize, a: &Assignment) -> (usize, Vec<String>) {
        let rule = &self.rules[ri].rule;
        let canon = rule.canonicalize(a, &self.ws.structure);
        (ri, canon.sort_key(&self.ws.structure).into_iter().map(str::to_string).collect())
    }

    /// Applies one rule match, undoing it if a consistency rule fires.
    fn apply(&mut self, ri: usize, a: &Assignment) -> Option<Delta> {
        if self.remaining() == 0 {
            return None;
        }
        let rule = &self.rules[ri].rule;
        let m = self.ws.structure.mark();
        let delta = match apply_rule(&mut self.ws.structure, rule, a) {
            Ok(d) => d,
            Err(_) => {
                self.ws.structure.rollback(m).expect("fresh mark");
                return None;
            }
        };
        self.applied += 1;
        let violated = !violations_since(&self.ws.structure, self.consistency, m)
            .expect("fresh mark")
            .is_empty();
        if violated {
            self.ws.structure.rollback(m).expect("fresh mark");
        } else {
            self.ws.structure.release(m).expect("fresh mark");
            if self.rules[ri].kind != Kind::Saturate {
                self.meta.extend(delta.created_nodes.iter().copied());
            }
            let key = self.key_of(ri, a);
            self.accepted_keys.insert(key);
        }
        let score_after = self.current_score();
        self.trace.push(TraceRecord {
            rule: rule.name.clone(),
            assignment: delta.assignment.clone(),
            accepted: !violated,
            score_after,
        });
        (!violated).then_some(delta)
    }

    fn created(&self, ri: usize, delta: &Delta, label: &str) -> Option<NodeId> {
        let rule = &self.rules[ri].rule;
        rule.create_index(label)?;
        self.ws
            .structure
            .get(&generated_name(&rule.name, &delta.assignment, label).0)
    }

    /// Which input a node belongs to. Unregistered fact nodes belong to the
    /// input their values belong to.
    fn owner(&self, n: NodeId) -> Owner {
        if self.meta.contains(&n) {
            return Owner::Out;
        }
        if let Some(o) = self.owners.get(&n) {
            return *o;
        }
        self.compute_owner(n)
    }

    fn compute_owner(&self, n: NodeId) -> Owner {
        let registered = |x: NodeId| match self.ws.instance_of(x) {
            Some(i) if self.ws.instances()[i].kind != InstanceKind::Shared => Some(i),
            _ => None,
        };
        if let Some(i) = self.ws.instance_of(n) {
            // Containers of shared files (the file node, its member and link
            // facts) would let both mappings absorb the whole file.
            return match registered(n) {
                Some(_) => Owner::Inst(i),
                None if self.ws.token(n).is_none() => Owner::Out,
                None => Owner::Free,
            };
        }
        let s = &self.ws.structure;
        let containers: Vec<NodeId> = [FILE, FILE_MEMBER, PAIR_BEFORE, PAIR_AFTER]
            .iter()
            .filter_map(|k| s.get(k))
            .collect();
        let mut found = None;
        for t in s.bucket(&HolePattern::new(Some(n), None, None)) {
            if self.meta.contains(&t.value) || (containers.contains(&t.key) && self.ws.is_shared(t.value)) {
                return Owner::Out;
            }
            match (found, registered(t.value)) {
                (_, None) => {}
                (None, Some(i)) => found = Some(i),
                (Some(j), Some(i)) if i != j => return Owner::Out,
                _ => {}
            }
        }
        found.map_or(Owner::Free, Owner::Inst)
    }

    fn index_owners(&mut self) {
        let owners = self.ws.structure.nodes().map(|n| (n, self.compute_owner(n))).collect();
        self.owners = std::sync::Arc::new(owners);
    }

    /// Whether some other mapping's image of abstract node `a` belongs to
    /// an instance.
    fn image_owned(&self, a: NodeId, except: NodeId) -> Option<bool> {
        self.ws
            .structure
            .bucket(&HolePattern::new(None, None, Some(a)))
            .find(|t| t.fact != except && !self.meta.contains(&t.value))
            .map(|t| matches!(self.owner(t.value), Owner::Inst(_)))
    }

    /// Per key, the unmapped values of abstract fact `af` and concrete fact
    /// `f` split the same way between instance-owned and shared nodes.
    fn owners_agree(&self, af: NodeId, f: NodeId, mapping: NodeId) -> bool {
        let s = &self.ws.structure;
        let split = |fact: NodeId, owned: &dyn Fn(NodeId) -> Option<bool>| {
            let mut out: Vec<(NodeId, Option<bool>)> = s
                .bucket(&HolePattern::new(Some(fact), None, None))
                .map(|t| (t.key, owned(t.value)))
                .collect();
            out.sort();
            out
        };
        let abstract_side = split(af, &|a| match self.has_instance(mapping, a) {
            true => None,
            false => self.image_owned(a, mapping),
        });
        let concrete_side = split(f, &|x| match mapped(s, mapping, x) {
            Some(_) => None,
            None => Some(matches!(self.owner(x), Owner::Inst(_))),
        });
        abstract_side == concrete_side
    }

    fn has_anchor(&self) -> bool {
        self.rules.iter().any(|r| r.kind == Kind::Anchor)
    }

    /// Unary facts with key `c` on instance `inst` whose value `m` has not
    /// mapped yet.
    fn open_unary(&self, c: NodeId, inst: usize, m: NodeId) -> usize {
        let s = &self.ws.structure;
        s.bucket(&HolePattern::new(None, None, Some(c)))
            .filter(|t| self.ws.instance_of(t.value) == Some(inst) && mapped(s, m, t.value).is_none())
            .count()
    }

    /// Anchor candidates for a pair scope: unmapped instance nodes on each
    /// side sharing a unary fact whose key occurs at most `ANCHOR_MAX`
    /// times per side.
    fn anchor_candidates(&self, scope: Scope) -> Vec<(usize, Assignment)> {
        let Some(ri) = self.rules.iter().position(|r| r.kind == Kind::Anchor) else {
            return vec![];
        };
        let Scope::Pair {
            left,
            right,
            map_left,
            map_right,
            abs,
        } = scope
        else {
            return vec![];
        };
        if left == right {
            return vec![];
        }
        let s = &self.ws.structure;
        let unary = |inst: usize| -> BTreeMap<NodeId, Vec<(NodeId, NodeId)>> {
            let mut by_key: BTreeMap<NodeId, Vec<(NodeId, NodeId)>> = BTreeMap::new();
            for n in self.ws.instances()[inst].nodes() {
                for t in s.bucket(&HolePattern::new(None, Some(n), None)) {
                    if self.meta.contains(&t.key) || self.meta.contains(&t.fact) {
                        continue;
                    }
                    if s.bucket_len(&HolePattern::new(Some(t.fact), None, None)) == 1 {
                        by_key.entry(t.key).or_default().push((t.fact, n));
                    }
                }
            }
            by_key
        };
        let (l, r) = (unary(left), unary(right));
        let mut out = Vec::new();
        for (k, ls) in &l {
            let Some(rs) = r.get(k) else { continue };
            if ls.len() > ANCHOR_MAX || rs.len() > ANCHOR_MAX {
                continue;
            }
            for &(ma, a) in ls {
                for &(mb, b) in rs {
                    let binding = [
                        ("A", a),
                        ("B", b),
                        ("C", *k),
                        ("M_A", ma),
                        ("M_B", mb),
                        ("MaA", map_left),
                        ("MaB", map_right),
                        ("abs", abs),
                    ];
                    if let Some(asg) = assignment_by_name(&self.rules[ri].rule, &binding) {
                        out.push((ri, asg));
                    }
                }
            }
        }
        out
    }

    fn in_scope(&self, n: NodeId, inst: usize) -> bool {
        match self.owner(n) {
            Owner::Free => true,
            Owner::Inst(i) => i == inst,
            Owner::Out => false,
        }
    }

    // -- phase 1: saturation ------------------------------------------------

    fn single_input(&self, rule: &Rule, a: &Assignment) -> bool {
        let _ = rule;
        let mut own = BTreeSet::new();
        let mut shared = false;
        for &n in &a.0 {
            if let Some(i) = self.ws.instance_of(n) {
                if self.ws.instances()[i].kind == InstanceKind::Shared {
                    shared = true;
                } else {
                    own.insert(i);
                }
            }
        }
        own.len() == 1 || (own.is_empty() && !shared)
    }

    fn saturate(&mut self) {
        let sat: Vec<usize> = (0..self.rules.len())
            .filter(|&i| self.rules[i].kind == Kind::Saturate)
            .collect();
        let mut since: Option<crate::structure::Mark> = None;
        loop {
            let round = self.ws.structure.mark();
            let mut progressed = false;
            for &ri in &sat {
                let rule = &self.rules[ri].rule;
                let cands = match since {
                    None => crate::rules::find_assignments(&self.ws.structure, rule),
                    Some(m) => crate::rules::find_assignments_differential(&self.ws.structure, rule, m)
                        .expect("live mark"),
                };
                for a in cands {
                    if self.remaining() == 0 {
                        break;
                    }
                    let rule = &self.rules[ri].rule;
                    if !self.single_input(rule, &a) || !would_change(&self.ws.structure, rule, &a) {
                        continue;
                    }
                    if self.apply(ri, &a).is_some() {
                        progressed = true;
                    }
                }
            }
            if let Some(m) = since.take() {
                self.ws.structure.release(m).expect("live mark");
            }
            if !progressed || self.remaining() == 0 {
                self.ws.structure.release(round).expect("live mark");
                break;
            }
            since = Some(round);
        }
    }

    // -- phase 2: abstraction ------------------------------------------------

    fn pair_seeds(&self, left: usize, right: usize, kinds: &[Kind]) -> Vec<(usize, Assignment)> {
        let s = &self.ws.structure;
        let self_mode = left == right;
        let li = &self.ws.instances()[left];
        let ri_ = &self.ws.instances()[right];
        let mut seeds: Vec<(bool, f64, usize, Vec<String>, usize, Assignment)> = Vec::new();
        for (idx, info) in self.rules.iter().enumerate() {
            if !kinds.contains(&info.kind) {
                continue;
            }
            let slip = info.kind == Kind::SlipSeed;
            for a in li.nodes().chain(li.files.iter().copied()) {
                let fa: Vec<Triplet> = s.query(&HolePattern::new(None, Some(a), None));
                let partners: Vec<NodeId> = if self_mode {
                    vec![a]
                } else {
                    ri_.nodes().chain(ri_.files.iter().copied()).collect()
                };
                for b in partners {
                    let sim = similarity(&self.ws, a, b);
                    let fb: Vec<Triplet> = if self_mode {
                        fa.clone()
                    } else {
                        s.query(&HolePattern::new(None, Some(b), None))
                    };
                    for ta in &fa {
                        if ta.key == self.ws.abstraction_key() {
                            continue;
                        }
                        for tb in &fb {
                            if self_mode && ta != tb {
                                continue;
                            }
                            let asg = if slip {
                                if ta.key == tb.key {
                                    continue;
                                }
                                assignment_by_name(
                                    &info.rule,
                                    &[("A", a), ("B", b), ("C1", ta.key), ("C2", tb.key), ("M_A", ta.fact), ("M_B", tb.fact)],
                                )
                            } else {
                                if ta.key != tb.key {
                                    continue;
                                }
                                assignment_by_name(
                                    &info.rule,
                                    &[("A", a), ("B", b), ("C", ta.key), ("M_A", ta.fact), ("M_B", tb.fact)],
                                )
                            };
                            let Some(asg) = asg else { continue };
                            let rarity = s.bucket_len(&HolePattern::new(None, None, Some(ta.key)));
                            let names = asg.sort_key(s).into_iter().map(str::to_string).collect();
                            seeds.push((slip, -sim, rarity, names, idx, asg));
                        }
                    }
                }
            }
        }
        seeds.sort_by(|x, y| {
            (x.0, x.1, x.2, &x.3)
                .partial_cmp(&(y.0, y.1, y.2, &y.3))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        seeds.into_iter().map(|(.., idx, a)| (idx, a)).collect()
    }

    fn pair_scope(&self, ri: usize, delta: &Delta, left: usize, right: usize) -> Option<Scope> {
        Some(Scope::Pair {
            left,
            right,
            map_left: self.created(ri, delta, "MaA")?,
            map_right: self.created(ri, delta, "MaB")?,
            abs: self.created(ri, delta, "abs")?,
        })
    }

    fn neighborhood(&self, start: &[NodeId], radius: usize) -> HashSet<NodeId> {
        let s = &self.ws.structure;
        let mut seen: HashSet<NodeId> = start.iter().copied().collect();
        let mut frontier: Vec<NodeId> = start.to_vec();
        for _ in 0..radius {
            let mut next = Vec::new();
            for &n in &frontier {
                let as_fact = s.bucket(&HolePattern::new(Some(n), None, None)).map(|t| t.value);
                let as_value = s.bucket(&HolePattern::new(None, Some(n), None)).map(|t| t.fact);
                for m in as_fact.chain(as_value).collect::<Vec<_>>() {
                    if seen.insert(m) {
                        next.push(m);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    /// Unmapped values under `key`, counted up to one past the follow
    /// threshold.
    fn count_open_values(&self, fact: NodeId, key: NodeId, mapping: Option<NodeId>, abstract_side: Option<NodeId>) -> usize {
        let cap = self.config.max_follow_ambiguity + 1;
        let s = &self.ws.structure;
        s.bucket(&HolePattern::new(Some(fact), None, Some(key)))
            .filter(|t| match (mapping, abstract_side) {
                (Some(m), _) => mapped(s, m, t.value).is_none(),
                // abstract fact: values with no instance under the joining mapping
                (None, Some(m)) => !s
                    .bucket(&HolePattern::new(Some(m), None, Some(t.value)))
                    .any(|_| true),
                (None, None) => true,
            })
            .take(cap)
            .count()
    }

    fn count_open_facts(&self, value: NodeId, key: NodeId, mapping: NodeId) -> usize {
        let s = &self.ws.structure;
        s.bucket(&HolePattern::new(None, Some(value), Some(key)))
            .filter(|t| mapped(s, mapping, t.fact).is_none())
            .count()
    }

    fn has_instance(&self, mapping: NodeId, abstract_node: NodeId) -> bool {
        self.ws
            .structure
            .bucket(&HolePattern::new(Some(mapping), None, Some(abstract_node)))
            .next()
            .is_some()
    }

    fn evaluate(&self, ri: usize, a: &Assignment, scope: Scope) -> Verdict {
        let info = &self.rules[ri];
        let s = &self.ws.structure;
        // Growth only adds facts, so a candidate stays a match once found.
        // The per-kind checks below cover `would_change` for rules that
        // create nodes; the others are checked directly.
        if info.rule.creates.is_empty() && !would_change(s, &info.rule, a) {
            return Verdict::Drop;
        }
        let v = |n: &str| info.var(a, n);
        let key_of = |t: Option<NodeId>| t;
        let reused = self.config.phase_reuse && self.accepted_keys.contains(&self.key_of(ri, a));
        let names: Vec<String> = a.sort_key(s).into_iter().map(str::to_string).collect();
        let c = v("C").or(v("C1")).unwrap_or(s.get("Abstraction").unwrap());
        match scope {
            Scope::Pair {
                left,
                right,
                map_left,
                map_right,
                abs,
            } => {
                if v("MaA") != Some(map_left) || v("MaB") != Some(map_right) || v("abs") != Some(abs) {
                    return Verdict::Drop;
                }
                let (na, nb, ma, mb) = (v("A"), v("B"), v("M_A"), v("M_B"));
                for (n, inst) in [(na, left), (ma, left), (nb, right), (mb, right)] {
                    if let Some(n) = n {
                        if !self.in_scope(n, inst) {
                            return Verdict::Drop;
                        }
                    }
                }
                if [v("C"), v("C1"), v("C2")].into_iter().flatten().any(|k| self.meta.contains(&k)) {
                    return Verdict::Drop;
                }
                if left == right && (na != nb || ma != mb) {
                    return Verdict::Drop;
                }
                let (na, nb, ma, mb) = (na.unwrap(), nb.unwrap(), ma.unwrap(), mb.unwrap());
                // an example's own node never pairs with shared context
                let owned = |n: NodeId| matches!(self.owner(n), Owner::Inst(_));
                if owned(na) != owned(nb) {
                    return Verdict::Drop;
                }
                let c2 = v("C2").unwrap_or(c);
                match info.kind {
                    Kind::Lift => Verdict::Take((0, !reused, 0, 0, 0, names)),
                    Kind::Follow => {
                        if mapped(s, map_left, na).is_some() || mapped(s, map_right, nb).is_some() {
                            return Verdict::Drop;
                        }
                        let amb = self
                            .count_open_values(ma, c, Some(map_left), None)
                            .max(self.count_open_values(mb, c2, Some(map_right), None));
                        if amb > self.config.max_follow_ambiguity {
                            return Verdict::Wait;
                        }
                        // with anchors available, pairing two different
                        // tokens waits until no anchor is left
                        let differ = matches!((self.ws.token(na), self.ws.token(nb)), (Some(x), Some(y)) if x != y);
                        let class = if differ && self.has_anchor() { 6 } else { 2 };
                        Verdict::Take((class, !reused, amb, 0, 0, names))
                    }
                    Kind::Anchor => {
                        if left == right
                            || mapped(s, map_left, na).is_some()
                            || mapped(s, map_right, nb).is_some()
                            || mapped(s, map_left, ma).is_some()
                            || mapped(s, map_right, mb).is_some()
                        {
                            return Verdict::Drop;
                        }
                        let amb = self.open_unary(c, left, map_left).max(self.open_unary(c, right, map_right));
                        let sim = (similarity(&self.ws, na, nb) * 1000.0) as i64;
                        Verdict::Take((5, !reused, amb.saturating_sub(1), 0, -sim, names))
                    }
                    Kind::MapFact => {
                        if mapped(s, map_left, ma).is_some() || mapped(s, map_right, mb).is_some() {
                            return Verdict::Drop;
                        }
                        let Some(cmp) = compare(&profile(s, ma, Some(map_left)), &profile(s, mb, Some(map_right)))
                        else {
                            return Verdict::Wait;
                        };
                        let amb = self
                            .count_open_facts(na, c, map_left)
                            .max(self.count_open_facts(nb, c2, map_right));
                        let class = if cmp.full {
                            1
                        } else if cmp.mismatch == 0 {
                            3
                        } else {
                            4
                        };
                        Verdict::Take((class, !reused, amb, cmp.mismatch, -(cmp.agreement as i64), names))
                    }
                    _ => Verdict::Drop,
                }
            }
            Scope::Join { target, mapping, abs } => {
                if v("MaB") != Some(mapping) || v("abs") != Some(abs) {
                    return Verdict::Drop;
                }
                let (nb, mb, a_ab, a_mab) = (v("B").unwrap(), v("M_B").unwrap(), v("aAB").unwrap(), v("aMAB").unwrap());
                if !self.in_scope(nb, target) || !self.in_scope(mb, target) || self.meta.contains(&c) {
                    return Verdict::Drop;
                }
                let _ = key_of;
                // instance-owned parts of the abstraction take target-owned
                // nodes; shared context stays shared
                let a_node = if info.kind == Kind::JoinNode { a_ab } else { a_mab };
                let b_node = if info.kind == Kind::JoinNode { nb } else { mb };
                if let Some(owned) = self.image_owned(a_node, mapping) {
                    if owned != matches!(self.owner(b_node), Owner::Inst(_)) {
                        return Verdict::Drop;
                    }
                }
                match info.kind {
                    Kind::JoinNode => {
                        if mapped(s, mapping, nb).is_some() || self.has_instance(mapping, a_ab) {
                            return Verdict::Drop;
                        }
                        let amb = self
                            .count_open_values(mb, c, Some(mapping), None)
                            .max(self.count_open_values(a_mab, c, None, Some(mapping)));
                        if amb > self.config.max_follow_ambiguity {
                            return Verdict::Wait;
                        }
                        Verdict::Take((2, !reused, amb, 0, 0, names))
                    }
                    Kind::JoinFact => {
                        if mapped(s, mapping, mb).is_some() || self.has_instance(mapping, a_mab) {
                            return Verdict::Drop;
                        }
                        if !self.owners_agree(a_mab, mb, mapping) {
                            return Verdict::Drop;
                        }
                        let Some(cmp) = compare(&profile(s, a_mab, None), &profile(s, mb, Some(mapping))) else {
                            return Verdict::Wait;
                        };
                        let amb = self.count_open_facts(nb, c, mapping);
                        let class = if cmp.full { 1 } else { 3 };
                        Verdict::Take((class, !reused, amb, 0, -(cmp.agreement as i64), names))
                    }
                    _ => Verdict::Drop,
                }
            }
        }
    }

    fn growth_rules(&self, scope: Scope) -> Vec<usize> {
        let kinds: &[Kind] = match scope {
            Scope::Pair { .. } => &[Kind::Follow, Kind::MapFact, Kind::Lift],
            Scope::Join { .. } => &[Kind::JoinNode, Kind::JoinFact],
        };
        (0..self.rules.len())
            .filter(|&i| kinds.contains(&self.rules[i].kind))
            .collect()
    }

    fn grow(&mut self, scope: Scope, first: &Delta, seed_nodes: Vec<NodeId>) {
        let growth = self.growth_rules(scope);
        let mut pool = Pool::default();
        pool.extend(self, &growth, &first.added_facts);
        for (ri, a) in self.anchor_candidates(scope) {
            pool.push(ri, a);
        }
        let mut last = seed_nodes;
        while self.remaining() > 0 {
            for id in std::mem::take(&mut pool.dirty) {
                if pool.alive[id] {
                    let (ri, a) = &pool.cands[id];
                    let v = self.evaluate(*ri, a, scope);
                    pool.set(id, v);
                }
            }
            let near = if self.config.locality_radius > 0 {
                self.neighborhood(&last, self.config.locality_radius)
            } else {
                HashSet::new()
            };
            let far = |a: &Assignment| !near.is_empty() && !a.0.iter().any(|n| near.contains(n));
            let best = pool
                .ready
                .iter()
                .map(|(&id, k)| (id, k, far(&pool.cands[id].1)))
                .min_by(|x, y| {
                    (x.1 .0, x.1 .1, x.2)
                        .cmp(&(y.1 .0, y.1 .1, y.2))
                        .then_with(|| x.1.cmp(y.1))
                })
                .map(|(id, k, _)| (id, k.clone()));
            let Some((id, cached)) = best else {
                break };
            // The cache may be stale; act only on a fresh verdict.
            let (ri, a) = pool.cands[id].clone();
            match self.evaluate(ri, &a, scope) {
                Verdict::Take(k) if k == cached => {}
                v => {
                    pool.set(id, v);
                    continue;
                }
            }
            pool.kill(id);
            if let Some(delta) = self.apply(ri, &a) {
                pool.touch(self, &delta.added_facts);
                pool.extend(self, &growth, &delta.added_facts);
                last = a.0.clone();
            }
        }
    }

    /// Runs each seed on its own copy of the engine and keeps the best.
    fn explore(&self, seeds: Vec<(usize, Assignment)>, mode: SeedMode) -> Option<Engine<'a>> {
        let seeds: Vec<(usize, Assignment)> = seeds.into_iter().take(self.config.max_seeds.max(1)).collect();
        if seeds.is_empty() {
            return None;
        }
        let run = |base: &Engine<'a>, seed: &(usize, Assignment), budget: usize| -> Option<(Engine<'a>, (f64, f64))> {
            let mut eng = base.clone();
            eng.budget = eng.applied + budget;
            let delta = eng.apply(seed.0, &seed.1)?;
            let scope = match mode {
                SeedMode::Pair { left, right } => eng.pair_scope(seed.0, &delta, left, right)?,
                SeedMode::Join { target } => Scope::Join {
                    target,
                    mapping: eng.created(seed.0, &delta, "MaB")?,
                    abs: eng.current_abs?,
                },
            };
            if let Scope::Pair { abs, .. } = scope {
                eng.current_abs = Some(abs);
            }
            eng.grow(scope, &delta, seed.1 .0.clone());
            let key = eng.branch_key(mode);
            Some((eng, key))
        };
        let mut best: Option<(Engine<'a>, (f64, f64))> = None;
        let mut spent = 0;
        let mut traces = Vec::new();
        let mut accepted = self.accepted_keys.clone();
        if self.config.parallel > 1 {
            let share = self.remaining() / seeds.len();
            let results: Vec<Option<(Engine<'a>, (f64, f64))>> = std::thread::scope(|sc| {
                let handles: Vec<_> = seeds
                    .chunks(seeds.len().div_ceil(self.config.parallel))
                    .map(|chunk| {
                        let run = &run;
                        sc.spawn(move || chunk.iter().map(|sd| run(self, sd, share)).collect::<Vec<_>>())
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("seed worker panicked"))
                    .collect()
            });
            for r in results.into_iter().flatten() {
                spent += r.0.applied - self.applied;
                traces.push(r.0.trace[self.trace.len()..].to_vec());
                accepted.extend(r.0.accepted_keys.iter().cloned());
                if best.as_ref().is_none_or(|(_, k)| r.1 > *k) {
                    best = Some(r);
                }
            }
        } else {
            let mut base = self.clone();
            for seed in &seeds {
                let remaining = self.budget.saturating_sub(self.applied + spent);
                if remaining == 0 {
                    break;
                }
                base.accepted_keys = accepted.clone();
                base.applied = self.applied + spent;
                let Some(r) = run(&base, seed, remaining) else {
                    spent += 1;
                    continue;
                };
                spent = r.0.applied - self.applied;
                traces.push(r.0.trace[self.trace.len()..].to_vec());
                accepted.extend(r.0.accepted_keys.iter().cloned());
                let full = r.1 .1 >= 1.0;
                if best.as_ref().is_none_or(|(_, k)| r.1 > *k) {
                    best = Some(r);
                }
                if full {
                    break;
                }
            }
        }
        let (mut eng, _) = best?;
        let mut trace = self.trace.clone();
        for t in traces {
            trace.extend(t);
        }
        eng.trace = trace;
        eng.applied = self.applied + spent;
        eng.budget = self.budget;
        eng.accepted_keys = accepted;
        Some(eng)
    }

    fn branch_key(&self, mode: SeedMode) -> (f64, f64) {
        let Some(abs) = self.current_abs else {
            return (0.0, 0.0);
        };
        let view = AbstractionView::build(&self.ws, abs);
        match mode {
            SeedMode::Pair { .. } => {
                let r = score_view(&self.ws, &view, &self.config.score_options(), &self.config.alphabet);
                (r.weighted_score, r.coverage)
            }
            SeedMode::Join { target } => {
                let mapped = view
                    .mapping_for_instance(&self.ws, target)
                    .map_or(0, |m| view.forward[&m].len());
                (light_score(&self.ws, &view, &self.config.weights), mapped as f64)
            }
        }
    }

    fn join_seeds(&self, target: usize) -> Vec<(usize, Assignment)> {
        let Some(abs) = self.current_abs else { return vec![] };
        let view = AbstractionView::build(&self.ws, abs);
        let Some(&reference) = view.mappings.first() else { return vec![] };
        let s = &self.ws.structure;
        let inst = &self.ws.instances()[target];
        let mut seeds: Vec<(f64, usize, Vec<String>, usize, Assignment)> = Vec::new();
        for (idx, info) in self.rules.iter().enumerate() {
            if info.kind != Kind::JoinSeed {
                continue;
            }
            for b in inst.nodes().chain(inst.files.iter().copied()) {
                for tb in s.query(&HolePattern::new(None, Some(b), None)) {
                    // abstract facts with the same key whose fact node the reference maps
                    for ta in s.query(&HolePattern::new(None, None, Some(tb.key))) {
                        if !view.abstract_facts.contains(&ta.fact) {
                            continue;
                        }
                        let Some(&m_a) = view.inverse[&reference].get(&ta.fact) else { continue };
                        let Some(&a_conc) = view.inverse[&reference].get(&ta.value) else { continue };
                        // anchor on the example's own tokens, not on shared context
                        if !matches!(self.owner(a_conc), Owner::Inst(_)) {
                            continue;
                        }
                        let Some(asg) = assignment_by_name(
                            &info.rule,
                            &[
                                ("B", b),
                                ("C", tb.key),
                                ("M_B", tb.fact),
                                ("MaA", reference),
                                ("M_A", m_a),
                                ("aAB", ta.value),
                                ("aMAB", ta.fact),
                                ("abs", abs),
                            ],
                        ) else {
                            continue;
                        };
                        let sim = similarity(&self.ws, a_conc, b);
                        let rarity = s.bucket_len(&HolePattern::new(None, None, Some(tb.key)));
                        let names = asg.sort_key(s).into_iter().map(str::to_string).collect();
                        seeds.push((-sim, rarity, names, idx, asg));
                    }
                }
            }
        }
        seeds.sort_by(|x, y| {
            (x.0, x.1, &x.2)
                .partial_cmp(&(y.0, y.1, &y.2))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        seeds.into_iter().map(|(.., idx, a)| (idx, a)).collect()
    }
}

/// Unary keys shared by more nodes than this on one side are too
/// ambiguous to anchor on.
const ANCHOR_MAX: usize = 3;

/// Growth candidates with cached verdicts. A verdict is recomputed when a
/// triple touching one of the candidate's nodes, or a neighbor of one, is
/// added.
#[derive(Default)]
struct Pool {
    cands: Vec<(usize, Assignment)>,
    alive: Vec<bool>,
    seen: HashSet<(usize, Assignment)>,
    by_node: HashMap<NodeId, Vec<usize>>,
    ready: BTreeMap<usize, CandKey>,
    dirty: BTreeSet<usize>,
}

impl Pool {
    fn extend(&mut self, eng: &Engine, growth: &[usize], facts: &[Triplet]) {
        for &ri in growth {
            for a in find_assignments_touching(&eng.ws.structure, &eng.rules[ri].rule, facts) {
                self.push(ri, a);
            }
        }
    }

    fn push(&mut self, ri: usize, a: Assignment) {
        let key = (ri, a);
        if self.seen.contains(&key) {
            return;
        }
        let id = self.cands.len();
        for n in key.1 .0.iter().copied().collect::<BTreeSet<_>>() {
            self.by_node.entry(n).or_default().push(id);
        }
        self.seen.insert(key.clone());
        self.cands.push(key);
        self.alive.push(true);
        self.dirty.insert(id);
    }

    fn set(&mut self, id: usize, v: Verdict) {
        match v {
            Verdict::Drop => self.kill(id),
            Verdict::Wait => {
                self.ready.remove(&id);
            }
            Verdict::Take(k) => {
                self.ready.insert(id, k);
            }
        }
    }

    fn kill(&mut self, id: usize) {
        self.alive[id] = false;
        self.ready.remove(&id);
    }

    fn touch(&mut self, eng: &Engine, added: &[Triplet]) {
        let s = &eng.ws.structure;
        let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
        let key = eng.ws.abstraction_key();
        for t in added {
            for n in t.slots() {
                nodes.insert(n);
                // Roots and mapping nodes reach everything mapped so far.
                let bookkeeping = n == key
                    || s.bucket_len(&HolePattern::new(None, Some(n), Some(key))) > 0
                    || s.bucket_len(&HolePattern::new(Some(n), None, Some(key))) > 0;
                if bookkeeping {
                    continue;
                }
                nodes.extend(s.bucket(&HolePattern::new(None, Some(n), None)).map(|u| u.fact));
                nodes.extend(s.bucket(&HolePattern::new(Some(n), None, None)).map(|u| u.value));
            }
        }
        for n in nodes {
            if let Some(ids) = self.by_node.get(&n) {
                self.dirty.extend(ids.iter().copied().filter(|&i| self.alive[i]));
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum SeedMode {
    Pair { left: usize, right: usize },
    Join { target: usize },
}

/// Abstract facts realized by every non-prompt mapping, weighted.
fn light_score(ws: &Workspace, view: &AbstractionView, weights: &Weights) -> f64 {
    let examples: Vec<&NodeId> = view
        .mappings
        .iter()
        .filter(|m| {
            !view
                .mapping_instance(ws, **m)
                .is_some_and(|i| ws.instances()[i].kind == InstanceKind::Prompt)
        })
        .collect();
    view.abstract_facts
        .iter()
        .filter(|f| examples.iter().all(|m| view.inverse[m].contains_key(f)))
        .map(|f| {
            view.triples_of_fact(*f)
                .map(|t| weights.get(ws.structure.name(t.key)))
                .fold(f64::MIN, f64::max)
        })
        .sum()
}

/// The instances the abstraction is built between, and the ones joined
/// afterwards, in registration order.
fn plan(ws: &Workspace) -> Option<((usize, usize), Vec<usize>)> {
    let mut bases: Vec<usize> = Vec::new();
    let mut prompts: Vec<usize> = Vec::new();
    for (i, inst) in ws.instances().iter().enumerate() {
        match inst.kind {
            InstanceKind::Example | InstanceKind::Plain => bases.push(i),
            InstanceKind::Prompt => prompts.push(i),
            InstanceKind::Shared => {}
        }
    }
    match bases.len() {
        0 => None,
        1 if prompts.is_empty() => None,
        1 => Some(((bases[0], bases[0]), prompts)),
        _ => {
            let mut rest = bases[2..].to_vec();
            rest.extend(prompts);
            Some(((bases[0], bases[1]), rest))
        }
    }
}

/// Searches for the best abstraction over the workspace's inputs.
///
/// With two or more examples (or plain inputs) the abstraction is built
/// between the first two; with a single example and a prompt, the example
/// is abstracted against itself so the prompt has something to join.
pub fn search(ws: Workspace, rules: &[Rule], consistency: &[Rule], config: &SearchConfig) -> SearchOutcome {
    let infos: Vec<RuleInfo> = rules
        .iter()
        .map(|r| RuleInfo {
            rule: r.clone(),
            kind: kind_of(r),
        })
        .collect();
    let mut eng = Engine {
        ws,
        rules: &infos,
        consistency,
        config,
        trace: Vec::new(),
        applied: 0,
        budget: config.budget.max(1),
        accepted_keys: HashSet::new(),
        current_abs: None,
        meta: HashSet::new(),
        owners: Default::default(),
    };
    eng.meta.insert(eng.ws.abstraction_key());
    eng.saturate();
    eng.index_owners();
    if let Some(((left, right), joins)) = plan(&eng.ws) {
        let seeds = eng.pair_seeds(left, right, &[Kind::Seed, Kind::SlipSeed]);
        if let Some(next) = eng.explore(seeds, SeedMode::Pair { left, right }) {
            eng = next;
            for target in joins {
                let seeds = eng.join_seeds(target);
                if let Some(next) = eng.explore(seeds, SeedMode::Join { target }) {
                    eng = next;
                }
            }
        }
    }
    let report = match eng.current_abs {
        Some(abs) => score_view(
            &eng.ws,
            &AbstractionView::build(&eng.ws, abs),
            &config.score_options(),
            &config.alphabet,
        ),
        None => ScoreReport::empty(),
    };
    SearchOutcome {
        workspace: eng.ws,
        report,
        trace: eng.trace,
        applications: eng.applied,
    }
}

/// A name-independent key for an abstraction: the sorted tuples of concrete
/// nodes that share an abstract node.
pub fn canonical_key(ws: &Workspace) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for view in abstractions(ws) {
        for a in &view.abstract_nodes {
            let mut tuple: Vec<String> = view
                .mappings
                .iter()
                .filter_map(|m| view.inverse[m].get(a))
                .map(|x| ws.structure.name(*x).to_string())
                .collect();
            tuple.sort();
            out.insert(tuple);
        }
    }
    out
}

/// Up to `k` distinct abstractions, best first. Each comes from a different
/// begin seed; structurally identical results are merged.
pub fn rank_alternatives(
    ws: &Workspace,
    rules: &[Rule],
    consistency: &[Rule],
    config: &SearchConfig,
    k: usize,
) -> Vec<(Workspace, ScoreReport)> {
    let infos: Vec<RuleInfo> = rules
        .iter()
        .map(|r| RuleInfo {
            rule: r.clone(),
            kind: kind_of(r),
        })
        .collect();
    let mut base = Engine {
        ws: ws.clone(),
        rules: &infos,
        consistency,
        config,
        trace: Vec::new(),
        applied: 0,
        budget: config.budget.max(1),
        accepted_keys: HashSet::new(),
        current_abs: None,
        meta: HashSet::new(),
        owners: Default::default(),
    };
    base.meta.insert(base.ws.abstraction_key());
    base.saturate();
    base.index_owners();
    let Some(((left, right), joins)) = plan(&base.ws) else {
        return Vec::new();
    };
    let seeds = base.pair_seeds(left, right, &[Kind::Seed, Kind::SlipSeed]);
    let single = SearchConfig {
        max_seeds: 1,
        ..config.clone()
    };
    let mut results: Vec<(Workspace, ScoreReport)> = Vec::new();
    let mut seen: HashMap<BTreeSet<Vec<String>>, ()> = HashMap::new();
    for seed in seeds.into_iter().take(config.max_seeds.max(k)) {
        let mut eng = base.clone();
        eng.config = &single;
        eng.budget = config.budget.max(1);
        let Some(mut next) = eng.explore(vec![seed], SeedMode::Pair { left, right }) else {
            continue;
        };
        for &target in &joins {
            let js = next.join_seeds(target);
            if let Some(n) = next.explore(js, SeedMode::Join { target }) {
                next = n;
            }
        }
        let key = canonical_key(&next.ws);
        if seen.insert(key, ()).is_some() {
            continue;
        }
        let abs = next.current_abs.expect("explore sets the abstraction");
        let report = score_view(
            &next.ws,
            &AbstractionView::build(&next.ws, abs),
            &config.score_options(),
            &config.alphabet,
        );
        results.push((next.ws, report));
    }
    results.sort_by(|a, b| {
        b.1.weighted_score
            .partial_cmp(&a.1.weighted_score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    results.truncate(k);
    results
}
