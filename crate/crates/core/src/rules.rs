//! Update rules over triplet structures.
//!
//! A rule is a small pattern graph: variables to search for, constants that
//! must already exist, required facts over both, and a set of nodes and facts
//! to add when the pattern matches. Consistency rules have no add-set; any
//! match of one means the structure is in a state the search must undo.
//!
//! Rules are written in a line-oriented text form:
//!
//! ```text
//! rule successor-a-b
//! var v1 v2 vf1 vf2
//! const Letter:a Letter:b Predecessor Successor
//! require (vf1 v1 Letter:a)
//! require (vf2 v2 Letter:b)
//! create nf3
//! add (nf3 v1 Predecessor)
//! add (nf3 v2 Successor)
//! ```
//!
//! Rules end at a blank line or at the next `rule` header. Extra directives:
//! `distinct a b` forbids two variables from binding the same node, and
//! `sym (a b) <-> (c d)` declares a variable permutation that maps the rule
//! onto itself.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::RuleError;
use crate::structure::{HolePattern, Mark, NodeId, Triplet, TripletStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(usize),
    Const(usize),
    New(usize),
}

pub type Template = [Term; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub vars: Vec<String>,
    pub consts: Vec<String>,
    pub creates: Vec<String>,
    pub requires: Vec<Template>,
    pub adds: Vec<Template>,
    pub distinct: Vec<(usize, usize)>,
    /// Declared generators, as `(left vars, right vars)` swaps.
    pub symmetry_decls: Vec<(Vec<usize>, Vec<usize>)>,
    /// Full symmetry group, identity first. `perm[i] = j` means variable `i`
    /// takes the value bound to `j`.
    pub symmetries: Vec<Vec<usize>>,
    pub consistency: bool,
}

/// A total binding of a rule's variables, indexed like `Rule::vars`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<NodeId>);

impl Assignment {
    pub fn get(&self, var: usize) -> NodeId {
        self.0[var]
    }

    /// `(variable, node name)` pairs sorted by variable name.
    pub fn named(&self, rule: &Rule, s: &TripletStructure) -> BTreeMap<String, String> {
        rule.vars
            .iter()
            .zip(&self.0)
            .map(|(v, n)| (v.clone(), s.name(*n).to_string()))
            .collect()
    }

    /// Sort key: bound node names in variable order.
    pub fn sort_key<'s>(&self, s: &'s TripletStructure) -> Vec<&'s str> {
        self.0.iter().map(|n| s.name(*n)).collect()
    }
}

/// What one rule application changed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delta {
    pub created_nodes: Vec<NodeId>,
    pub added_facts: Vec<Triplet>,
    pub rule: String,
    pub assignment: BTreeMap<String, String>,
}

impl Rule {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn create_index(&self, name: &str) -> Option<usize> {
        self.creates.iter().position(|v| v == name)
    }

    fn term_name(&self, t: Term) -> &str {
        match t {
            Term::Var(i) => &self.vars[i],
            Term::Const(i) => &self.consts[i],
            Term::New(i) => &self.creates[i],
        }
    }

    /// Substitutes an assignment into a required-fact template.
    pub fn instantiate(&self, tpl: &Template, consts: &[NodeId], a: &Assignment) -> Triplet {
        let node = |t: Term| match t {
            Term::Var(i) => a.get(i),
            Term::Const(i) => consts[i],
            Term::New(_) => unreachable!("required facts never mention created nodes"),
        };
        Triplet::new(node(tpl[0]), node(tpl[1]), node(tpl[2]))
    }

    /// Resolves the rule's constants, or `None` if a constant used by a
    /// required fact is missing. Constants that only occur in the add-set
    /// resolve to a placeholder until the rule is applied.
    pub fn resolve_consts(&self, s: &TripletStructure) -> Option<Vec<NodeId>> {
        self.consts
            .iter()
            .enumerate()
            .map(|(i, c)| match s.get(c) {
                Some(id) => Some(id),
                None if !self.requires.iter().flatten().any(|t| *t == Term::Const(i)) => {
                    Some(NodeId::PLACEHOLDER)
                }
                None => None,
            })
            .collect()
    }

    fn finish(mut self) -> Result<Self, RuleError> {
        let invalid = |m: &str| RuleError::Invalid {
            rule: self.name.clone(),
            message: m.to_string(),
        };
        if self.consistency && (!self.creates.is_empty() || !self.adds.is_empty()) {
            return Err(invalid("a consistency rule cannot create nodes or add facts"));
        }
        for (i, v) in self.vars.iter().enumerate() {
            if !self.requires.iter().flatten().any(|t| *t == Term::Var(i)) {
                return Err(invalid(&format!("variable `{v}` does not occur in any required fact")));
            }
        }
        for (i, c) in self.creates.iter().enumerate() {
            if !self.adds.iter().flatten().any(|t| *t == Term::New(i)) {
                return Err(invalid(&format!("created node `{c}` is never used")));
            }
        }
        let required: BTreeSet<Template> = self.requires.iter().copied().collect();
        let mut generators = Vec::new();
        for (left, right) in &self.symmetry_decls {
            let mut perm: Vec<usize> = (0..self.vars.len()).collect();
            for (&l, &r) in left.iter().zip(right) {
                perm[l] = r;
                perm[r] = l;
            }
            let image: BTreeSet<Template> = self
                .requires
                .iter()
                .map(|tpl| tpl.map(|t| permute_term(t, &perm)))
                .collect();
            if image != required {
                return Err(invalid("declared symmetry does not preserve the required facts"));
            }
            generators.push(perm);
        }
        self.symmetries = close_group(self.vars.len(), &generators);
        Ok(self)
    }

    /// The lexicographically least member (by node names) of the
    /// assignment's orbit under the rule's symmetry group.
    pub fn canonicalize(&self, a: &Assignment, s: &TripletStructure) -> Assignment {
        let mut best = a.clone();
        for perm in self.symmetries.iter().skip(1) {
            let cand = Assignment(perm.iter().map(|&j| a.get(j)).collect());
            if cand.sort_key(s) < best.sort_key(s) {
                best = cand;
            }
        }
        best
    }
}

fn permute_term(t: Term, perm: &[usize]) -> Term {
    match t {
        Term::Var(i) => Term::Var(perm[i]),
        other => other,
    }
}

fn close_group(n: usize, generators: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..n).collect();
    let mut group = vec![identity.clone()];
    let mut seen: HashSet<Vec<usize>> = HashSet::from([identity]);
    let mut i = 0;
    while i < group.len() {
        let g = group[i].clone();
        for h in generators {
            let composed: Vec<usize> = (0..n).map(|k| g[h[k]]).collect();
            if seen.insert(composed.clone()) {
                group.push(composed);
            }
        }
        i += 1;
    }
    group
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}", self.name)?;
        if self.consistency {
            write!(f, " consistency")?;
        }
        writeln!(f)?;
        if !self.vars.is_empty() {
            writeln!(f, "var {}", self.vars.join(" "))?;
        }
        if !self.consts.is_empty() {
            writeln!(f, "const {}", self.consts.join(" "))?;
        }
        for (a, b) in &self.distinct {
            writeln!(f, "distinct {} {}", self.vars[*a], self.vars[*b])?;
        }
        for (l, r) in &self.symmetry_decls {
            let names = |v: &Vec<usize>| v.iter().map(|&i| self.vars[i].as_str()).collect::<Vec<_>>().join(" ");
            writeln!(f, "sym ({}) <-> ({})", names(l), names(r))?;
        }
        for tpl in &self.requires {
            let [a, b, c] = tpl.map(|t| self.term_name(t));
            writeln!(f, "require ({a} {b} {c})")?;
        }
        if !self.creates.is_empty() {
            writeln!(f, "create {}", self.creates.join(" "))?;
        }
        for tpl in &self.adds {
            let [a, b, c] = tpl.map(|t| self.term_name(t));
            writeln!(f, "add ({a} {b} {c})")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// parsing

struct RuleDraft {
    rule: Rule,
    raw_requires: Vec<(usize, Vec<(String, usize)>)>,
    raw_adds: Vec<(usize, Vec<(String, usize)>)>,
}

/// Parses every rule in `text`.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut out = Vec::new();
    let mut draft: Option<RuleDraft> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let words = split_with_columns(line);
        let Some((head, head_col)) = words.first().cloned() else {
            if raw.trim().is_empty() {
                if let Some(d) = draft.take() {
                    out.push(resolve_draft(d)?);
                }
            }
            continue;
        };
        let syntax = |column: usize, message: String| RuleError::Syntax {
            line: line_no,
            column,
            message,
        };
        if head == "rule" {
            if let Some(d) = draft.take() {
                out.push(resolve_draft(d)?);
            }
            let (name, _) = words
                .get(1)
                .cloned()
                .ok_or_else(|| syntax(head_col, "missing rule name".into()))?;
            let consistency = match words.get(2) {
                None => false,
                Some((w, _)) if w == "consistency" => true,
                Some((w, c)) => return Err(syntax(*c, format!("unexpected `{w}`"))),
            };
            if let Some((w, c)) = words.get(3) {
                return Err(syntax(*c, format!("unexpected `{w}`")));
            }
            draft = Some(RuleDraft {
                rule: Rule {
                    name,
                    vars: vec![],
                    consts: vec![],
                    creates: vec![],
                    requires: vec![],
                    adds: vec![],
                    distinct: vec![],
                    symmetry_decls: vec![],
                    symmetries: vec![],
                    consistency,
                },
                raw_requires: vec![],
                raw_adds: vec![],
            });
            continue;
        }
        let d = draft
            .as_mut()
            .ok_or_else(|| syntax(head_col, format!("`{head}` outside of a rule")))?;
        let rest = &words[1..];
        match head.as_str() {
            "var" | "const" | "create" => {
                for (w, c) in rest {
                    if declared(&d.rule, w) {
                        return Err(syntax(*c, format!("`{w}` is declared twice")));
                    }
                    match head.as_str() {
                        "var" => d.rule.vars.push(w.clone()),
                        "const" => d.rule.consts.push(w.clone()),
                        _ => d.rule.creates.push(w.clone()),
                    }
                }
            }
            "distinct" => {
                if rest.len() != 2 {
                    return Err(syntax(head_col, "`distinct` takes two variables".into()));
                }
                let mut ids = [0; 2];
                for (slot, (w, c)) in ids.iter_mut().zip(rest) {
                    *slot = d
                        .rule
                        .var_index(w)
                        .ok_or_else(|| syntax(*c, format!("`{w}` is not a declared variable")))?;
                }
                d.rule.distinct.push((ids[0], ids[1]));
            }
            "require" | "add" => {
                let tuple = parse_tuple(line, rest, line_no)?;
                if tuple.len() != 3 {
                    return Err(syntax(head_col, format!("expected a triple, found {} terms", tuple.len())));
                }
                if head == "require" {
                    d.raw_requires.push((line_no, tuple));
                } else {
                    d.raw_adds.push((line_no, tuple));
                }
            }
            "sym" => {
                let arrow = rest
                    .iter()
                    .position(|(w, _)| w == "<->")
                    .ok_or_else(|| syntax(head_col, "expected `<->`".into()))?;
                let left = parse_tuple(line, &rest[..arrow], line_no)?;
                let right = parse_tuple(line, &rest[arrow + 1..], line_no)?;
                if left.len() != right.len() {
                    return Err(syntax(head_col, "symmetry sides differ in length".into()));
                }
                let lookup = |side: &[(String, usize)]| -> Result<Vec<usize>, RuleError> {
                    side.iter()
                        .map(|(w, c)| {
                            d.rule.var_index(w).ok_or_else(|| RuleError::Syntax {
                                line: line_no,
                                column: *c,
                                message: format!("`{w}` is not a declared variable"),
                            })
                        })
                        .collect()
                };
                let (l, r) = (lookup(&left)?, lookup(&right)?);
                d.rule.symmetry_decls.push((l, r));
            }
            other => return Err(syntax(head_col, format!("unknown directive `{other}`"))),
        }
    }
    if let Some(d) = draft.take() {
        out.push(resolve_draft(d)?);
    }
    Ok(out)
}

fn declared(rule: &Rule, w: &str) -> bool {
    rule.vars.iter().chain(&rule.consts).chain(&rule.creates).any(|x| x == w)
}

fn resolve_draft(d: RuleDraft) -> Result<Rule, RuleError> {
    let mut rule = d.rule;
    let lookup = |rule: &Rule, w: &str, allow_new: bool| -> Option<Term> {
        if let Some(i) = rule.var_index(w) {
            Some(Term::Var(i))
        } else if let Some(i) = rule.consts.iter().position(|c| c == w) {
            Some(Term::Const(i))
        } else if allow_new {
            rule.create_index(w).map(Term::New)
        } else {
            None
        }
    };
    for (is_add, list) in [(false, &d.raw_requires), (true, &d.raw_adds)] {
        for (_, tuple) in list {
            let mut tpl = [Term::Const(0); 3];
            for (slot, (w, _)) in tpl.iter_mut().zip(tuple) {
                *slot = lookup(&rule, w, is_add).ok_or_else(|| RuleError::Undeclared {
                    rule: rule.name.clone(),
                    name: w.clone(),
                })?;
            }
            if is_add {
                rule.adds.push(tpl);
            } else {
                rule.requires.push(tpl);
            }
        }
    }
    rule.finish()
}

fn split_with_columns(line: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((line[s..i].to_string(), s + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((line[s..].to_string(), s + 1));
    }
    out
}

/// Parses `(a b c)` possibly split across words like `(a`, `b`, `c)`.
fn parse_tuple(
    _line: &str,
    words: &[(String, usize)],
    line_no: usize,
) -> Result<Vec<(String, usize)>, RuleError> {
    let syntax = |column: usize, message: &str| RuleError::Syntax {
        line: line_no,
        column,
        message: message.to_string(),
    };
    let Some((first, first_col)) = words.first() else {
        return Err(syntax(1, "expected `(`"));
    };
    if !first.starts_with('(') {
        return Err(syntax(*first_col, "expected `(`"));
    }
    let (last, last_col) = words.last().expect("non-empty");
    if !last.ends_with(')') {
        return Err(syntax(*last_col + last.len(), "expected `)`"));
    }
    let mut out = Vec::new();
    for (i, (w, c)) in words.iter().enumerate() {
        let mut w = w.as_str();
        let mut col = *c;
        if i == 0 {
            w = &w[1..];
            col += 1;
        }
        if i == words.len() - 1 {
            w = &w[..w.len() - 1];
        }
        if w.contains('(') || w.contains(')') {
            return Err(syntax(col, "unbalanced parentheses"));
        }
        if !w.is_empty() {
            out.push((w.to_string(), col));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// matching

#[derive(Clone, Copy)]
enum Slot {
    Var(usize),
    Node(NodeId),
}

struct Matcher<'a> {
    s: &'a TripletStructure,
    rule: &'a Rule,
    patterns: Vec<[Slot; 3]>,
    /// patterns mentioning each variable
    by_var: Vec<Vec<usize>>,
    /// required facts without variables are all present
    ground_ok: bool,
    out: &'a mut BTreeSet<Vec<NodeId>>,
}

impl<'a> Matcher<'a> {
    fn new(s: &'a TripletStructure, rule: &'a Rule, consts: &[NodeId], out: &'a mut BTreeSet<Vec<NodeId>>) -> Self {
        let patterns: Vec<[Slot; 3]> = rule
            .requires
            .iter()
            .map(|tpl| {
                tpl.map(|t| match t {
                    Term::Var(i) => Slot::Var(i),
                    Term::Const(i) => Slot::Node(consts[i]),
                    Term::New(_) => unreachable!(),
                })
            })
            .collect();
        let mut by_var = vec![Vec::new(); rule.vars.len()];
        for (pi, p) in patterns.iter().enumerate() {
            for slot in p {
                if let Slot::Var(v) = slot {
                    if !by_var[*v].contains(&pi) {
                        by_var[*v].push(pi);
                    }
                }
            }
        }
        let ground_ok = patterns.iter().all(|p| match p {
            [Slot::Node(f), Slot::Node(v), Slot::Node(k)] => s.contains(&Triplet::new(*f, *v, *k)),
            _ => true,
        });
        Matcher {
            s,
            rule,
            patterns,
            by_var,
            ground_ok,
            out,
        }
    }

    fn hole_pattern(&self, p: &[Slot; 3], bound: &[Option<NodeId>]) -> HolePattern {
        HolePattern(p.map(|slot| match slot {
            Slot::Node(n) => Some(n),
            Slot::Var(v) => bound[v],
        }))
    }

    fn consistent(&self, p: &[Slot; 3], bound: &[Option<NodeId>], t: &Triplet) -> bool {
        let slots = t.slots();
        // a variable repeated inside one pattern must see equal nodes
        for i in 0..3 {
            for j in (i + 1)..3 {
                if let (Slot::Var(a), Slot::Var(b)) = (p[i], p[j]) {
                    if a == b && slots[i] != slots[j] && bound[a].is_none() {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn candidates(&self, v: usize, bound: &[Option<NodeId>]) -> Vec<NodeId> {
        let pats = &self.by_var[v];
        let mut order: Vec<(usize, usize, HolePattern)> = pats
            .iter()
            .map(|&pi| {
                let hp = self.hole_pattern(&self.patterns[pi], bound);
                (self.s.bucket_len(&hp), pi, hp)
            })
            .collect();
        order.sort_by_key(|(len, pi, _)| (*len, *pi));
        let mut acc: Option<Vec<NodeId>> = None;
        for (_, pi, hp) in order {
            let p = &self.patterns[pi];
            let positions: Vec<usize> = (0..3).filter(|&i| matches!(p[i], Slot::Var(x) if x == v)).collect();
            let mut proj: Vec<NodeId> = self
                .s
                .bucket(&hp)
                .filter(|t| self.consistent(p, bound, t))
                .filter(|t| {
                    let sl = t.slots();
                    positions.iter().all(|&i| sl[i] == sl[positions[0]])
                })
                .map(|t| t.slots()[positions[0]])
                .collect();
            proj.sort();
            proj.dedup();
            acc = Some(match acc {
                None => proj,
                Some(prev) => {
                    let set: HashSet<NodeId> = proj.into_iter().collect();
                    prev.into_iter().filter(|n| set.contains(n)).collect()
                }
            });
            if acc.as_ref().is_some_and(Vec::is_empty) {
                break;
            }
        }
        acc.unwrap_or_default()
    }

    fn estimate(&self, v: usize, bound: &[Option<NodeId>]) -> usize {
        self.by_var[v]
            .iter()
            .map(|&pi| self.s.bucket_len(&self.hole_pattern(&self.patterns[pi], bound)))
            .min()
            .unwrap_or(usize::MAX)
    }

    fn fully_bound_ok(&self, v: usize, bound: &[Option<NodeId>]) -> bool {
        for &pi in &self.by_var[v] {
            let hp = self.hole_pattern(&self.patterns[pi], bound);
            if hp.0.iter().all(Option::is_some) {
                let t = Triplet::new(hp.0[0].unwrap(), hp.0[1].unwrap(), hp.0[2].unwrap());
                if !self.s.contains(&t) {
                    return false;
                }
            }
        }
        for &(a, b) in &self.rule.distinct {
            if let (Some(x), Some(y)) = (bound[a], bound[b]) {
                if x == y {
                    return false;
                }
            }
        }
        true
    }

    fn search(&mut self, bound: &mut Vec<Option<NodeId>>) {
        if !self.ground_ok {
            return;
        }
        let next = (0..bound.len())
            .filter(|&v| bound[v].is_none())
            .min_by_key(|&v| (self.estimate(v, bound), v));
        let Some(v) = next else {
            self.out.insert(bound.iter().map(|n| n.unwrap()).collect());
            return;
        };
        for node in self.candidates(v, bound) {
            bound[v] = Some(node);
            if self.fully_bound_ok(v, bound) {
                self.search(bound);
            }
        }
        bound[v] = None;
    }

    /// Seeds the search by unifying `t` with pattern `pi`.
    fn seed(&mut self, pi: usize, t: &Triplet) {
        let mut bound = vec![None; self.rule.vars.len()];
        let p = self.patterns[pi];
        for (slot, node) in p.iter().zip(t.slots()) {
            match slot {
                Slot::Node(n) if *n != node => return,
                Slot::Node(_) => {}
                Slot::Var(v) => match bound[*v] {
                    Some(prev) if prev != node => return,
                    _ => bound[*v] = Some(node),
                },
            }
        }
        for v in 0..bound.len() {
            if bound[v].is_some() && !self.fully_bound_ok(v, &bound) {
                return;
            }
        }
        self.search(&mut bound);
    }
}

fn sorted_assignments(s: &TripletStructure, found: BTreeSet<Vec<NodeId>>) -> Vec<Assignment> {
    let mut v: Vec<Assignment> = found.into_iter().map(Assignment).collect();
    v.sort_by(|a, b| a.sort_key(s).cmp(&b.sort_key(s)));
    v
}

/// Every binding of the rule's variables whose required facts are all in
/// the structure, sorted by bound node names.
pub fn find_assignments(s: &TripletStructure, rule: &Rule) -> Vec<Assignment> {
    let Some(consts) = rule.resolve_consts(s) else {
        return Vec::new();
    };
    let mut found = BTreeSet::new();
    let mut m = Matcher::new(s, rule, &consts, &mut found);
    let mut bound = vec![None; rule.vars.len()];
    m.search(&mut bound);
    sorted_assignments(s, found)
}

/// Assignments whose required facts include at least one of `facts`.
pub fn find_assignments_touching(s: &TripletStructure, rule: &Rule, facts: &[Triplet]) -> Vec<Assignment> {
    let Some(consts) = rule.resolve_consts(s) else {
        return Vec::new();
    };
    let mut found = BTreeSet::new();
    let mut m = Matcher::new(s, rule, &consts, &mut found);
    for t in facts {
        if !s.contains(t) {
            continue;
        }
        for pi in 0..rule.requires.len() {
            m.seed(pi, t);
        }
    }
    sorted_assignments(s, found)
}

/// Assignments that use at least one fact added since `since`.
pub fn find_assignments_differential(
    s: &TripletStructure,
    rule: &Rule,
    since: Mark,
) -> Result<Vec<Assignment>, RuleError> {
    let delta = s.delta_since(since)?;
    let added: Vec<Triplet> = delta.added.into_iter().collect();
    Ok(find_assignments_touching(s, rule, &added))
}

/// Checks that an assignment is a rule match in the current structure.
pub fn is_match(s: &TripletStructure, rule: &Rule, a: &Assignment) -> bool {
    let Some(consts) = rule.resolve_consts(s) else {
        return false;
    };
    a.0.len() == rule.vars.len()
        && rule.distinct.iter().all(|&(x, y)| a.get(x) != a.get(y))
        && rule
            .requires
            .iter()
            .all(|tpl| s.contains(&rule.instantiate(tpl, &consts, a)))
}

/// The facts an assignment uses.
pub fn used_facts(s: &TripletStructure, rule: &Rule, a: &Assignment) -> Vec<Triplet> {
    let consts = rule.resolve_consts(s).unwrap_or_default();
    if consts.len() != rule.consts.len() {
        return Vec::new();
    }
    rule.requires.iter().map(|tpl| rule.instantiate(tpl, &consts, a)).collect()
}

/// Stable, seedless name for a node created by `rule` under `assignment`.
pub fn generated_name(rule: &str, assignment: &BTreeMap<String, String>, label: &str) -> (String, String) {
    let mut provenance = String::from(rule);
    for (v, n) in assignment {
        provenance.push('\u{1f}');
        provenance.push_str(v);
        provenance.push('=');
        provenance.push_str(n);
    }
    provenance.push('\u{1f}');
    provenance.push_str(label);
    let digest = Sha256::digest(provenance.as_bytes());
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    (format!("gen:{hex}"), provenance)
}

/// Applies a rule match: interns the created nodes under their commutative
/// names and inserts the substituted add-set.
pub fn apply_rule(s: &mut TripletStructure, rule: &Rule, a: &Assignment) -> Result<Delta, RuleError> {
    if rule.consistency {
        return Err(RuleError::ConsistencyRuleApplied(rule.name.clone()));
    }
    if !is_match(s, rule, a) {
        return Err(RuleError::NotAMatch(rule.name.clone()));
    }
    let canon = rule.canonicalize(a, s);
    let named = canon.named(rule, s);
    let consts: Vec<NodeId> = rule.consts.iter().map(|c| s.intern(c)).collect();
    let mut created = Vec::with_capacity(rule.creates.len());
    let mut created_nodes = Vec::new();
    for label in &rule.creates {
        let (name, provenance) = generated_name(&rule.name, &named, label);
        let fresh = s.get(&name).is_none();
        let id = s.intern_generated(&name, &provenance)?;
        if fresh {
            created_nodes.push(id);
        }
        created.push(id);
    }
    let mut added_facts = Vec::new();
    for tpl in &rule.adds {
        let node = |t: Term| match t {
            Term::Var(i) => canon.get(i),
            Term::Const(i) => consts[i],
            Term::New(i) => created[i],
        };
        let (f, v, k) = (node(tpl[0]), node(tpl[1]), node(tpl[2]));
        if s.add_fact(f, v, k) {
            added_facts.push(Triplet::new(f, v, k));
        }
    }
    Ok(Delta {
        created_nodes,
        added_facts,
        rule: rule.name.clone(),
        assignment: named,
    })
}

/// Whether applying the rule under `a` would add any node or fact.
pub fn would_change(s: &TripletStructure, rule: &Rule, a: &Assignment) -> bool {
    let canon = rule.canonicalize(a, s);
    let named = canon.named(rule, s);
    let mut created = Vec::with_capacity(rule.creates.len());
    for label in &rule.creates {
        match s.get(&generated_name(&rule.name, &named, label).0) {
            Some(id) => created.push(id),
            None => return true,
        }
    }
    let mut consts = Vec::with_capacity(rule.consts.len());
    for c in &rule.consts {
        match s.get(c) {
            Some(id) => consts.push(id),
            None => return true,
        }
    }
    rule.adds.iter().any(|tpl| {
        let node = |t: Term| match t {
            Term::Var(i) => canon.get(i),
            Term::Const(i) => consts[i],
            Term::New(i) => created[i],
        };
        !s.contains(&Triplet::new(node(tpl[0]), node(tpl[1]), node(tpl[2])))
    })
}

/// All current matches of the given consistency rules.
pub fn check_consistency<'r>(s: &TripletStructure, rules: &'r [Rule]) -> Vec<(&'r Rule, Assignment)> {
    rules
        .iter()
        .flat_map(|r| find_assignments(s, r).into_iter().map(move |a| (r, a)))
        .collect()
}

/// Consistency matches that use a fact added since `since`. If the
/// structure was consistent at the mark, this equals the full check.
pub fn violations_since<'r>(
    s: &TripletStructure,
    rules: &'r [Rule],
    since: Mark,
) -> Result<Vec<(&'r Rule, Assignment)>, RuleError> {
    let delta = s.delta_since(since)?;
    let added: Vec<Triplet> = delta.added.into_iter().collect();
    Ok(rules
        .iter()
        .flat_map(|r| find_assignments_touching(s, r, &added).into_iter().map(move |a| (r, a)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const R1: &str = "\
rule successor-a-b
var v1 v2 vf1 vf2
const Letter:a Letter:b Predecessor Successor
require (vf1 v1 Letter:a)
require (vf2 v2 Letter:b)
create nf3
add (nf3 v1 Predecessor)
add (nf3 v2 Successor)
";

    #[test]
    fn parses_r1() {
        let rules = parse_rules(R1).unwrap();
        assert_eq!(rules.len(), 1);
        let r = &rules[0];
        assert_eq!(r.vars, ["v1", "v2", "vf1", "vf2"]);
        assert_eq!(r.consts, ["Letter:a", "Letter:b", "Predecessor", "Successor"]);
        assert_eq!(r.creates, ["nf3"]);
        assert_eq!(
            r.requires,
            vec![
                [Term::Var(2), Term::Var(0), Term::Const(0)],
                [Term::Var(3), Term::Var(1), Term::Const(1)],
            ]
        );
        assert_eq!(
            r.adds,
            vec![
                [Term::New(0), Term::Var(0), Term::Const(2)],
                [Term::New(0), Term::Var(1), Term::Const(3)],
            ]
        );
        assert!(!r.consistency);
        assert_eq!(parse_rules(&r.to_string()).unwrap()[0], *r);
    }

    #[test]
    fn empty_and_invalid_files() {
        assert!(parse_rules("").unwrap().is_empty());
        assert!(parse_rules("# nothing\n\n").unwrap().is_empty());
        let err = parse_rules("rule r\nvar v\nrequire (v w k)\n").unwrap_err();
        assert!(matches!(err, RuleError::Undeclared { ref name, .. } if name == "w"));
        let err = parse_rules("rule r\nvar v\nrequire (v v\n").unwrap_err();
        assert!(matches!(err, RuleError::Syntax { line: 3, .. }));
        let err = parse_rules("var v\n").unwrap_err();
        assert!(matches!(err, RuleError::Syntax { line: 1, column: 1, .. }));
        let err = parse_rules("rule r consistency\nvar v\nconst k\nrequire (v v k)\ncreate n\nadd (n v k)\n").unwrap_err();
        assert!(matches!(err, RuleError::Invalid { .. }));
    }

    #[test]
    fn multiple_rules_split_on_blank_lines() {
        let text = format!("{R1}\n{}", R1.replace("successor-a-b", "other"));
        let rules = parse_rules(&text).unwrap();
        assert_eq!(rules.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["successor-a-b", "other"]);
    }

    fn two_strings() -> TripletStructure {
        let mut s = TripletStructure::new();
        for (p, x, l) in [("p1", "x1", "a"), ("p2", "x2", "b"), ("p3", "y1", "e"), ("p4", "y2", "f")] {
            s.add_named(p, x, &format!("Letter:{l}"));
        }
        s.add_named("n1", "x1", "NextToLeft");
        s.add_named("n1", "x2", "NextToRight");
        s.add_named("n2", "y1", "NextToLeft");
        s.add_named("n2", "y2", "NextToRight");
        s.intern("Predecessor");
        s.intern("Successor");
        s
    }

    #[test]
    fn r1_matches_t5_once_and_applies() {
        let mut s = two_strings();
        let r = &parse_rules(R1).unwrap()[0];
        let found = find_assignments(&s, r);
        assert_eq!(found.len(), 1);
        let named = found[0].named(r, &s);
        assert_eq!(named["v1"], "x1");
        assert_eq!(named["v2"], "x2");
        assert_eq!(named["vf1"], "p1");
        assert_eq!(named["vf2"], "p2");
        let before = s.fact_count();
        let m = s.mark();
        let d = apply_rule(&mut s, r, &found[0]).unwrap();
        assert_eq!(d.created_nodes.len(), 1);
        assert_eq!(s.fact_count(), before + 2);
        let s1 = d.created_nodes[0];
        let pred = s.get("Predecessor").unwrap();
        assert!(s.contains(&Triplet::new(s1, s.get("x1").unwrap(), pred)));
        let name = s.name(s1).to_string();
        // second application is a no-op with the same name
        let again = apply_rule(&mut s, r, &found[0]).unwrap();
        assert!(again.created_nodes.is_empty() && again.added_facts.is_empty());
        s.rollback(m).unwrap();
        assert_eq!(s, two_strings());
        let d2 = apply_rule(&mut s, r, &found[0]).unwrap();
        assert_eq!(s.name(d2.created_nodes[0]), name);
    }

    #[test]
    fn missing_constant_means_no_matches() {
        let s = TripletStructure::new();
        let r = &parse_rules(R1).unwrap()[0];
        assert!(find_assignments(&s, r).is_empty());
    }

    #[test]
    fn consistency_rules() {
        let text = "\
rule letter-a-or-b consistency
var x p q
const Letter:a Letter:b
require (p x Letter:a)
require (q x Letter:b)
";
        let rules = parse_rules(text).unwrap();
        let mut s = two_strings();
        assert!(check_consistency(&s, &rules).is_empty());
        assert!(apply_rule(&mut s, &rules[0], &Assignment(vec![])).is_err());
        let m = s.mark();
        s.add_named("bad", "x1", "Letter:b");
        assert_eq!(check_consistency(&s, &rules).len(), 1);
        assert_eq!(violations_since(&s, &rules, m).unwrap().len(), 1);
        s.rollback(m).unwrap();
        assert!(check_consistency(&s, &rules).is_empty());
    }

    #[test]
    fn symmetric_orbits_share_names() {
        let text = "\
rule same-a
var v1 v2 vf1 vf2
const Letter:a Same
distinct v1 v2
sym (v1 vf1) <-> (v2 vf2)
require (vf1 v1 Letter:a)
require (vf2 v2 Letter:a)
create nf
add (nf v1 Same)
add (nf v2 Same)
";
        let r = &parse_rules(text).unwrap()[0];
        assert_eq!(r.symmetries.len(), 2);
        let mut s = TripletStructure::new();
        s.add_named("p1", "x1", "Letter:a");
        s.add_named("p2", "x2", "Letter:a");
        let found = find_assignments(&s, r);
        assert_eq!(found.len(), 2);
        assert_eq!(r.canonicalize(&found[0], &s), r.canonicalize(&found[1], &s));
        let d1 = apply_rule(&mut s, r, &found[0]).unwrap();
        let d2 = apply_rule(&mut s, r, &found[1]).unwrap();
        assert_eq!(d1.created_nodes.len(), 1);
        assert!(d2.created_nodes.is_empty() && d2.added_facts.is_empty());
    }

    #[test]
    fn no_symmetry_is_identity() {
        let s = two_strings();
        let r = &parse_rules(R1).unwrap()[0];
        let a = find_assignments(&s, r).remove(0);
        assert_eq!(r.canonicalize(&a, &s), a);
    }

    #[test]
    fn bogus_symmetry_is_rejected() {
        let text = R1.replace("require (vf1", "sym (v1) <-> (vf2)\nrequire (vf1");
        assert!(matches!(parse_rules(&text), Err(RuleError::Invalid { .. })));
    }
}
