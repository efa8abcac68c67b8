//! Triplet structures: a node set plus a set of `(fact, value, key)` triples,
//! indexed under all eight hole patterns, with an undo log for exact rollback.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::error::StructureError;

/// An interned node. Ids are dense and allocated in interning order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub(crate) const PLACEHOLDER: NodeId = NodeId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One triplet fact `(fact, value, key)`: in the interpretation `fact`, the
/// node `value` fills the slot `key`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub fact: NodeId,
    pub value: NodeId,
    pub key: NodeId,
}

impl Triplet {
    pub fn new(fact: NodeId, value: NodeId, key: NodeId) -> Self {
        Triplet { fact, value, key }
    }

    pub fn slots(&self) -> [NodeId; 3] {
        [self.fact, self.value, self.key]
    }

    /// The eight hole patterns this triplet is filed under.
    pub fn hole_patterns(&self) -> [HolePattern; 8] {
        let slots = self.slots();
        let mut out = [HolePattern::ANY; 8];
        for (mask, pattern) in out.iter_mut().enumerate() {
            for (i, slot) in slots.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    pattern.0[i] = Some(*slot);
                }
            }
        }
        out
    }
}

/// A triple where each slot is either a concrete node or a hole (`None`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HolePattern(pub [Option<NodeId>; 3]);

impl HolePattern {
    pub const ANY: HolePattern = HolePattern([None, None, None]);

    pub fn new(fact: Option<NodeId>, value: Option<NodeId>, key: Option<NodeId>) -> Self {
        HolePattern([fact, value, key])
    }

    pub fn matches(&self, t: &Triplet) -> bool {
        self.0
            .iter()
            .zip(t.slots())
            .all(|(p, s)| p.is_none_or(|p| p == s))
    }
}

/// A rollback point. Marks are single-use: rolling back pops the mark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mark {
    id: u64,
    log_pos: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum LogEntry {
    Intern(NodeId),
    Add(Triplet),
    Remove(Triplet),
}

/// Net change between a mark and the present state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactDelta {
    pub added: BTreeSet<Triplet>,
    pub removed: BTreeSet<Triplet>,
}

#[derive(Clone, Debug, Default)]
pub struct TripletStructure {
    names: Vec<String>,
    lookup: HashMap<String, NodeId>,
    provenance: HashMap<NodeId, String>,
    facts: HashSet<Triplet>,
    index: HashMap<HolePattern, HashSet<Triplet>>,
    log: Vec<LogEntry>,
    marks: Vec<Mark>,
    next_mark: u64,
}

impl PartialEq for TripletStructure {
    /// Equality on `(S, F)`; the log, marks and index are derived state.
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.facts == other.facts
    }
}

impl Eq for TripletStructure {}

impl TripletStructure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Triplet> + '_ {
        self.facts.iter()
    }

    /// All facts in id order.
    pub fn sorted_facts(&self) -> Vec<Triplet> {
        let mut v: Vec<_> = self.facts.iter().copied().collect();
        v.sort();
        v
    }

    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        self.log.push(LogEntry::Intern(id));
        id
    }

    /// Interns a rule-generated node. Re-interning with the same provenance
    /// returns the existing node; a different provenance is a hash collision.
    pub fn intern_generated(
        &mut self,
        name: &str,
        provenance: &str,
    ) -> Result<NodeId, StructureError> {
        if let Some(&id) = self.lookup.get(name) {
            return match self.provenance.get(&id) {
                Some(p) if p == provenance => Ok(id),
                _ => Err(StructureError::HashCollision {
                    name: name.to_string(),
                }),
            };
        }
        let id = self.intern(name);
        self.provenance.insert(id, provenance.to_string());
        Ok(id)
    }

    pub fn provenance(&self, id: NodeId) -> Option<&str> {
        self.provenance.get(&id).map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<NodeId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        id.index() < self.names.len()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.facts.contains(t)
    }

    /// Inserts a fact. Returns `false` if it was already present.
    pub fn add_fact(&mut self, fact: NodeId, value: NodeId, key: NodeId) -> bool {
        let t = Triplet::new(fact, value, key);
        debug_assert!(t.slots().iter().all(|n| self.contains_node(*n)));
        if !self.facts.insert(t) {
            return false;
        }
        for p in t.hole_patterns() {
            self.index.entry(p).or_default().insert(t);
        }
        self.log.push(LogEntry::Add(t));
        true
    }

    /// Convenience for tests and encoders: interns all three names first.
    pub fn add_named(&mut self, fact: &str, value: &str, key: &str) -> Triplet {
        let (f, v, k) = (self.intern(fact), self.intern(value), self.intern(key));
        self.add_fact(f, v, k);
        Triplet::new(f, v, k)
    }

    pub fn remove_fact(&mut self, t: &Triplet) -> Result<(), StructureError> {
        if !self.facts.remove(t) {
            return Err(StructureError::FactNotPresent(self.describe(t)));
        }
        self.unindex(t);
        self.log.push(LogEntry::Remove(*t));
        Ok(())
    }

    fn unindex(&mut self, t: &Triplet) {
        for p in t.hole_patterns() {
            if let Some(bucket) = self.index.get_mut(&p) {
                bucket.remove(t);
                if bucket.is_empty() {
                    self.index.remove(&p);
                }
            }
        }
    }

    /// The raw bucket for a pattern, in no particular order.
    pub fn bucket(&self, pattern: &HolePattern) -> impl Iterator<Item = &Triplet> + '_ {
        self.index.get(pattern).into_iter().flatten()
    }

    pub fn bucket_len(&self, pattern: &HolePattern) -> usize {
        self.index.get(pattern).map_or(0, HashSet::len)
    }

    /// All facts matching the pattern, sorted.
    pub fn query(&self, pattern: &HolePattern) -> Vec<Triplet> {
        let mut v: Vec<_> = self.bucket(pattern).copied().collect();
        v.sort();
        v
    }

    /// Solves single-variable existential constraints by intersecting the
    /// projections of each pattern's bucket onto the variable's slot.
    ///
    /// `constraints[i]` must have a hole at `slots[i]`. An empty constraint
    /// list is satisfied by every node.
    pub fn solve_single_var(&self, constraints: &[HolePattern], slots: &[usize]) -> BTreeSet<NodeId> {
        assert_eq!(constraints.len(), slots.len());
        let mut acc: Option<BTreeSet<NodeId>> = None;
        let mut order: Vec<usize> = (0..constraints.len()).collect();
        order.sort_by_key(|&i| self.bucket_len(&constraints[i]));
        for i in order {
            debug_assert!(constraints[i].0[slots[i]].is_none());
            let proj = self.bucket(&constraints[i]).map(|t| t.slots()[slots[i]]);
            acc = Some(match acc {
                None => proj.collect(),
                Some(prev) => {
                    let cur: HashSet<NodeId> = proj.collect();
                    prev.into_iter().filter(|n| cur.contains(n)).collect()
                }
            });
            if acc.as_ref().is_some_and(BTreeSet::is_empty) {
                break;
            }
        }
        acc.unwrap_or_else(|| self.nodes().collect())
    }

    pub fn mark(&mut self) -> Mark {
        let m = Mark {
            id: self.next_mark,
            log_pos: self.log.len(),
        };
        self.next_mark += 1;
        self.marks.push(m);
        m
    }

    pub fn is_live(&self, m: Mark) -> bool {
        self.marks.contains(&m)
    }

    /// Undoes every change since `m` and pops `m` and any later marks.
    pub fn rollback(&mut self, m: Mark) -> Result<(), StructureError> {
        let pos = self
            .marks
            .iter()
            .position(|x| *x == m)
            .ok_or(StructureError::StaleMark)?;
        self.marks.truncate(pos);
        while self.log.len() > m.log_pos {
            match self.log.pop().expect("log shorter than mark") {
                LogEntry::Intern(id) => {
                    debug_assert_eq!(id.index() + 1, self.names.len());
                    let name = self.names.pop().expect("interned node");
                    self.lookup.remove(&name);
                    self.provenance.remove(&id);
                }
                LogEntry::Add(t) => {
                    self.facts.remove(&t);
                    self.unindex(&t);
                }
                LogEntry::Remove(t) => {
                    self.facts.insert(t);
                    for p in t.hole_patterns() {
                        self.index.entry(p).or_default().insert(t);
                    }
                }
            }
        }
        Ok(())
    }

    /// Drops a mark without undoing anything.
    pub fn release(&mut self, m: Mark) -> Result<(), StructureError> {
        let pos = self
            .marks
            .iter()
            .position(|x| *x == m)
            .ok_or(StructureError::StaleMark)?;
        self.marks.remove(pos);
        Ok(())
    }

    pub fn delta_since(&self, m: Mark) -> Result<FactDelta, StructureError> {
        if !self.is_live(m) {
            return Err(StructureError::StaleMark);
        }
        // first operation on each fact since the mark tells us whether it
        // was present at mark time
        let mut first: BTreeMap<Triplet, bool> = BTreeMap::new();
        for entry in &self.log[m.log_pos..] {
            match entry {
                LogEntry::Add(t) => {
                    first.entry(*t).or_insert(true);
                }
                LogEntry::Remove(t) => {
                    first.entry(*t).or_insert(false);
                }
                LogEntry::Intern(_) => {}
            }
        }
        let mut delta = FactDelta::default();
        for (t, first_was_add) in first {
            let now = self.facts.contains(&t);
            if first_was_add && now {
                delta.added.insert(t);
            } else if !first_was_add && !now {
                delta.removed.insert(t);
            }
        }
        Ok(delta)
    }

    /// Nodes interned since `m`.
    pub fn nodes_since(&self, m: Mark) -> Vec<NodeId> {
        self.log[m.log_pos.min(self.log.len())..]
            .iter()
            .filter_map(|e| match e {
                LogEntry::Intern(id) => Some(*id),
                _ => None,
            })
            .collect()
    }

    pub fn describe(&self, t: &Triplet) -> String {
        let n = |id: NodeId| match self.names.get(id.index()) {
            Some(name) => name.clone(),
            None => format!("#{}", id.index()),
        };
        format!("({}, {}, {})", n(t.fact), n(t.value), n(t.key))
    }

    /// Name-level view of `(S, F)`, independent of interning order.
    pub fn named_snapshot(&self) -> (BTreeSet<String>, BTreeSet<[String; 3]>) {
        let nodes = self.names.iter().cloned().collect();
        let facts = self
            .facts
            .iter()
            .map(|t| t.slots().map(|n| self.name(n).to_string()))
            .collect();
        (nodes, facts)
    }

    /// Rebuilds the hole-pattern index from `F` alone.
    pub fn rebuild_index(&self) -> HashMap<HolePattern, HashSet<Triplet>> {
        let mut index: HashMap<HolePattern, HashSet<Triplet>> = HashMap::new();
        for t in &self.facts {
            for p in t.hole_patterns() {
                index.entry(p).or_default().insert(*t);
            }
        }
        index
    }

    pub fn index_snapshot(&self) -> &HashMap<HolePattern, HashSet<Triplet>> {
        &self.index
    }

    /// Serializes `(S, F)` to the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# triplet-structure v1\n");
        for name in &self.names {
            out.push_str("node ");
            out.push_str(&escape_name(name));
            out.push('\n');
        }
        for t in self.sorted_facts() {
            let [f, v, k] = t.slots().map(|n| escape_name(self.name(n)));
            out.push_str(&format!("fact {f} {v} {k}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, StructureError> {
        let mut s = TripletStructure::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| StructureError::Parse {
                line: line_no,
                message,
            };
            let mut words = line.split_whitespace();
            match words.next() {
                Some("node") => {
                    let name = words.next().ok_or_else(|| err("missing node name".into()))?;
                    if words.next().is_some() {
                        return Err(err("trailing input after node name".into()));
                    }
                    s.intern(&unescape_name(name).map_err(err)?);
                }
                Some("fact") => {
                    let parts: Vec<&str> = words.collect();
                    if parts.len() != 3 {
                        return Err(err(format!("expected 3 node names, found {}", parts.len())));
                    }
                    let mut ids = [NodeId(0); 3];
                    for (slot, part) in ids.iter_mut().zip(&parts) {
                        let name = unescape_name(part).map_err(err)?;
                        *slot = s
                            .get(&name)
                            .ok_or_else(|| err(format!("undeclared node `{name}`")))?;
                    }
                    s.add_fact(ids[0], ids[1], ids[2]);
                }
                Some(other) => return Err(err(format!("unknown directive `{other}`"))),
                None => {}
            }
        }
        s.log.clear();
        Ok(s)
    }
}

impl fmt::Display for TripletStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn escape_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for (i, c) in name.chars().enumerate() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            '#' if i == 0 => out.push_str("%23"),
            c => out.push(c),
        }
    }
    if out.is_empty() {
        out.push_str("%00");
    }
    out
}

fn unescape_name(s: &str) -> Result<String, String> {
    if s == "%00" {
        return Ok(String::new());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let hex: String = chars.by_ref().take(2).collect();
        let byte = u8::from_str_radix(&hex, 16).map_err(|_| format!("bad escape `%{hex}`"))?;
        out.push(byte as char);
    }
    Ok(out)
}
