//! A triplet structure plus the bookkeeping the encoders and the search need:
//! which nodes belong to which input, which nodes stand for tokens, and
//! which nodes are platonic types.

use std::collections::{BTreeMap, HashMap};

use crate::structure::{NodeId, TripletStructure};

/// Reserved key marking mapping facts of an abstraction.
pub const ABSTRACTION: &str = "Abstraction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstanceKind {
    /// A before/after example pair.
    Example,
    /// A before-only prompt whose after side is to be completed.
    Prompt,
    /// A single string or file set, compared without a transformation.
    Plain,
    /// Context visible to every other instance, like a documentation pair.
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Before,
    After,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub tag: String,
    pub kind: InstanceKind,
    pub before: Vec<NodeId>,
    pub after: Vec<NodeId>,
    /// Pair-link fact node tying the two sides together.
    pub link: Option<NodeId>,
    /// File nodes, for source encodings.
    pub files: Vec<NodeId>,
}

impl Instance {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.before.iter().chain(&self.after).copied()
    }

    pub fn side_of(&self, n: NodeId) -> Option<Side> {
        if self.before.contains(&n) {
            Some(Side::Before)
        } else if self.after.contains(&n) {
            Some(Side::After)
        } else {
            None
        }
    }
}

/// Byte span of a token inside its source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct Workspace {
    pub structure: TripletStructure,
    instances: Vec<Instance>,
    membership: HashMap<NodeId, usize>,
    tokens: HashMap<NodeId, String>,
    platonic: HashMap<NodeId, String>,
    spans: HashMap<NodeId, Span>,
    sources: BTreeMap<String, String>,
}

impl Default for Workspace {
    fn default() -> Self {
        Self::new()
    }
}

impl Workspace {
    pub fn new() -> Self {
        let mut structure = TripletStructure::new();
        structure.intern(ABSTRACTION);
        Workspace {
            structure,
            instances: Vec::new(),
            membership: HashMap::new(),
            tokens: HashMap::new(),
            platonic: HashMap::new(),
            spans: HashMap::new(),
            sources: BTreeMap::new(),
        }
    }

    /// Wraps an existing structure, such as one loaded from text. The
    /// registry starts empty.
    pub fn from_structure(structure: TripletStructure) -> Self {
        let mut ws = Workspace::new();
        ws.structure = structure;
        ws.structure.intern(ABSTRACTION);
        ws
    }

    pub fn abstraction_key(&self) -> NodeId {
        self.structure.get(ABSTRACTION).expect("interned at construction")
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, tag: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.tag == tag)
    }

    pub fn instance_index(&self, tag: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.tag == tag)
    }

    pub fn instances_of(&self, kind: InstanceKind) -> impl Iterator<Item = &Instance> + '_ {
        self.instances.iter().filter(move |i| i.kind == kind)
    }

    /// Registers an instance; returns its index. Tags must be unique.
    pub fn register(&mut self, instance: Instance) -> Option<usize> {
        if self.instance(&instance.tag).is_some() {
            return None;
        }
        let idx = self.instances.len();
        for n in instance.nodes().chain(instance.files.iter().copied()) {
            self.membership.insert(n, idx);
        }
        self.instances.push(instance);
        Some(idx)
    }

    /// Appends an after-side node to a registered instance.
    pub fn push_after(&mut self, idx: usize, n: NodeId) {
        self.membership.insert(n, idx);
        self.instances[idx].after.push(n);
    }

    pub fn instance_of(&self, n: NodeId) -> Option<usize> {
        self.membership.get(&n).copied()
    }

    pub fn is_shared(&self, n: NodeId) -> bool {
        self.instance_of(n)
            .is_some_and(|i| self.instances[i].kind == InstanceKind::Shared)
    }

    pub fn set_token(&mut self, n: NodeId, text: &str) {
        self.tokens.insert(n, text.to_string());
    }

    pub fn token(&self, n: NodeId) -> Option<&str> {
        self.tokens.get(&n).map(String::as_str)
    }

    pub fn set_platonic(&mut self, n: NodeId, text: &str) {
        self.platonic.insert(n, text.to_string());
    }

    /// The token a platonic node stands for, if `n` is one.
    pub fn platonic_token(&self, n: NodeId) -> Option<&str> {
        self.platonic.get(&n).map(String::as_str)
    }

    pub fn set_span(&mut self, n: NodeId, span: Span) {
        self.spans.insert(n, span);
    }

    pub fn span(&self, n: NodeId) -> Option<Span> {
        self.spans.get(&n).copied()
    }

    pub fn set_source(&mut self, file: &str, text: &str) {
        self.sources.insert(file.to_string(), text.to_string());
    }

    pub fn source(&self, file: &str) -> Option<&str> {
        self.sources.get(file).map(String::as_str)
    }

    /// Token texts of a node sequence; unknown nodes render as their names.
    pub fn texts(&self, nodes: &[NodeId]) -> Vec<String> {
        nodes
            .iter()
            .map(|n| match self.token(*n) {
                Some(t) => t.to_string(),
                None => self.structure.name(*n).to_string(),
            })
            .collect()
    }
}
