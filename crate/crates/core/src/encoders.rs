//! Turning inputs into workspace facts.
//!
//! Every encoder writes plain triplets; the naming conventions below are what
//! the search and the completion step rely on:
//!
//! * token `i` of a sequence `p` is the node `p:i`,
//! * its platonic fact is `p:p<i>`, keyed by `Letter:c` or `Is"tok"`,
//! * the adjacency fact between tokens `i` and `i+1` is `p:n<i>`, with slots
//!   `NextToLeft` and `NextToRight`,
//! * a before/after pair `t` gets the link fact `t:link`, which holds every
//!   before token under `PairBefore` and every after token under `PairAfter`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::EncodeError;
use crate::rules::{parse_rules, Rule};
use crate::structure::{HolePattern, NodeId, TripletStructure};
use crate::workspace::{Instance, InstanceKind, Span, Workspace};

pub const NEXT_TO_LEFT: &str = "NextToLeft";
pub const NEXT_TO_RIGHT: &str = "NextToRight";
pub const PREDECESSOR: &str = "Predecessor";
pub const SUCCESSOR: &str = "Successor";
pub const SAME: &str = "Same";
pub const PAIR_BEFORE: &str = "PairBefore";
pub const PAIR_AFTER: &str = "PairAfter";
pub const FILE: &str = "File";
pub const FILE_MEMBER: &str = "FileMember";

/// Characters the lexer always splits off as single-character tokens.
pub const PUNCTUATION: &[char] = &['=', '.', ',', '(', ')', '{', '}', '[', ']', ';', '*', '+', '-', '/', '<', '>'];

/// An ordered alphabet with no wraparound: the last symbol has no successor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet {
            symbols: ('a'..='z').collect(),
        }
    }
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self, EncodeError> {
        let v: Vec<char> = symbols.chars().collect();
        let distinct: BTreeSet<char> = v.iter().copied().collect();
        if distinct.len() != v.len() || v.len() < 2 {
            return Err(EncodeError::ShortAlphabet);
        }
        Ok(Alphabet { symbols: v })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn contains(&self, c: char) -> bool {
        self.symbols.contains(&c)
    }

    pub fn successor(&self, c: char) -> Option<char> {
        let i = self.symbols.iter().position(|&x| x == c)?;
        self.symbols.get(i + 1).copied()
    }

    pub fn predecessor(&self, c: char) -> Option<char> {
        let i = self.symbols.iter().position(|&x| x == c)?;
        i.checked_sub(1).map(|j| self.symbols[j])
    }

    pub fn check(&self, s: &str) -> Result<(), EncodeError> {
        match s.chars().find(|c| !self.contains(*c)) {
            Some(c) => Err(EncodeError::OutsideAlphabet(c)),
            None => Ok(()),
        }
    }
}

/// How token texts map to platonic node names.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenStyle {
    Letters,
    Code,
}

impl TokenStyle {
    pub fn platonic_name(self, token: &str) -> String {
        match self {
            TokenStyle::Letters => format!("Letter:{token}"),
            TokenStyle::Code => format!("Is\"{token}\""),
        }
    }
}

// ---------------------------------------------------------------------------
// generic relational facts

/// Encodes n-ary facts with slot nodes `R.1` .. `R.n` and one fresh fact node
/// (`f<k>`, smallest unused `k`) per input fact. Returns the fact nodes.
pub fn encode_relational(
    s: &mut TripletStructure,
    relations: &BTreeMap<String, usize>,
    facts: &[(String, Vec<String>)],
) -> Result<Vec<NodeId>, EncodeError> {
    for (rel, args) in facts {
        let arity = *relations
            .get(rel)
            .ok_or_else(|| EncodeError::UndeclaredRelation(rel.clone()))?;
        if arity != args.len() {
            return Err(EncodeError::Arity {
                relation: rel.clone(),
                expected: arity,
                got: args.len(),
            });
        }
    }
    let mut out = Vec::new();
    let mut k = 1;
    for (rel, args) in facts {
        while s.get(&format!("f{k}")).is_some() {
            k += 1;
        }
        let f = s.intern(&format!("f{k}"));
        for (i, a) in args.iter().enumerate() {
            let v = s.intern(a);
            let slot = s.intern(&format!("{rel}.{}", i + 1));
            s.add_fact(f, v, slot);
        }
        out.push(f);
    }
    Ok(out)
}

/// Adds `(fact, value, slot)` triples by name; the way to build grouped and
/// partial facts, and to extend a partial fact later.
pub fn add_slot_values(s: &mut TripletStructure, fact: &str, values: &[(&str, &str)]) -> NodeId {
    let f = s.intern(fact);
    for (v, slot) in values {
        let (v, slot) = (s.intern(v), s.intern(slot));
        s.add_fact(f, v, slot);
    }
    f
}

// ---------------------------------------------------------------------------
// token sequences

fn encode_sequence(
    ws: &mut Workspace,
    tokens: &[&str],
    prefix: &str,
    style: TokenStyle,
    breaks: &BTreeSet<usize>,
) -> Vec<NodeId> {
    let s = &mut ws.structure;
    let left = s.intern(NEXT_TO_LEFT);
    let right = s.intern(NEXT_TO_RIGHT);
    let mut nodes = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let x = ws.structure.intern(&format!("{prefix}:{i}"));
        let p = ws.structure.intern(&format!("{prefix}:p{i}"));
        let pname = style.platonic_name(tok);
        let kind = ws.structure.intern(&pname);
        ws.structure.add_fact(p, x, kind);
        ws.set_token(x, tok);
        ws.set_platonic(kind, tok);
        nodes.push(x);
    }
    for i in 1..nodes.len() {
        if breaks.contains(&(i - 1)) {
            continue;
        }
        let n = ws.structure.intern(&format!("{prefix}:n{}", i - 1));
        ws.structure.add_fact(n, nodes[i - 1], left);
        ws.structure.add_fact(n, nodes[i], right);
    }
    nodes
}

fn letter_tokens(s: &str) -> Vec<String> {
    s.chars().map(String::from).collect()
}

fn intern_successor_slots(ws: &mut Workspace) {
    ws.structure.intern(PREDECESSOR);
    ws.structure.intern(SUCCESSOR);
}

/// Encodes a letter string as a plain instance tagged `tag`.
pub fn encode_letter_string(
    ws: &mut Workspace,
    s: &str,
    tag: &str,
    alphabet: &Alphabet,
) -> Result<Vec<NodeId>, EncodeError> {
    alphabet.check(s)?;
    let toks = letter_tokens(s);
    let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
    if ws.instance(tag).is_some() {
        return Err(EncodeError::Malformed(format!("instance `{tag}` already exists")));
    }
    intern_successor_slots(ws);
    let nodes = encode_sequence(ws, &refs, tag, TokenStyle::Letters, &BTreeSet::new());
    ws.register(Instance {
        tag: tag.to_string(),
        kind: InstanceKind::Plain,
        before: nodes.clone(),
        after: vec![],
        link: None,
        files: vec![],
    });
    Ok(nodes)
}

/// Reads a letter string back from its instance nodes via platonic facts.
pub fn decode_letters(ws: &Workspace, nodes: &[NodeId]) -> Option<String> {
    nodes
        .iter()
        .map(|&n| {
            ws.structure
                .query(&HolePattern::new(None, Some(n), None))
                .into_iter()
                .find_map(|t| ws.platonic_token(t.key))
                .and_then(|t| t.chars().next())
        })
        .collect()
}

fn add_link(ws: &mut Workspace, tag: &str, before: &[NodeId], after: &[NodeId]) -> NodeId {
    let link = ws.structure.intern(&format!("{tag}:link"));
    let pb = ws.structure.intern(PAIR_BEFORE);
    let pa = ws.structure.intern(PAIR_AFTER);
    for &b in before {
        ws.structure.add_fact(link, b, pb);
    }
    for &a in after {
        ws.structure.add_fact(link, a, pa);
    }
    link
}

fn ensure_fresh(ws: &Workspace, tag: &str) -> Result<(), EncodeError> {
    if ws.instance(tag).is_some() {
        Err(EncodeError::Malformed(format!("instance `{tag}` already exists")))
    } else {
        Ok(())
    }
}

/// Encodes a before/after token pair as one instance with a pair-link fact.
pub fn encode_pair(
    ws: &mut Workspace,
    before: &[&str],
    after: &[&str],
    tag: &str,
    style: TokenStyle,
    kind: InstanceKind,
) -> Result<usize, EncodeError> {
    ensure_fresh(ws, tag)?;
    if style == TokenStyle::Letters {
        intern_successor_slots(ws);
    }
    let b = encode_sequence(ws, before, &format!("{tag}.before"), style, &BTreeSet::new());
    let a = encode_sequence(ws, after, &format!("{tag}.after"), style, &BTreeSet::new());
    let link = add_link(ws, tag, &b, &a);
    Ok(ws
        .register(Instance {
            tag: tag.to_string(),
            kind,
            before: b,
            after: a,
            link: Some(link),
            files: vec![],
        })
        .expect("tag checked above"))
}

/// `encode_pair` for letter strings, validated against the alphabet.
pub fn encode_letter_pair(
    ws: &mut Workspace,
    before: &str,
    after: &str,
    tag: &str,
    alphabet: &Alphabet,
) -> Result<usize, EncodeError> {
    alphabet.check(before)?;
    alphabet.check(after)?;
    let (b, a) = (letter_tokens(before), letter_tokens(after));
    let b: Vec<&str> = b.iter().map(String::as_str).collect();
    let a: Vec<&str> = a.iter().map(String::as_str).collect();
    encode_pair(ws, &b, &a, tag, TokenStyle::Letters, InstanceKind::Example)
}

/// Encodes the before side of a prompt; its after side is what completion
/// fills in.
pub fn encode_prompt(ws: &mut Workspace, before: &[&str], tag: &str, style: TokenStyle) -> Result<usize, EncodeError> {
    ensure_fresh(ws, tag)?;
    let b = encode_sequence(ws, before, &format!("{tag}.before"), style, &BTreeSet::new());
    let link = add_link(ws, tag, &b, &[]);
    Ok(ws
        .register(Instance {
            tag: tag.to_string(),
            kind: InstanceKind::Prompt,
            before: b,
            after: vec![],
            link: Some(link),
            files: vec![],
        })
        .expect("tag checked above"))
}

pub fn encode_letter_prompt(ws: &mut Workspace, before: &str, tag: &str, alphabet: &Alphabet) -> Result<usize, EncodeError> {
    alphabet.check(before)?;
    let b = letter_tokens(before);
    let b: Vec<&str> = b.iter().map(String::as_str).collect();
    intern_successor_slots(ws);
    encode_prompt(ws, &b, tag, TokenStyle::Letters)
}

// ---------------------------------------------------------------------------
// source code

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexeme {
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// Index of the blank-line separated paragraph the token is in.
    pub paragraph: usize,
}

/// Splits on whitespace and on the fixed punctuation set.
pub fn lex(text: &str) -> Vec<Lexeme> {
    let mut out = Vec::new();
    let mut paragraph = 0;
    let mut newlines = 0;
    let mut start: Option<usize> = None;
    let flush = |out: &mut Vec<Lexeme>, start: &mut Option<usize>, end: usize, paragraph: usize| {
        if let Some(s) = start.take() {
            out.push(Lexeme {
                text: text[s..end].to_string(),
                start: s,
                end,
                paragraph,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut out, &mut start, i, paragraph);
            if c == '\n' {
                newlines += 1;
            }
            continue;
        }
        if newlines >= 2 && !out.is_empty() {
            paragraph += 1;
        }
        newlines = 0;
        if PUNCTUATION.contains(&c) {
            flush(&mut out, &mut start, i, paragraph);
            out.push(Lexeme {
                text: c.to_string(),
                start: i,
                end: i + c.len_utf8(),
                paragraph,
            });
        } else if start.is_none() {
            start = Some(i);
        }
    }
    flush(&mut out, &mut start, text.len(), paragraph);
    out
}

/// Optional extra knowledge applied while lexing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LexOptions {
    /// Add an `Object`/`Access`/`Field` fact for every `a.b`.
    pub member_access: bool,
    /// Do not link tokens across blank lines.
    pub paragraphs: bool,
}

fn is_word(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_alphanumeric() || c == '_')
}

/// Lexes one file into the workspace: a file node named `file`, a
/// `FileMember` fact, and the usual sequence facts. Returns the lexeme nodes.
pub fn lex_source(ws: &mut Workspace, text: &str, file: &str, opts: LexOptions) -> Vec<NodeId> {
    let lexemes = lex(text);
    let breaks: BTreeSet<usize> = if opts.paragraphs {
        lexemes
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].paragraph != w[1].paragraph)
            .map(|(i, _)| i)
            .collect()
    } else {
        BTreeSet::new()
    };
    let toks: Vec<&str> = lexemes.iter().map(|l| l.text.as_str()).collect();
    let file_node = ws.structure.intern(file);
    let members = ws.structure.intern(&format!("{file}:members"));
    let file_slot = ws.structure.intern(FILE);
    ws.structure.add_fact(members, file_node, file_slot);
    let nodes = encode_sequence(ws, &toks, file, TokenStyle::Code, &breaks);
    let member_slot = ws.structure.intern(FILE_MEMBER);
    for (n, l) in nodes.iter().zip(&lexemes) {
        ws.structure.add_fact(members, *n, member_slot);
        ws.set_span(*n, Span { start: l.start, end: l.end });
    }
    if opts.member_access {
        let (obj, acc, field) = (
            ws.structure.intern("Object"),
            ws.structure.intern("Access"),
            ws.structure.intern("Field"),
        );
        for i in 0..lexemes.len().saturating_sub(2) {
            let w = &lexemes[i..i + 3];
            let tight = w[0].end == w[1].start && w[1].end == w[2].start;
            if tight && is_word(&w[0].text) && w[1].text == "." && is_word(&w[2].text) {
                let m = ws.structure.intern(&format!("{file}:m{i}"));
                ws.structure.add_fact(m, nodes[i], obj);
                ws.structure.add_fact(m, nodes[i + 1], acc);
                ws.structure.add_fact(m, nodes[i + 2], field);
            }
        }
    }
    ws.set_source(file, text);
    nodes
}

/// Encodes a before/after pair of source texts. The files are named
/// `<tag>.before` and `<tag>.after`.
pub fn encode_source_pair(
    ws: &mut Workspace,
    before: &str,
    after: &str,
    tag: &str,
    kind: InstanceKind,
    opts: LexOptions,
) -> Result<usize, EncodeError> {
    ensure_fresh(ws, tag)?;
    let (fb, fa) = (format!("{tag}.before"), format!("{tag}.after"));
    let b = lex_source(ws, before, &fb, opts);
    let a = lex_source(ws, after, &fa, opts);
    let link = add_link(ws, tag, &b, &a);
    let files = vec![ws.structure.get(&fb).unwrap(), ws.structure.get(&fa).unwrap()];
    Ok(ws
        .register(Instance {
            tag: tag.to_string(),
            kind,
            before: b,
            after: a,
            link: Some(link),
            files,
        })
        .expect("tag checked above"))
}

pub fn encode_source_prompt(ws: &mut Workspace, before: &str, tag: &str, opts: LexOptions) -> Result<usize, EncodeError> {
    ensure_fresh(ws, tag)?;
    let fb = format!("{tag}.before");
    let b = lex_source(ws, before, &fb, opts);
    let link = add_link(ws, tag, &b, &[]);
    let files = vec![ws.structure.get(&fb).unwrap()];
    Ok(ws
        .register(Instance {
            tag: tag.to_string(),
            kind: InstanceKind::Prompt,
            before: b,
            after: vec![],
            link: Some(link),
            files,
        })
        .expect("tag checked above"))
}

/// Encodes a set of files as one plain instance; file `name` becomes the
/// file node `<tag>/<name>`.
pub fn encode_source_set(
    ws: &mut Workspace,
    files: &[(&str, &str)],
    tag: &str,
    opts: LexOptions,
) -> Result<usize, EncodeError> {
    ensure_fresh(ws, tag)?;
    let mut nodes = Vec::new();
    let mut file_nodes = Vec::new();
    for (name, text) in files {
        let fname = format!("{tag}/{name}");
        if ws.structure.get(&fname).is_some() {
            return Err(EncodeError::Malformed(format!("file `{fname}` is encoded twice")));
        }
        nodes.extend(lex_source(ws, text, &fname, opts));
        file_nodes.push(ws.structure.get(&fname).unwrap());
    }
    Ok(ws
        .register(Instance {
            tag: tag.to_string(),
            kind: InstanceKind::Plain,
            before: nodes,
            after: vec![],
            link: None,
            files: file_nodes,
        })
        .expect("tag checked above"))
}

/// Adds `Part"x"` facts for the `_`-separated parts of identifier tokens in
/// an instance, so `cd_builtin` and `builtin_cd` share structure.
pub fn add_name_parts(ws: &mut Workspace, instance: usize) -> usize {
    let nodes: Vec<NodeId> = ws.instances()[instance].nodes().collect();
    let mut added = 0;
    for n in nodes {
        let Some(tok) = ws.token(n).map(str::to_string) else {
            continue;
        };
        let parts: Vec<&str> = tok.split('_').filter(|p| !p.is_empty()).collect();
        if parts.len() < 2 || !is_word(&tok) {
            continue;
        }
        let base = ws.structure.name(n).to_string();
        for (j, part) in parts.iter().enumerate() {
            let f = ws.structure.intern(&format!("{base}:q{j}"));
            let key = ws.structure.intern(&format!("Part\"{part}\""));
            if ws.structure.add_fact(f, n, key) {
                added += 1;
            }
        }
    }
    added
}

// ---------------------------------------------------------------------------
// annotations and ASTs

#[derive(Debug, Deserialize)]
struct Annotation {
    relation: String,
    args: Vec<ArgRef>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ArgRef {
    Token { file: String, index: usize },
    Node { node: String },
}

/// Ingests a JSON annotation list. Each annotation becomes one fact node
/// `ann:<relation>:<k>` with slots `<relation>.<i>`. With `declared`,
/// relations must appear there with matching arity; without it, the first
/// use of a relation fixes its arity.
pub fn ingest_annotations(
    ws: &mut Workspace,
    json: &str,
    declared: Option<&BTreeMap<String, usize>>,
) -> Result<Vec<NodeId>, EncodeError> {
    let anns: Vec<Annotation> = serde_json::from_str(json).map_err(|e| EncodeError::Malformed(e.to_string()))?;
    let mut arity: BTreeMap<String, usize> = declared.cloned().unwrap_or_default();
    let mut resolved = Vec::new();
    for a in &anns {
        match arity.get(&a.relation) {
            Some(&n) if n != a.args.len() => {
                return Err(EncodeError::Arity {
                    relation: a.relation.clone(),
                    expected: n,
                    got: a.args.len(),
                })
            }
            Some(_) => {}
            None if declared.is_some() => return Err(EncodeError::UndeclaredRelation(a.relation.clone())),
            None => {
                arity.insert(a.relation.clone(), a.args.len());
            }
        }
        let mut args = Vec::new();
        for arg in &a.args {
            let id = match arg {
                ArgRef::Token { file, index } => {
                    let name = format!("{file}:{index}");
                    ws.structure
                        .get(&name)
                        .filter(|n| ws.token(*n).is_some())
                        .ok_or(EncodeError::Unresolved(name))?
                }
                ArgRef::Node { node } => ws
                    .structure
                    .get(node)
                    .ok_or_else(|| EncodeError::Unresolved(node.clone()))?,
            };
            args.push(id);
        }
        resolved.push((a.relation.clone(), args));
    }
    let mut out = Vec::new();
    for (rel, args) in resolved {
        let mut k = 1;
        while ws.structure.get(&format!("ann:{rel}:{k}")).is_some() {
            k += 1;
        }
        let f = ws.structure.intern(&format!("ann:{rel}:{k}"));
        for (i, v) in args.into_iter().enumerate() {
            let slot = ws.structure.intern(&format!("{rel}.{}", i + 1));
            ws.structure.add_fact(f, v, slot);
        }
        out.push(f);
    }
    Ok(out)
}

/// Encodes an AST given as JSON: `{"type": t, "children": {role: subtree | "token"}}`.
///
/// Each typed node becomes a node `<prefix>:ast<i>` with a production fact
/// holding it under its type and each child under its role. A string child
/// is an identifier leaf with a fact keyed `Identifier"name"`. A subtree may
/// carry `"token"` to record its surface text. Returns the fact nodes.
pub fn encode_ast(ws: &mut Workspace, json: &str, prefix: &str) -> Result<Vec<NodeId>, EncodeError> {
    let tree: serde_json::Value = serde_json::from_str(json).map_err(|e| EncodeError::Malformed(e.to_string()))?;
    let mut facts = Vec::new();
    let mut counter = 0;
    encode_ast_node(ws, &tree, prefix, &mut counter, &mut facts)?;
    Ok(facts)
}

fn fresh_ast_node(ws: &mut Workspace, prefix: &str, counter: &mut usize) -> (NodeId, usize) {
    let i = *counter;
    *counter += 1;
    (ws.structure.intern(&format!("{prefix}:ast{i}")), i)
}

fn encode_ast_node(
    ws: &mut Workspace,
    v: &serde_json::Value,
    prefix: &str,
    counter: &mut usize,
    facts: &mut Vec<NodeId>,
) -> Result<NodeId, EncodeError> {
    use serde_json::Value;
    match v {
        Value::String(name) => {
            let (n, i) = fresh_ast_node(ws, prefix, counter);
            ws.set_token(n, name);
            let f = ws.structure.intern(&format!("{prefix}:astf{i}"));
            let key = ws.structure.intern(&format!("Identifier\"{name}\""));
            ws.set_platonic(key, name);
            ws.structure.add_fact(f, n, key);
            facts.push(f);
            Ok(n)
        }
        Value::Object(map) => {
            let ty = map
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| EncodeError::Malformed("AST node without a string `type`".into()))?;
            let (n, i) = fresh_ast_node(ws, prefix, counter);
            if let Some(tok) = map.get("token").and_then(Value::as_str) {
                ws.set_token(n, tok);
            }
            let children = match map.get("children") {
                None => serde_json::Map::new(),
                Some(Value::Object(c)) => c.clone(),
                Some(_) => return Err(EncodeError::Malformed("`children` must be an object".into())),
            };
            if ty == "Identifier" && children.is_empty() {
                let name = map
                    .get("token")
                    .and_then(Value::as_str)
                    .ok_or_else(|| EncodeError::Malformed("identifier without a token".into()))?;
                let f = ws.structure.intern(&format!("{prefix}:astf{i}"));
                let key = ws.structure.intern(&format!("Identifier\"{name}\""));
                ws.set_platonic(key, name);
                ws.structure.add_fact(f, n, key);
                facts.push(f);
                return Ok(n);
            }
            let f = ws.structure.intern(&format!("{prefix}:astf{i}"));
            let kind = ws.structure.intern(ty);
            ws.structure.add_fact(f, n, kind);
            facts.push(f);
            for (role, child) in &children {
                let c = encode_ast_node(ws, child, prefix, counter, facts)?;
                let slot = ws.structure.intern(role);
                ws.structure.add_fact(f, c, slot);
            }
            Ok(n)
        }
        other => Err(EncodeError::Malformed(format!("unexpected AST value {other}"))),
    }
}

// ---------------------------------------------------------------------------
// generated rules

/// One rule per adjacent alphabet pair, each shaped like the `a`/`b` rule:
/// two instances of consecutive letters get a fact holding them under
/// `Predecessor` and `Successor`.
pub fn gen_successor_rules(alphabet: &Alphabet) -> Vec<Rule> {
    let mut text = String::new();
    for w in alphabet.symbols().windows(2) {
        let (a, b) = (w[0], w[1]);
        text.push_str(&format!(
            "rule successor-{a}-{b}\n\
             var v1 v2 vf1 vf2\n\
             const Letter:{a} Letter:{b} {PREDECESSOR} {SUCCESSOR}\n\
             require (vf1 v1 Letter:{a})\n\
             require (vf2 v2 Letter:{b})\n\
             create nf3\n\
             add (nf3 v1 {PREDECESSOR})\n\
             add (nf3 v2 {SUCCESSOR})\n\n"
        ));
    }
    parse_rules(&text).expect("generated successor rules are well formed")
}

/// For each platonic node name, a symmetric rule relating two distinct
/// instances of it with a `Same` fact.
pub fn gen_same_rules<'a>(platonic: impl IntoIterator<Item = &'a str>) -> Vec<Rule> {
    let mut text = String::new();
    for p in platonic {
        text.push_str(&format!(
            "rule same:{p}\n\
             var v1 v2 vf1 vf2\n\
             const {p} {SAME}\n\
             distinct v1 v2\n\
             sym (v1 vf1) <-> (v2 vf2)\n\
             require (vf1 v1 {p})\n\
             require (vf2 v2 {p})\n\
             create nf\n\
             add (nf v1 {SAME})\n\
             add (nf v2 {SAME})\n\n"
        ));
    }
    parse_rules(&text).expect("generated same rules are well formed")
}

/// `Same` rules for the word-like tokens of a workspace that occur between
/// two and `max_occurrences` times. Punctuation is left to platonic facts.
pub fn same_rules_for(ws: &Workspace, max_occurrences: usize) -> Vec<Rule> {
    let mut names: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for inst in ws.instances() {
        for n in inst.nodes() {
            for t in ws.structure.query(&HolePattern::new(None, Some(n), None)) {
                let Some(tok) = ws.platonic_token(t.key) else { continue };
                if !is_word(tok) || !seen.insert(t.key) {
                    continue;
                }
                let count = ws.structure.bucket_len(&HolePattern::new(None, None, Some(t.key)));
                if (2..=max_occurrences).contains(&count) {
                    names.push(ws.structure.name(t.key).to_string());
                }
            }
        }
    }
    names.sort();
    gen_same_rules(names.iter().map(String::as_str))
}

/// Consistency rules: no letter instance is an instance of two letters.
pub fn letter_consistency_rules(alphabet: &Alphabet) -> Vec<Rule> {
    let mut text = String::new();
    let sym = alphabet.symbols();
    for (i, a) in sym.iter().enumerate() {
        for b in &sym[i + 1..] {
            text.push_str(&format!(
                "rule one-letter-{a}-{b} consistency\n\
                 var x p q\n\
                 const Letter:{a} Letter:{b}\n\
                 require (p x Letter:{a})\n\
                 require (q x Letter:{b})\n\n"
            ));
        }
    }
    parse_rules(&text).expect("generated consistency rules are well formed")
}
