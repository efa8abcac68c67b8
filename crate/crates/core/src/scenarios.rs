//! End-to-end entry points: letter-string completion, code transformation
//! by example, and correspondence between two file sets.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::abstracter::{
    abstraction_consistency_rules, abstractions, anchor_rule, builtin_rules, completion_check, correspondences, extract_completion,
    join_rules, type_slip_rules, CompletionStatus, ScoreReport,
};
use crate::encoders::{
    add_name_parts, encode_letter_pair, encode_letter_prompt, encode_source_pair, encode_source_prompt,
    encode_source_set, gen_same_rules, gen_successor_rules, ingest_annotations, letter_consistency_rules,
    same_rules_for, Alphabet, LexOptions, TokenStyle,
};
use crate::error::AnalogyError;
use crate::rules::Rule;
use crate::search::{search, SearchConfig, SearchOutcome};
use crate::workspace::{InstanceKind, Workspace};

/// Tag of the prompt instance in every scenario.
pub const PROMPT: &str = "prompt";

#[derive(Clone, Debug)]
pub struct Completion {
    /// Completed tokens; empty when the analogy is incomplete.
    pub tokens: Vec<String>,
    pub status: CompletionStatus,
    pub report: ScoreReport,
    pub outcome: SearchOutcome,
}

impl Completion {
    pub fn is_complete(&self) -> bool {
        self.status == CompletionStatus::Complete
    }
}

/// Rules for letter strings: successor and `Same` rules for the alphabet plus
/// the abstraction rules, and the matching consistency rules.
pub fn letter_rules(alphabet: &Alphabet, type_slips: bool) -> (Vec<Rule>, Vec<Rule>) {
    let mut rules = gen_successor_rules(alphabet);
    let platonic: Vec<String> = alphabet
        .symbols()
        .iter()
        .map(|c| TokenStyle::Letters.platonic_name(&c.to_string()))
        .collect();
    rules.extend(gen_same_rules(platonic.iter().map(String::as_str)));
    rules.extend(analogy_rules(type_slips));
    let mut consistency = letter_consistency_rules(alphabet);
    consistency.extend(abstraction_consistency_rules());
    (rules, consistency)
}

/// The abstraction rules used by the search: the built-in six, the join
/// rules, and optionally the slip variants.
pub fn analogy_rules(type_slips: bool) -> Vec<Rule> {
    let mut rules: Vec<Rule> = builtin_rules()
        .into_iter()
        .filter(|r| type_slips || r.name != "abs:type-slip")
        .collect();
    if type_slips {
        rules.extend(type_slip_rules().into_iter().filter(|r| r.name != "abs:type-slip"));
    }
    rules.extend(join_rules());
    rules
}

/// Searches, then extracts the prompt's completion if the abstraction
/// allows one.
pub fn complete(
    ws: Workspace,
    rules: &[Rule],
    consistency: &[Rule],
    config: &SearchConfig,
) -> Result<Completion, AnalogyError> {
    let mut outcome = search(ws, rules, consistency, config);
    let status = match abstractions(&outcome.workspace).is_empty() {
        true => CompletionStatus::Missing(outcome.report.missing().max(1)),
        false => completion_check(&outcome.workspace, PROMPT, &config.alphabet)?,
    };
    let tokens = match status {
        CompletionStatus::Complete => extract_completion(&mut outcome.workspace, PROMPT, &config.alphabet)?,
        CompletionStatus::Missing(_) => Vec::new(),
    };
    let report = outcome.report.clone();
    Ok(Completion {
        tokens,
        status,
        report,
        outcome,
    })
}

/// Completes a letter-string analogy: `examples` are before/after pairs and
/// `prompt` the before side to complete.
pub fn complete_strings(
    examples: &[(&str, &str)],
    prompt: &str,
    config: &SearchConfig,
    type_slips: bool,
) -> Result<Completion, AnalogyError> {
    if examples.is_empty() || prompt.is_empty() {
        return Err(AnalogyError::Encode(crate::error::EncodeError::Malformed(
            "need at least one example and a nonempty prompt".into(),
        )));
    }
    let mut ws = Workspace::new();
    for (i, (b, a)) in examples.iter().enumerate() {
        encode_letter_pair(&mut ws, b, a, &format!("ex{}", i + 1), &config.alphabet)?;
    }
    encode_letter_prompt(&mut ws, prompt, PROMPT, &config.alphabet)?;
    let (rules, consistency) = letter_rules(&config.alphabet, type_slips);
    complete(ws, &rules, &consistency, config)
}

/// Inputs to a code transformation.
#[derive(Clone, Debug, Default)]
pub struct TransformInput {
    /// `(before, after)` source texts.
    pub examples: Vec<(String, String)>,
    pub prompt: String,
    /// JSON annotations referring to tokens as `{"file": .., "index": ..}`.
    pub annotations: Option<String>,
    /// A before/after documentation pair visible to every instance.
    pub docs: Option<(String, String)>,
}

/// Tag of the documentation pair, when present.
pub const DOCS: &str = "docs";

/// Tokens that occur more often than this are not related by `Same` rules.
pub const SAME_MAX_OCCURRENCES: usize = 8;

#[derive(Clone, Debug)]
pub struct Transform {
    pub completion: Completion,
    /// The generated after text for the prompt; empty when incomplete.
    pub text: String,
}

/// Encodes a transformation workspace with `ex1..exN`, an optional `docs`
/// pair, and the prompt.
pub fn transform_workspace(input: &TransformInput) -> Result<Workspace, AnalogyError> {
    let mut ws = Workspace::new();
    let opts = LexOptions {
        member_access: true,
        paragraphs: true,
    };
    for (i, (b, a)) in input.examples.iter().enumerate() {
        encode_source_pair(&mut ws, b, a, &format!("ex{}", i + 1), InstanceKind::Example, opts)?;
    }
    if let Some((b, a)) = &input.docs {
        encode_source_pair(&mut ws, b, a, DOCS, InstanceKind::Shared, opts)?;
    }
    encode_source_prompt(&mut ws, &input.prompt, PROMPT, opts)?;
    if let Some(json) = &input.annotations {
        ingest_annotations(&mut ws, json, None)?;
    }
    Ok(ws)
}

/// Rules for code: `Same` rules for word-like tokens plus the abstraction
/// rules and anchors.
pub fn code_rules(ws: &Workspace) -> (Vec<Rule>, Vec<Rule>) {
    let mut rules = same_rules_for(ws, SAME_MAX_OCCURRENCES);
    rules.extend(analogy_rules(false));
    rules.push(anchor_rule());
    (rules, abstraction_consistency_rules())
}

/// Transforms the prompt by analogy with the examples.
pub fn transform(input: &TransformInput, config: &SearchConfig) -> Result<Transform, AnalogyError> {
    if input.examples.is_empty() {
        return Err(AnalogyError::Encode(crate::error::EncodeError::Malformed(
            "need at least one example pair".into(),
        )));
    }
    let ws = transform_workspace(input)?;
    let (rules, consistency) = code_rules(&ws);
    let completion = complete(ws, &rules, &consistency, config)?;
    let text = if completion.is_complete() {
        render(&completion.outcome.workspace, &completion.tokens, input)
    } else {
        String::new()
    };
    Ok(Transform { completion, text })
}

/// Lays out generated tokens as source text. When the token count matches
/// the prompt, the prompt's own whitespace is kept; otherwise the first
/// example's after text serves as the layout template.
pub fn render(ws: &Workspace, tokens: &[String], input: &TransformInput) -> String {
    let Some(prompt) = ws.instance(PROMPT) else {
        return tokens.join(" ");
    };
    let prompt_file = format!("{PROMPT}.before");
    if prompt.before.len() == tokens.len() {
        return relayout(ws, &prompt.before, &prompt_file, &input.prompt, tokens);
    }
    if let Some(ex) = ws.instance("ex1") {
        if ex.after.len() == tokens.len() {
            return relayout(ws, &ex.after, "ex1.after", &input.examples[0].1, tokens);
        }
    }
    tokens.join(" ")
}

fn relayout(ws: &Workspace, nodes: &[crate::structure::NodeId], _file: &str, text: &str, tokens: &[String]) -> String {
    let mut out = String::new();
    let mut pos = 0;
    for (n, tok) in nodes.iter().zip(tokens) {
        let Some(span) = ws.span(*n) else {
            out.push_str(tok);
            continue;
        };
        out.push_str(&text[pos..span.start]);
        out.push_str(tok);
        pos = span.end;
    }
    out.push_str(&text[pos..]);
    out
}

/// One corresponding pair of lexemes across two file sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LexemePair {
    pub left: String,
    pub right: String,
    pub left_node: String,
    pub right_node: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceReport {
    pub pairs: Vec<LexemePair>,
    pub abstract_fact_count: usize,
    pub weighted_score: f64,
    pub coverage: f64,
    pub weak: bool,
}

/// Maps the lexemes of two file sets onto each other.
pub fn correspond(
    left: &[(String, String)],
    right: &[(String, String)],
    annotations: Option<&str>,
    config: &SearchConfig,
) -> Result<(CorrespondenceReport, SearchOutcome), AnalogyError> {
    let mut ws = Workspace::new();
    let opts = LexOptions {
        member_access: true,
        paragraphs: false,
    };
    let l: Vec<(&str, &str)> = left.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let r: Vec<(&str, &str)> = right.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let li = encode_source_set(&mut ws, &l, "a", opts)?;
    let ri = encode_source_set(&mut ws, &r, "b", opts)?;
    add_name_parts(&mut ws, li);
    add_name_parts(&mut ws, ri);
    if let Some(json) = annotations {
        ingest_annotations(&mut ws, json, None)?;
    }
    let (rules, consistency) = code_rules(&ws);
    let outcome = search(ws, &rules, &consistency, config);
    let ws = &outcome.workspace;
    let mut pairs = Vec::new();
    for c in correspondences(ws) {
        let find = |tag: &str| c.instances.iter().find(|(t, _)| t == tag).map(|(_, n)| *n);
        let (Some(x), Some(y)) = (find("a"), find("b")) else { continue };
        let (Some(tx), Some(ty)) = (ws.token(x), ws.token(y)) else { continue };
        pairs.push(LexemePair {
            left: tx.to_string(),
            right: ty.to_string(),
            left_node: ws.structure.name(x).to_string(),
            right_node: ws.structure.name(y).to_string(),
        });
    }
    pairs.sort_by(|p, q| p.left_node.cmp(&q.left_node));
    let report = CorrespondenceReport {
        pairs,
        abstract_fact_count: outcome.report.abstract_fact_count,
        weighted_score: outcome.report.weighted_score,
        coverage: outcome.report.coverage,
        weak: outcome.report.weak,
    };
    Ok((report, outcome))
}

/// Relation weights from a JSON object of relation name to number.
pub fn parse_weights(json: &str) -> Result<BTreeMap<String, f64>, serde_json::Error> {
    serde_json::from_str(json)
}
