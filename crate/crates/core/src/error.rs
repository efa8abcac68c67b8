use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("fact {0} is not in the structure")]
    FactNotPresent(String),
    #[error("mark is no longer live")]
    StaleMark,
    #[error("generated node name `{name}` collides with a node of different provenance")]
    HashCollision { name: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule `{rule}`: `{name}` is not declared")]
    Undeclared { rule: String, name: String },
    #[error("rule `{rule}`: {message}")]
    Invalid { rule: String, message: String },
    #[error("rule `{0}` is a consistency rule and cannot be applied")]
    ConsistencyRuleApplied(String),
    #[error("assignment does not match rule `{0}`")]
    NotAMatch(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("character `{0}` is not in the alphabet")]
    OutsideAlphabet(char),
    #[error("relation `{relation}` expects {expected} arguments, got {got}")]
    Arity {
        relation: String,
        expected: usize,
        got: usize,
    },
    #[error("relation `{0}` is not declared")]
    UndeclaredRelation(String),
    #[error("reference does not resolve: {0}")]
    Unresolved(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("alphabet needs at least two distinct symbols")]
    ShortAlphabet,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalogyError {
    #[error("analogy is incomplete: {missing} abstract node(s) have no inferable counterpart")]
    Incomplete { missing: usize },
    #[error("no abstraction in the workspace")]
    NoAbstraction,
    #[error("instance `{0}` is not registered")]
    UnknownInstance(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}
