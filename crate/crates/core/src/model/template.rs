//! Relation templates: rendering fact triplets as statements and matching
//! statements back into (subject, object) pairs.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Fact, ModelError};

const SUBJECT: &str = "{s}";
const OBJECT: &str = "{o}";
const SLOT: &str = "{x}";

/// Statement used for relations without a registered template.
pub const GENERIC_STATEMENT: &str = "The {relation} of {s} is {o}";
/// Noun phrase used for relations without a registered phrase.
pub const GENERIC_PHRASE: &str = "the {relation} of {x}";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece<'a> {
    Lit(&'a str),
    Subject,
    Object,
    Slot,
}

fn pieces(pattern: &str) -> Result<Vec<Piece<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Lit(&rest[..open]));
        }
        let close = rest[open..].find('}').ok_or_else(|| "unterminated placeholder".to_string())?;
        let name = &rest[open..open + close + 1];
        out.push(match name {
            SUBJECT => Piece::Subject,
            OBJECT => Piece::Object,
            SLOT => Piece::Slot,
            other => return Err(format!("unknown placeholder {other}")),
        });
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Lit(rest));
    }
    Ok(out)
}

fn count(pieces: &[Piece<'_>], which: Piece<'_>) -> usize {
    pieces.iter().filter(|p| **p == which).count()
}

fn trim_statement(text: &str) -> &str {
    text.trim().trim_end_matches('.').trim_end()
}

/// Case-insensitive (ASCII) prefix strip.
pub(crate) fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

/// All ways `text` can be split to fit `pieces`. Literals compare
/// ASCII-case-insensitively; captures are non-empty and trimmed.
fn match_pieces<'t>(pieces: &[Piece<'_>], text: &'t str, acc: &mut Vec<&'t str>, out: &mut Vec<Vec<&'t str>>) {
    match pieces.split_first() {
        None => {
            if text.is_empty() {
                out.push(acc.clone());
            }
        }
        Some((Piece::Lit(lit), rest)) => {
            if let Some(tail) = strip_prefix_ci(text, lit) {
                match_pieces(rest, tail, acc, out);
            }
        }
        Some((_, rest)) => {
            // Capture up to each candidate boundary.
            let ends: Vec<usize> = match rest.first() {
                None => vec![text.len()],
                Some(Piece::Lit(lit)) => {
                    let lower = text.to_ascii_lowercase();
                    let needle = lit.to_ascii_lowercase();
                    lower.match_indices(&needle).map(|(i, _)| i).collect()
                }
                // Adjacent placeholders: ambiguous, try every char boundary.
                Some(_) => text.char_indices().map(|(i, _)| i).skip(1).collect(),
            };
            for end in ends {
                let captured = text[..end].trim();
                if captured.is_empty() {
                    continue;
                }
                acc.push(captured);
                match_pieces(rest, &text[end..], acc, out);
                acc.pop();
            }
        }
    }
}

/// A statement pattern `p(s, r, o)` with one `{o}` and at most one `{s}`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate {
    pattern: String,
}

impl PromptTemplate {
    pub fn new(pattern: impl Into<String>) -> Result<Self, ModelError> {
        let pattern = pattern.into();
        let parsed =
            pieces(&pattern).map_err(|reason| ModelError::TemplateArity { pattern: pattern.clone(), reason })?;
        let arity = |reason: &str| ModelError::TemplateArity { pattern: pattern.clone(), reason: reason.to_string() };
        if count(&parsed, Piece::Object) != 1 {
            return Err(arity("expected exactly one {o}"));
        }
        if count(&parsed, Piece::Subject) > 1 {
            return Err(arity("expected at most one {s}"));
        }
        if count(&parsed, Piece::Slot) > 0 {
            return Err(arity("{x} is only valid in noun phrases"));
        }
        Ok(Self { pattern })
    }

    /// Template for a relation with no registered pattern.
    pub fn generic(relation: &str) -> Self {
        Self { pattern: GENERIC_STATEMENT.replace("{relation}", relation) }
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn has_subject(&self) -> bool {
        self.pattern.contains(SUBJECT)
    }

    pub fn render(&self, subject: &str, object: &str) -> String {
        self.pattern.replace(SUBJECT, subject).replace(OBJECT, object)
    }

    /// `p(s, r, ∅)`: the statement with the object left blank.
    pub fn cloze(&self, subject: &str) -> String {
        self.render(subject, "_")
    }

    /// Every `(subject, object)` reading of `text` under this pattern.
    /// Trailing periods are ignored on both sides. Templates without a
    /// subject placeholder yield an empty subject.
    pub fn match_statement(&self, text: &str) -> Vec<(String, String)> {
        let pattern = trim_statement(&self.pattern);
        let Ok(parsed) = pieces(pattern) else {
            return Vec::new();
        };
        let mut found = Vec::new();
        match_pieces(&parsed, trim_statement(text), &mut Vec::new(), &mut found);
        let placeholders: Vec<Piece<'_>> = parsed.iter().copied().filter(|p| !matches!(p, Piece::Lit(_))).collect();
        found
            .into_iter()
            .map(|caps| {
                let mut subject = String::new();
                let mut object = String::new();
                for (piece, cap) in placeholders.iter().zip(caps) {
                    match piece {
                        Piece::Subject => subject = cap.to_string(),
                        Piece::Object => object = cap.to_string(),
                        _ => {}
                    }
                }
                (subject, object)
            })
            .collect()
    }
}

impl fmt::Debug for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PromptTemplate({:?})", self.pattern)
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PromptTemplate> for String {
    fn from(value: PromptTemplate) -> Self {
        value.pattern
    }
}

/// A noun phrase with one `{x}` slot, e.g. `the capital of {x}`. Used to
/// compose multi-hop questions and to read them back.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhraseTemplate {
    pattern: String,
}

impl PhraseTemplate {
    pub fn new(pattern: impl Into<String>) -> Result<Self, ModelError> {
        let pattern = pattern.into();
        let parsed =
            pieces(&pattern).map_err(|reason| ModelError::TemplateArity { pattern: pattern.clone(), reason })?;
        if count(&parsed, Piece::Slot) != 1
            || parsed.len() != 1 + parsed.iter().filter(|p| matches!(p, Piece::Lit(_))).count()
        {
            return Err(ModelError::TemplateArity {
                pattern,
                reason: "expected exactly one {x} and no other placeholder".into(),
            });
        }
        Ok(Self { pattern })
    }

    pub fn generic(relation: &str) -> Self {
        Self { pattern: GENERIC_PHRASE.replace("{relation}", relation) }
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn apply(&self, inner: &str) -> String {
        self.pattern.replace(SLOT, inner)
    }

    /// Every inner phrase `x` with `apply(x) == text` (case-insensitive literals).
    pub fn unwrap<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let Ok(parsed) = pieces(&self.pattern) else {
            return Vec::new();
        };
        let mut found = Vec::new();
        match_pieces(&parsed, text.trim(), &mut Vec::new(), &mut found);
        found.into_iter().filter_map(|caps| caps.first().copied()).collect()
    }
}

impl fmt::Debug for PhraseTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhraseTemplate({:?})", self.pattern)
    }
}

impl TryFrom<String> for PhraseTemplate {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PhraseTemplate> for String {
    fn from(value: PhraseTemplate) -> Self {
        value.pattern
    }
}

/// Relation name → statement template and question phrases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRegistry {
    #[serde(default)]
    statements: BTreeMap<String, PromptTemplate>,
    #[serde(default)]
    phrases: BTreeMap<String, Vec<PhraseTemplate>>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_statement(mut self, relation: &str, pattern: &str) -> Result<Self, ModelError> {
        self.insert_statement(relation, PromptTemplate::new(pattern)?);
        Ok(self)
    }

    pub fn with_phrase(mut self, relation: &str, pattern: &str) -> Result<Self, ModelError> {
        self.insert_phrase(relation, PhraseTemplate::new(pattern)?);
        Ok(self)
    }

    pub fn insert_statement(&mut self, relation: &str, template: PromptTemplate) {
        self.statements.insert(relation.to_string(), template);
    }

    pub fn insert_phrase(&mut self, relation: &str, phrase: PhraseTemplate) {
        let entry = self.phrases.entry(relation.to_string()).or_default();
        if !entry.contains(&phrase) {
            entry.push(phrase);
        }
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.statements.contains_key(relation)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.statements.keys().map(String::as_str)
    }

    /// Registered template or the generic fallback.
    pub fn statement(&self, relation: &str) -> Cow<'_, PromptTemplate> {
        match self.statements.get(relation) {
            Some(t) => Cow::Borrowed(t),
            None => Cow::Owned(PromptTemplate::generic(relation)),
        }
    }

    /// Registered phrases, or the single generic phrase.
    pub fn phrases(&self, relation: &str) -> Cow<'_, [PhraseTemplate]> {
        match self.phrases.get(relation) {
            Some(p) if !p.is_empty() => Cow::Borrowed(p.as_slice()),
            _ => Cow::Owned(vec![PhraseTemplate::generic(relation)]),
        }
    }

    pub fn render<F: Fact + ?Sized>(&self, fact: &F) -> String {
        render_statement(fact, &self.statement(fact.relation()))
    }

    /// Merge `other` into `self`; entries already present win.
    pub fn absorb(&mut self, other: &TemplateRegistry) {
        for (relation, template) in &other.statements {
            self.statements.entry(relation.clone()).or_insert_with(|| template.clone());
        }
        for (relation, phrases) in &other.phrases {
            for phrase in phrases {
                self.insert_phrase(relation, phrase.clone());
            }
        }
    }
}

/// Render `fact` through `template`. Edits render their new object.
pub fn render_statement<F: Fact + ?Sized>(fact: &F, template: &PromptTemplate) -> String {
    template.render(fact.subject(), fact.object())
}
