//! Domain types shared by every stage of the pipeline: fact triplets,
//! edits, chains, multi-hop cases and demonstrations, plus the thought and
//! prompt algebra built on them.
//!
//! All values are immutable once constructed and validated.

mod prompt;
mod template;
mod thought;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{
    assemble_prompt, parse_demonstration_block, parse_prompt, render_demonstration, render_demonstrations,
    split_labeled_blocks, Label, ParsedPrompt, PromptBundle, SectionKind, DEMO_SEPARATOR, SECTION_SEPARATOR,
};
pub use template::{
    render_statement, PhraseTemplate, PromptTemplate, TemplateRegistry, GENERIC_PHRASE, GENERIC_STATEMENT,
};
pub use thought::{
    build_thought, conclusion, inject_edit_prefix, restate_question, sentence, split_sentences, EDIT_PREFIX,
    QUESTION_OPENERS,
};

/// Upper bound on whitespace tokens in a demonstration answer.
pub const MAX_ANSWER_TOKENS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("{field} must be non-empty")]
    EmptyField { field: &'static str },
    #[error("template {pattern:?}: {reason}")]
    TemplateArity { pattern: String, reason: String },
    #[error("chain is empty")]
    EmptyChain,
    #[error("broken chain at hop {index}: object {object:?} != next subject {next_subject:?}")]
    BrokenChain { index: usize, object: String, next_subject: String },
    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(String),
    #[error("invalid case {case_id}: {reasons:?}")]
    InvalidCase { case_id: String, reasons: Vec<String> },
}

/// Anything that reads as `(subject, relation, object)`.
pub trait Fact {
    fn subject(&self) -> &str;
    fn relation(&self) -> &str;
    fn object(&self) -> &str;
}

fn canonical(field: &'static str, value: &str) -> Result<String, ModelError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        Err(ModelError::EmptyField { field })
    } else {
        Ok(trimmed.to_string())
    }
}

/// A `(subject, relation, object)` atom, stored trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawTriplet", into = "RawTriplet")]
pub struct FactTriplet {
    subject: String,
    relation: String,
    object: String,
}

#[derive(Serialize, Deserialize)]
struct RawTriplet {
    subject: String,
    relation: String,
    object: String,
}

impl TryFrom<RawTriplet> for FactTriplet {
    type Error = ModelError;

    fn try_from(raw: RawTriplet) -> Result<Self, Self::Error> {
        FactTriplet::new(&raw.subject, &raw.relation, &raw.object)
    }
}

impl From<FactTriplet> for RawTriplet {
    fn from(t: FactTriplet) -> Self {
        RawTriplet { subject: t.subject, relation: t.relation, object: t.object }
    }
}

impl FactTriplet {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, ModelError> {
        Ok(Self {
            subject: canonical("subject", subject)?,
            relation: canonical("relation", relation)?,
            object: canonical("object", object)?,
        })
    }

    /// `(subject, relation)`, the key an edit overwrites.
    pub fn key(&self) -> (&str, &str) {
        (&self.subject, &self.relation)
    }

    pub fn with_object(&self, object: &str) -> Result<Self, ModelError> {
        Self::new(&self.subject, &self.relation, object)
    }
}

impl Fact for FactTriplet {
    fn subject(&self) -> &str {
        &self.subject
    }
    fn relation(&self) -> &str {
        &self.relation
    }
    fn object(&self) -> &str {
        &self.object
    }
}

/// A rewrite of `base` to `new_object`. The version is assigned by the edit
/// memory on insertion; freshly built edits carry version 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub base: FactTriplet,
    pub new_object: String,
    #[serde(default)]
    pub version: u64,
}

impl Edit {
    pub fn new(base: FactTriplet, new_object: &str) -> Result<Self, ModelError> {
        Ok(Self { base, new_object: canonical("new_object", new_object)?, version: 0 })
    }

    pub fn key(&self) -> (&str, &str) {
        self.base.key()
    }

    /// The triplet this edit asserts.
    pub fn edited(&self) -> FactTriplet {
        FactTriplet {
            subject: self.base.subject.clone(),
            relation: self.base.relation.clone(),
            object: self.new_object.clone(),
        }
    }
}

impl Fact for Edit {
    fn subject(&self) -> &str {
        &self.base.subject
    }
    fn relation(&self) -> &str {
        &self.base.relation
    }
    fn object(&self) -> &str {
        &self.new_object
    }
}

/// Ordered hops where each object is the next hop's subject.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactTriplet>", into = "Vec<FactTriplet>")]
pub struct FactChain {
    hops: Vec<FactTriplet>,
}

impl FactChain {
    pub fn new(hops: Vec<FactTriplet>) -> Result<Self, ModelError> {
        if hops.is_empty() {
            return Err(ModelError::EmptyChain);
        }
        for (index, pair) in hops.windows(2).enumerate() {
            if pair[0].object != pair[1].subject {
                return Err(ModelError::BrokenChain {
                    index,
                    object: pair[0].object.clone(),
                    next_subject: pair[1].subject.clone(),
                });
            }
        }
        Ok(Self { hops })
    }

    pub fn hops(&self) -> &[FactTriplet] {
        &self.hops
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn head(&self) -> &str {
        &self.hops[0].subject
    }

    /// Tail entity, the chain's answer.
    pub fn answer(&self) -> &str {
        &self.hops[self.hops.len() - 1].object
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.hops.iter().map(|h| h.subject.as_str())
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.hops.iter().map(|h| h.relation.as_str())
    }

    /// Every entity on the chain, head first.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.head()).chain(self.hops.iter().map(|h| h.object.as_str()))
    }

    pub fn contains(&self, fact: &FactTriplet) -> bool {
        self.hops.contains(fact)
    }
}

impl TryFrom<Vec<FactTriplet>> for FactChain {
    type Error = ModelError;

    fn try_from(hops: Vec<FactTriplet>) -> Result<Self, Self::Error> {
        Self::new(hops)
    }
}

impl From<FactChain> for Vec<FactTriplet> {
    fn from(chain: FactChain) -> Self {
        chain.hops
    }
}

/// One evaluation item: question paraphrases over an edited chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHopCase {
    pub case_id: String,
    pub questions: Vec<String>,
    pub original_chain: FactChain,
    pub edited_chain: FactChain,
    pub edits: Vec<Edit>,
    pub gold_answer: String,
    #[serde(default)]
    pub answer_aliases: Vec<String>,
    pub hop_count: usize,
    /// Free-form provenance tag (split, subset, probe category).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl MultiHopCase {
    pub const MAX_QUESTIONS: usize = 3;
    pub const MAX_HOPS: usize = 4;

    /// Every violated invariant, human readable. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.case_id.trim().is_empty() {
            out.push("case_id is empty".to_string());
        }
        if self.questions.is_empty() || self.questions.len() > Self::MAX_QUESTIONS {
            out.push(format!("expected 1-3 questions, got {}", self.questions.len()));
        }
        if self.questions.iter().any(|q| q.trim().is_empty()) {
            out.push("empty question".to_string());
        }
        if self.gold_answer != self.edited_chain.answer() {
            out.push(format!(
                "gold answer {:?} != edited chain answer {:?}",
                self.gold_answer,
                self.edited_chain.answer()
            ));
        }
        if self.hop_count != self.edited_chain.len() {
            out.push(format!("hop_count {} != edited chain length {}", self.hop_count, self.edited_chain.len()));
        }
        if self.hop_count == 0 || self.hop_count > Self::MAX_HOPS {
            out.push(format!("hop_count {} outside 1..=4", self.hop_count));
        }
        for edit in &self.edits {
            // A later edit may sit on the path that only exists after an
            // earlier edit; its rewritten fact is then on the edited chain.
            if !self.original_chain.contains(&edit.base) && !self.edited_chain.contains(&edit.edited()) {
                out.push(format!(
                    "edit ({}, {}, {}) on neither chain",
                    edit.base.subject, edit.base.relation, edit.base.object
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let reasons = self.violations();
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidCase { case_id: self.case_id.clone(), reasons })
        }
    }

    pub fn edit_count(&self) -> usize {
        self.edits.len()
    }
}

fn single_line(field: &'static str, value: &str) -> Result<String, ModelError> {
    let value = canonical(field, value).map_err(|_| ModelError::InvalidDemonstration(format!("{field} is empty")))?;
    if value.contains(['\n', '\r']) {
        return Err(ModelError::InvalidDemonstration(format!("{field} spans multiple lines")));
    }
    Ok(value)
}

/// The four-part exemplar: new facts, question, thought, answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDemonstration", into = "RawDemonstration")]
pub struct Demonstration {
    new_facts: Vec<String>,
    question: String,
    thought: String,
    answer: String,
}

#[derive(Serialize, Deserialize)]
struct RawDemonstration {
    new_facts: Vec<String>,
    question: String,
    thought: String,
    answer: String,
}

impl TryFrom<RawDemonstration> for Demonstration {
    type Error = ModelError;

    fn try_from(raw: RawDemonstration) -> Result<Self, Self::Error> {
        Demonstration::new(raw.new_facts, &raw.question, &raw.thought, &raw.answer)
    }
}

impl From<Demonstration> for RawDemonstration {
    fn from(d: Demonstration) -> Self {
        RawDemonstration { new_facts: d.new_facts, question: d.question, thought: d.thought, answer: d.answer }
    }
}

impl Demonstration {
    pub fn new<S: AsRef<str>>(
        new_facts: impl IntoIterator<Item = S>,
        question: &str,
        thought: &str,
        answer: &str,
    ) -> Result<Self, ModelError> {
        let new_facts =
            new_facts.into_iter().map(|f| single_line("new fact", f.as_ref())).collect::<Result<Vec<_>, _>>()?;
        if new_facts.is_empty() {
            return Err(ModelError::InvalidDemonstration("no new facts".into()));
        }
        let answer = single_line("answer", answer)?;
        let tokens = answer.split_whitespace().count();
        if tokens > MAX_ANSWER_TOKENS {
            return Err(ModelError::InvalidDemonstration(format!(
                "answer has {tokens} tokens, limit is {MAX_ANSWER_TOKENS}"
            )));
        }
        let demo = Self {
            new_facts,
            question: single_line("question", question)?,
            thought: single_line("thought", thought)?,
            answer,
        };
        // A component that opens with a section label would not survive parsing.
        for part in demo.new_facts.iter().chain([&demo.question, &demo.thought, &demo.answer]) {
            if Label::detect(part).is_some() {
                return Err(ModelError::InvalidDemonstration(format!(
                    "component starts with a section label: {part:?}"
                )));
            }
        }
        Ok(demo)
    }

    pub fn new_facts(&self) -> &[String] {
        &self.new_facts
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn thought(&self) -> &str {
        &self.thought
    }

    pub fn answer(&self) -> &str {
        &self.answer
    }
}
