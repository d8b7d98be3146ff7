//! Deterministic stand-in for a language model: a functional knowledge graph
//! walked hop by hop, with edits read from the prompt and a configurable
//! reasoning depth that chain-of-thought demonstrations can lift.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::edit_memory::{
    SELF_CHECK_FACTS_HEADER as FACTS_HEADER, SELF_CHECK_QUESTION, SELF_CHECK_REASONING_HEADER as REASONING_HEADER,
};
use crate::model::{
    conclusion, parse_prompt, render_demonstrations, restate_question, sentence, split_sentences, Demonstration, Fact,
    FactTriplet, Label, TemplateRegistry,
};

/// Answer given when the question cannot be resolved.
pub const UNKNOWN_ANSWER: &str = "unknown";

const GENERATION_MARKER: &str = "knowledge editing examples";
const GENERATION_COUNT_CUE: &str = "Please generate ";

pub fn is_self_check_prompt(prompt: &str) -> bool {
    prompt.contains(SELF_CHECK_QUESTION)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("({subject}, {relation}) already maps to {existing}, refusing {object}")]
    NotFunctional { subject: String, relation: String, existing: String, object: String },
    #[error("unknown entity in {0:?}")]
    UnknownEntity(String),
    #[error("no fact for ({subject}, {relation})")]
    MissingFact { subject: String, relation: String },
    #[error("reasoning_depth must be at least 1")]
    InvalidDepth,
}

/// (subject, relation) → object, shadowing the base graph.
pub type Overlay = BTreeMap<(String, String), String>;

/// Head entity plus relations in hop order, recovered from a question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionPath {
    pub head: String,
    pub relations: Vec<String>,
    /// The question restated as a noun phrase.
    pub phrase: String,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    triples: Vec<FactTriplet>,
    #[serde(default)]
    templates: TemplateRegistry,
}

/// Functional triple store: at most one object per (subject, relation).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct KnowledgeGraph {
    triples: BTreeMap<(String, String), String>,
    relations: BTreeSet<String>,
    /// Lowercased name → canonical entity.
    entities: HashMap<String, String>,
    templates: TemplateRegistry,
}

impl TryFrom<RawGraph> for KnowledgeGraph {
    type Error = OracleError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        let mut kg = KnowledgeGraph::new(raw.templates);
        for t in raw.triples {
            kg.insert(&t)?;
        }
        Ok(kg)
    }
}

impl From<KnowledgeGraph> for RawGraph {
    fn from(kg: KnowledgeGraph) -> Self {
        RawGraph { triples: kg.triples().collect(), templates: kg.templates }
    }
}

impl KnowledgeGraph {
    pub fn new(templates: TemplateRegistry) -> Self {
        Self { templates, ..Self::default() }
    }

    pub fn insert<F: Fact + ?Sized>(&mut self, fact: &F) -> Result<(), OracleError> {
        let key = (fact.subject().to_string(), fact.relation().to_string());
        if let Some(existing) = self.triples.get(&key) {
            if existing != fact.object() {
                return Err(OracleError::NotFunctional {
                    subject: key.0,
                    relation: key.1,
                    existing: existing.clone(),
                    object: fact.object().to_string(),
                });
            }
            return Ok(());
        }
        self.add_entity(fact.subject());
        self.add_entity(fact.object());
        self.relations.insert(key.1.clone());
        self.triples.insert(key, fact.object().to_string());
        Ok(())
    }

    /// Registers an entity that may appear without outgoing facts.
    pub fn add_entity(&mut self, name: &str) {
        self.entities.entry(name.to_lowercase()).or_insert_with(|| name.to_string());
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn templates_mut(&mut self) -> &mut TemplateRegistry {
        &mut self.templates
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn object(&self, subject: &str, relation: &str) -> Option<&str> {
        self.triples.get(&(subject.to_string(), relation.to_string())).map(String::as_str)
    }

    /// Canonical spelling of a known entity (case-insensitive lookup).
    pub fn entity(&self, name: &str) -> Option<&str> {
        self.entities.get(&name.trim().to_lowercase()).map(String::as_str)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    pub fn triples(&self) -> impl Iterator<Item = FactTriplet> + '_ {
        self.triples.iter().filter_map(|((s, r), o)| FactTriplet::new(s, r, o).ok())
    }

    /// Outgoing `(relation, object)` pairs of `subject`, sorted by relation.
    pub fn outgoing<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.triples
            .range((subject.to_string(), String::new())..)
            .take_while(move |((s, _), _)| s == subject)
            .map(|((_, r), o)| (r.as_str(), o.as_str()))
    }

    /// Follows `relations` from `head`, consulting `overlay` before the base
    /// graph at every hop.
    pub fn walk(&self, head: &str, relations: &[String], overlay: &Overlay) -> Result<Vec<FactTriplet>, OracleError> {
        let mut subject = head.to_string();
        let mut hops = Vec::with_capacity(relations.len());
        for relation in relations {
            let key = (subject.clone(), relation.clone());
            let object = overlay
                .get(&key)
                .or_else(|| self.triples.get(&key))
                .ok_or_else(|| OracleError::MissingFact { subject: subject.clone(), relation: relation.clone() })?;
            hops.push(
                FactTriplet::new(&subject, relation, object)
                    .map_err(|_| OracleError::UnknownEntity(subject.clone()))?,
            );
            subject = object.clone();
        }
        Ok(hops)
    }

    fn known_relations(&self) -> impl Iterator<Item = &str> {
        let extra = self.templates.relations().filter(|r| !self.relations.contains(*r));
        self.relations().chain(extra)
    }

    /// Peels phrase templates off `text` until a known entity remains.
    fn resolve_phrase(&self, text: &str, budget: usize) -> Option<(String, Vec<String>)> {
        if let Some(e) = self.entity(text) {
            return Some((e.to_string(), Vec::new()));
        }
        if budget == 0 {
            return None;
        }
        for relation in self.known_relations() {
            for phrase in self.templates.phrases(relation).iter() {
                for inner in phrase.unwrap(text) {
                    if let Some((head, mut rels)) = self.resolve_phrase(inner, budget - 1) {
                        rels.push(relation.to_string());
                        return Some((head, rels));
                    }
                }
            }
        }
        None
    }

    pub fn parse_question(&self, question: &str) -> Result<QuestionPath, OracleError> {
        let phrase = restate_question(question);
        const MAX_DEPTH: usize = 8;
        let (head, relations) = self
            .resolve_phrase(&phrase, MAX_DEPTH)
            .filter(|(_, rels)| !rels.is_empty())
            .ok_or_else(|| OracleError::UnknownEntity(phrase.clone()))?;
        Ok(QuestionPath { head, relations, phrase })
    }

    /// Every `(statement index, triplet)` readable from `statements` whose
    /// subject is a known entity.
    pub fn read_statements<'s>(&self, statements: impl IntoIterator<Item = &'s str>) -> Vec<(usize, FactTriplet)> {
        let relations: Vec<&str> = self.known_relations().collect();
        let mut found = Vec::new();
        for (index, text) in statements.into_iter().enumerate() {
            for relation in &relations {
                for (s, o) in self.templates.statement(relation).match_statement(text) {
                    let Some(subject) = self.entity(&s) else { continue };
                    let object = self.entity(&o).map(str::to_string).unwrap_or(o);
                    if let Ok(t) = FactTriplet::new(subject, relation, &object) {
                        found.push((index, t));
                    }
                }
            }
        }
        found
    }

    /// Overlay from injected statements; later statements win.
    pub fn overlay<'s>(&self, statements: impl IntoIterator<Item = &'s str>) -> Overlay {
        self.read_statements(statements)
            .into_iter()
            .map(|(_, t)| ((t.subject().to_string(), t.relation().to_string()), t.object().to_string()))
            .collect()
    }

    fn say(&self, hop: &FactTriplet) -> String {
        sentence(&self.templates.render(hop))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Hops resolvable without chain-of-thought demonstrations.
    pub reasoning_depth: usize,
    /// A well-formed thought demonstration lifts the depth limit.
    pub cot_sensitive: bool,
    /// Read `New fact:` and `Imagine that` statements into an overlay.
    pub honor_prompt_edits: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { reasoning_depth: 1, cot_sensitive: true, honor_prompt_edits: true }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.reasoning_depth == 0 {
            return Err(OracleError::InvalidDepth);
        }
        Ok(())
    }
}

fn well_formed_thought(demo: &Demonstration) -> bool {
    conclusion(demo.thought()).is_some()
}

fn cue_reply(cue: Option<Label>, thought: &str, answer: &str) -> String {
    match cue {
        Some(Label::Answer) => format!(" {answer}"),
        Some(Label::Thought) => format!(" {thought}\nAnswer: {answer}"),
        _ => format!("Thought: {thought}\nAnswer: {answer}"),
    }
}

fn section<'p>(prompt: &'p str, start: &str, end: &str) -> &'p str {
    let Some(from) = prompt.find(start).map(|i| i + start.len()) else {
        return "";
    };
    let rest = &prompt[from..];
    rest.find(end).map_or(rest, |i| &rest[..i]).trim()
}

fn self_check_reply(kg: &KnowledgeGraph, prompt: &str) -> String {
    let facts: Vec<&str> =
        section(prompt, FACTS_HEADER, REASONING_HEADER).lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let reasoning = section(prompt, REASONING_HEADER, SELF_CHECK_QUESTION);
    let claims: Vec<&str> = reasoning.lines().flat_map(split_sentences).collect();
    let stated = kg.read_statements(facts.iter().copied());
    let claimed = kg.read_statements(claims);
    for (index, fact) in &stated {
        let clash = claimed.iter().any(|(_, c)| {
            c.subject() == fact.subject()
                && c.relation() == fact.relation()
                && !c.object().eq_ignore_ascii_case(fact.object())
        });
        if clash {
            return format!("Yes. The retrieved fact states {}", sentence(facts[*index]));
        }
    }
    "No.".to_string()
}

fn requested_count(prompt: &str) -> usize {
    prompt
        .find(GENERATION_COUNT_CUE)
        .map(|i| &prompt[i + GENERATION_COUNT_CUE.len()..])
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(1)
}

/// Two-hop demonstrations drawn from the graph: an edit on the first hop
/// redirects the chain through another entity sharing the second relation.
fn generation_reply(kg: &KnowledgeGraph, prompt: &str) -> String {
    let k = requested_count(prompt).clamp(1, 64);
    let subjects: Vec<&str> = {
        let mut seen: Vec<&str> = kg.triples.keys().map(|(s, _)| s.as_str()).collect();
        seen.dedup();
        seen
    };
    if subjects.is_empty() {
        return String::new();
    }
    let offset = prompt.len() % subjects.len();
    let mut demos = Vec::new();
    for i in 0..subjects.len() {
        if demos.len() == k {
            break;
        }
        let head = subjects[(offset + i) % subjects.len()];
        let Some(demo) = demo_from(kg, head, i) else { continue };
        demos.push(demo);
    }
    render_demonstrations(&demos)
}

fn demo_from(kg: &KnowledgeGraph, head: &str, salt: usize) -> Option<Demonstration> {
    for (r1, old) in kg.outgoing(head) {
        for (r2, _) in kg.outgoing(old) {
            let candidates: Vec<&str> =
                kg.triples.keys().filter(|(s, r)| r == r2 && s != old && s != head).map(|(s, _)| s.as_str()).collect();
            if candidates.is_empty() {
                continue;
            }
            let new = candidates[salt % candidates.len()];
            let hops = kg
                .walk(
                    head,
                    &[r1.to_string(), r2.to_string()],
                    &Overlay::from([((head.to_string(), r1.to_string()), new.to_string())]),
                )
                .ok()?;
            let edit = &hops[0];
            let phrase = phrase_for(kg, head, &[r1, r2]);
            let mut thought: Vec<String> = hops.iter().map(|h| kg.say(h)).collect();
            thought.push(format!("Therefore, {phrase} is {}.", hops[1].object()));
            let question = format!("{}?", sentence(&format!("What is {phrase}")).trim_end_matches('.'));
            return Demonstration::new([kg.say(edit)], &question, &thought.join(" "), hops[1].object()).ok();
        }
    }
    None
}

fn phrase_for(kg: &KnowledgeGraph, head: &str, relations: &[&str]) -> String {
    relations
        .iter()
        .fold(head.to_string(), |inner, r| kg.templates.phrases(r).first().map_or(inner.clone(), |p| p.apply(&inner)))
}

/// Oracle reply to one prompt.
pub fn oracle_answer(kg: &KnowledgeGraph, cfg: &OracleConfig, prompt: &str) -> String {
    if is_self_check_prompt(prompt) {
        return self_check_reply(kg, prompt);
    }
    if prompt.contains(GENERATION_MARKER) {
        return generation_reply(kg, prompt);
    }
    let parsed = parse_prompt(prompt);
    let Some(question) = parsed.question.as_deref() else {
        return cue_reply(parsed.cue, "I cannot find a question.", UNKNOWN_ANSWER);
    };
    let overlay = if cfg.honor_prompt_edits { kg.overlay(parsed.injected()) } else { Overlay::new() };
    let resolved = kg
        .parse_question(question)
        .and_then(|path| kg.walk(&path.head, &path.relations, &overlay).map(|hops| (path, hops)));
    let (path, hops) = match resolved {
        Ok(found) => found,
        Err(e) => {
            log::debug!("oracle cannot resolve {question:?}: {e}");
            return cue_reply(parsed.cue, &format!("I cannot resolve {}.", restate_question(question)), UNKNOWN_ANSWER);
        }
    };
    let unlocked = cfg.cot_sensitive && parsed.demos.iter().any(well_formed_thought);
    let reach = if hops.len() <= cfg.reasoning_depth || unlocked { hops.len() } else { cfg.reasoning_depth };
    let answer = hops[reach - 1].object();
    let mut thought: Vec<String> = hops[..reach].iter().map(|h| kg.say(h)).collect();
    thought.push(format!("Therefore, {} is {answer}.", path.phrase));
    cue_reply(parsed.cue, &thought.join(" "), answer)
}

/// [`oracle_answer`] as a completion backend.
#[derive(Debug)]
pub struct OracleBackend {
    kg: Arc<KnowledgeGraph>,
    cfg: OracleConfig,
    calls: AtomicU64,
}

impl OracleBackend {
    pub fn new(kg: Arc<KnowledgeGraph>, cfg: OracleConfig) -> Result<Self, OracleError> {
        cfg.validate()?;
        Ok(Self { kg, cfg, calls: AtomicU64::new(0) })
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.kg
    }

    pub fn config(&self) -> OracleConfig {
        self.cfg
    }
}

impl CompletionBackend for OracleBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(oracle_answer(&self.kg, &self.cfg, &request.prompt))
    }

    fn identity(&self) -> String {
        format!(
            "kg-oracle/depth={}/cot_sensitive={}/honor_prompt_edits={}",
            self.cfg.reasoning_depth, self.cfg.cot_sensitive, self.cfg.honor_prompt_edits
        )
    }

    fn request_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
