//! Versioned edit store with latest-wins resolution, similarity retrieval
//! and the multi-round retrieve/self-check answering loop.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, CompletionBackend, CompletionRequest, Embedder};
use crate::model::{assemble_prompt, conclusion, split_sentences, Demonstration, Edit, TemplateRegistry};
use crate::refine::{EmbeddingVector, RefineError};

pub const SELF_CHECK_FACTS_HEADER: &str = "Retrieved facts:";
pub const SELF_CHECK_REASONING_HEADER: &str = "Reasoning:";
pub const SELF_CHECK_QUESTION: &str = "Does the above reasoning contradict any retrieved fact? Answer Yes or No.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("no live statement left to retrieve")]
    Exhausted,
    #[error("self-check verdict has no leading yes/no: {0:?}")]
    UnparseableVerdict(String),
    #[error("memory was embedded with {expected}, probe uses {got}")]
    EmbedderMismatch { expected: String, got: String },
    #[error("embedder returned {got} vectors for {expected} texts")]
    EmbeddingCount { expected: usize, got: usize },
    #[error("retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Maximum answering rounds.
    pub m: usize,
    /// Edit batch size sharing one memory.
    pub g: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { m: 4, g: 1 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.m == 0 {
            return Err(MemoryError::InvalidConfig("m must be at least 1".into()));
        }
        if self.g == 0 {
            return Err(MemoryError::InvalidConfig("g must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unit-normalized embedding kept as its non-zero components.
#[derive(Debug, Clone, PartialEq)]
struct SparseUnit {
    dim: usize,
    support: Vec<(u32, f64)>,
}

impl SparseUnit {
    fn new(v: &EmbeddingVector) -> Result<Self, RefineError> {
        let unit = v.normalized()?;
        Ok(Self { dim: unit.dim(), support: unit.support() })
    }

    fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.support.iter().map(|(i, v)| v * dense[*i as usize]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LiveEntry {
    key: (String, String),
    statement: String,
    embedding: SparseUnit,
    /// Global insertion sequence of the live edit; breaks score ties.
    seq: u64,
}

/// Immutable view of the live statements. Cheap to clone and share
/// across threads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemorySnapshot {
    live: Arc<Vec<LiveEntry>>,
    embedder: Option<String>,
}

impl MemorySnapshot {
    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn statements(&self) -> impl Iterator<Item = &str> {
        self.live.iter().map(|e| e.statement.as_str())
    }

    /// Live statement most similar to `probe`, skipping `exclude`. A
    /// statement scores its best cosine against any sentence of the probe.
    /// Equal scores go to the earlier insertion.
    pub fn retrieve_one<S: AsRef<str>>(
        &self,
        probe: &str,
        embedder: &dyn Embedder,
        exclude: &[S],
    ) -> Result<String, MemoryError> {
        let candidates: Vec<&LiveEntry> =
            self.live.iter().filter(|e| !exclude.iter().any(|x| x.as_ref() == e.statement)).collect();
        if candidates.is_empty() {
            return Err(MemoryError::Exhausted);
        }
        if let Some(expected) = &self.embedder {
            let got = embedder.identity();
            if &got != expected {
                return Err(MemoryError::EmbedderMismatch { expected: expected.clone(), got });
            }
        }
        let sentences = probe_sentences(probe);
        let vectors = embedder.embed(&sentences)?;
        if vectors.len() != sentences.len() {
            return Err(MemoryError::EmbeddingCount { expected: sentences.len(), got: vectors.len() });
        }
        let probes = vectors.iter().map(EmbeddingVector::normalized).collect::<Result<Vec<_>, _>>()?;
        let mut best: Option<(f64, &LiveEntry)> = None;
        for entry in candidates {
            let mut score = f64::NEG_INFINITY;
            for p in &probes {
                let dense = p.values();
                if entry.embedding.dim != dense.len() {
                    return Err(RefineError::DimensionMismatch { left: entry.embedding.dim, right: dense.len() }.into());
                }
                score = score.max(entry.embedding.dot_dense(dense));
            }
            let better = match best {
                None => true,
                Some((s, b)) => score > s || (score == s && entry.seq < b.seq),
            };
            if better {
                best = Some((score, entry));
            }
        }
        Ok(best.expect("non-empty candidates").1.statement.clone())
    }
}

/// Sentences of a probe that carry at least one word; the whole probe
/// when none do.
fn probe_sentences(probe: &str) -> Vec<&str> {
    let sentences: Vec<&str> =
        probe.lines().flat_map(split_sentences).filter(|s| s.chars().any(char::is_alphanumeric)).collect();
    if sentences.is_empty() {
        vec![probe]
    } else {
        sentences
    }
}

/// Edits by `(subject, relation)` key, each key's list in version order.
/// Only the highest version per key is live and retrievable.
#[derive(Debug, Clone, Default)]
pub struct EditMemory {
    templates: TemplateRegistry,
    entries: BTreeMap<(String, String), Vec<Edit>>,
    history: Vec<Edit>,
    slots: HashMap<(String, String), usize>,
    snapshot: MemorySnapshot,
    seq: u64,
}

impl EditMemory {
    /// Statements are rendered with `templates`.
    pub fn new(templates: TemplateRegistry) -> Self {
        Self { templates, ..Self::default() }
    }

    pub fn insert(&mut self, edit: Edit, embedder: &dyn Embedder) -> Result<(), MemoryError> {
        self.insert_all(std::iter::once(edit), embedder)
    }

    /// Inserts in order, embedding all new statements in one batch.
    pub fn insert_all(
        &mut self,
        edits: impl IntoIterator<Item = Edit>,
        embedder: &dyn Embedder,
    ) -> Result<(), MemoryError> {
        let edits: Vec<Edit> = edits.into_iter().collect();
        if edits.is_empty() {
            return Ok(());
        }
        let identity = embedder.identity();
        if let Some(expected) = &self.snapshot.embedder {
            if *expected != identity {
                return Err(MemoryError::EmbedderMismatch { expected: expected.clone(), got: identity });
            }
        }
        let statements: Vec<String> = edits.iter().map(|e| self.templates.render(e)).collect();
        let refs: Vec<&str> = statements.iter().map(String::as_str).collect();
        let vectors = embedder.embed(&refs)?;
        if vectors.len() != edits.len() {
            return Err(MemoryError::EmbeddingCount { expected: edits.len(), got: vectors.len() });
        }
        let embeddings = vectors.iter().map(SparseUnit::new).collect::<Result<Vec<_>, _>>()?;

        self.snapshot.embedder = Some(identity);
        let live = Arc::make_mut(&mut self.snapshot.live);
        for ((mut edit, statement), embedding) in edits.into_iter().zip(statements).zip(embeddings) {
            let key = (edit.key().0.to_string(), edit.key().1.to_string());
            let versions = self.entries.entry(key.clone()).or_default();
            edit.version = versions.last().map_or(1, |e| e.version + 1);
            versions.push(edit.clone());
            self.history.push(edit);
            self.seq += 1;
            let entry = LiveEntry { key: key.clone(), statement, embedding, seq: self.seq };
            match self.slots.get(&key) {
                Some(&slot) => live[slot] = entry,
                None => {
                    self.slots.insert(key, live.len());
                    live.push(entry);
                }
            }
        }
        Ok(())
    }

    /// The highest-version edit for a key.
    pub fn live(&self, subject: &str, relation: &str) -> Option<&Edit> {
        self.entries.get(&(subject.to_string(), relation.to_string())).and_then(|v| v.last())
    }

    /// All versions for a key, oldest first.
    pub fn versions(&self, subject: &str, relation: &str) -> &[Edit] {
        self.entries.get(&(subject.to_string(), relation.to_string())).map_or(&[], Vec::as_slice)
    }

    pub fn live_edits(&self) -> impl Iterator<Item = &Edit> {
        self.entries.values().filter_map(|v| v.last())
    }

    /// Every inserted edit in insertion order, superseded ones included.
    pub fn history(&self) -> &[Edit] {
        &self.history
    }

    pub fn live_count(&self) -> usize {
        self.snapshot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn live_statement(&self, subject: &str, relation: &str) -> Option<&str> {
        let slot = *self.slots.get(&(subject.to_string(), relation.to_string()))?;
        Some(self.snapshot.live[slot].statement.as_str())
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        self.snapshot.clone()
    }

    pub fn retrieve_one<S: AsRef<str>>(
        &self,
        probe: &str,
        embedder: &dyn Embedder,
        exclude: &[S],
    ) -> Result<String, MemoryError> {
        self.snapshot.retrieve_one(probe, embedder, exclude)
    }

    #[cfg(test)]
    fn caches_match_live(&self) -> bool {
        let live: Vec<_> = self.snapshot.live.iter().map(|e| e.key.clone()).collect();
        let keys: Vec<_> = self.entries.keys().cloned().collect();
        let mut sorted = live.clone();
        sorted.sort();
        sorted == keys
            && self.snapshot.live.iter().all(|e| {
                let edit = self.entries[&e.key].last().expect("non-empty");
                e.statement == self.templates.render(edit)
            })
    }
}

/// Outcome of a contradiction check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionVerdict {
    contradicts: bool,
    cited_fact: Option<String>,
}

impl ContradictionVerdict {
    pub fn consistent() -> Self {
        Self { contradicts: false, cited_fact: None }
    }

    pub fn contradiction(cited_fact: impl Into<String>) -> Self {
        Self { contradicts: true, cited_fact: Some(cited_fact.into()) }
    }

    pub fn contradicts(&self) -> bool {
        self.contradicts
    }

    pub fn cited_fact(&self) -> Option<&str> {
        self.cited_fact.as_deref()
    }
}

pub fn render_self_check_prompt<S: AsRef<str>>(facts: &[S], reasoning: &str) -> String {
    let facts: Vec<&str> = facts.iter().map(AsRef::as_ref).collect();
    format!(
        "{SELF_CHECK_FACTS_HEADER}\n{}\n\n{SELF_CHECK_REASONING_HEADER}\n{}\n\n{SELF_CHECK_QUESTION}",
        facts.join("\n"),
        reasoning.trim()
    )
}

/// Reads the leading yes/no. A "yes" cites the text that follows it, or
/// the first fact when nothing follows.
pub fn parse_verdict<S: AsRef<str>>(reply: &str, facts: &[S]) -> Result<ContradictionVerdict, MemoryError> {
    let trimmed = reply.trim_start();
    let word_end = trimmed.find(|c: char| !c.is_alphabetic()).unwrap_or(trimmed.len());
    let word = &trimmed[..word_end];
    if word.eq_ignore_ascii_case("no") {
        return Ok(ContradictionVerdict::consistent());
    }
    if !word.eq_ignore_ascii_case("yes") {
        return Err(MemoryError::UnparseableVerdict(reply.to_string()));
    }
    let rest = trimmed[word_end..]
        .trim_start_matches(|c: char| {
            c.is_whitespace() || c.is_ascii_punctuation() || c == '\u{2014}' || c == '\u{2013}'
        })
        .trim();
    let cited = if rest.is_empty() {
        facts.first().map(|f| f.as_ref().to_string()).unwrap_or_default()
    } else {
        rest.to_string()
    };
    Ok(ContradictionVerdict::contradiction(cited))
}

/// Asks `llm` whether `thought_and_answer` contradicts any of `facts`.
/// No facts means no contradiction and no backend call.
pub fn self_check<S: AsRef<str>>(
    llm: &dyn CompletionBackend,
    base: &CompletionRequest,
    facts: &[S],
    thought_and_answer: &str,
) -> Result<ContradictionVerdict, MemoryError> {
    if facts.is_empty() {
        return Ok(ContradictionVerdict::consistent());
    }
    let request = base.for_prompt(render_self_check_prompt(facts, thought_and_answer));
    let reply = llm.complete(&request)?;
    parse_verdict(&reply, facts)
}

/// Thought and answer from a completion that continues a `Thought:` cue.
/// The thought is the text after the last `Thought:` label (or from the
/// start) up to `Answer:`; the answer is the rest of that line.
pub fn extract_thought_answer(completion: &str) -> (String, String) {
    let body = completion.rfind("Thought:").map_or(completion, |i| &completion[i + "Thought:".len()..]);
    match body.find("Answer:") {
        Some(i) => {
            let answer = body[i + "Answer:".len()..].lines().next().unwrap_or("").trim();
            (body[..i].trim().to_string(), answer.to_string())
        }
        None => {
            let thought = body.trim();
            let answer = thought.lines().last().unwrap_or("").trim();
            (thought.to_string(), answer.to_string())
        }
    }
}

/// Retrieval probe for a thought: its hop sentences, without a closing
/// "Therefore, ..." restatement of the question.
pub fn retrieval_probe(thought: &str) -> &str {
    let thought = thought.trim();
    let sentences = split_sentences(thought);
    match sentences.last() {
        Some(last) if sentences.len() > 1 && conclusion(last).is_some() => {
            let cut = thought.len() - last.len();
            thought[..cut].trim_end()
        }
        _ => thought,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicOutcome {
    pub answer: String,
    /// Raw text of the final answering completion.
    pub completion: String,
    pub facts_used: Vec<String>,
    /// Answering completions issued.
    pub rounds: usize,
    pub self_checks: usize,
    /// The last round still disagreed with a retrieved fact.
    pub standing_contradiction: bool,
    pub memory_exhausted: bool,
}

/// Answers `question` over up to `cfg.m` rounds. Each round prompts with
/// the facts gathered so far, retrieves the unused live statement closest
/// to the produced thought, and self-checks the thought against it; a
/// contradiction adds that statement for the next round.
pub fn dynamic_answer(
    llm: &dyn CompletionBackend,
    memory: &MemorySnapshot,
    demos: &[Demonstration],
    question: &str,
    cfg: &RetrievalConfig,
    embedder: &dyn Embedder,
    base: &CompletionRequest,
) -> Result<DynamicOutcome, MemoryError> {
    cfg.validate()?;
    let mut out = DynamicOutcome {
        answer: String::new(),
        completion: String::new(),
        facts_used: Vec::new(),
        rounds: 0,
        self_checks: 0,
        standing_contradiction: false,
        memory_exhausted: false,
    };
    for round in 1..=cfg.m {
        let prompt = assemble_prompt(demos, &out.facts_used, question);
        let completion = llm.complete(&base.for_prompt(prompt.into_rendered()))?;
        out.rounds = round;
        let (thought, answer) = extract_thought_answer(&completion);
        out.answer = answer;
        out.completion = completion;
        let probe = if thought.is_empty() { out.completion.as_str() } else { retrieval_probe(&thought) };
        let candidate = match memory.retrieve_one(probe, embedder, &out.facts_used) {
            Ok(c) => c,
            Err(MemoryError::Exhausted) => {
                out.memory_exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        out.self_checks += 1;
        let reasoning = format!("{thought}\nAnswer: {}", out.answer);
        let contradicts = match self_check(llm, base, &[candidate.as_str()], &reasoning) {
            Ok(v) => v.contradicts(),
            Err(MemoryError::UnparseableVerdict(raw)) => {
                log::debug!("unparseable self-check reply {raw:?}, treating as contradiction");
                true
            }
            Err(e) => return Err(e),
        };
        if !contradicts {
            break;
        }
        if round < cfg.m {
            out.facts_used.push(candidate);
        } else {
            out.standing_contradiction = true;
        }
    }
    Ok(out)
}
