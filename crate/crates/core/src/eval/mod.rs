//! Experiment runner: methods, per-case evaluation with paraphrase OR,
//! batched edit memories, and report aggregation.

mod judge;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    BackendError, CompletionBackend, CompletionRequest, Embedder, HashedBowEmbedder, KnowledgeGraph, OracleBackend,
    OracleConfig, RemoteClient, DEFAULT_BUCKETS,
};
use crate::dataset_io::{
    multi_time_transform, synth_generate, DatasetDescriptor, DatasetError, DatasetFormat, LoadedDataset,
};
use crate::demo_builder::{full_shot_select, generate, DemoError, GenerationConfig, GenerationMode, ReferenceSet};
use crate::edit_memory::{
    dynamic_answer, extract_thought_answer, DynamicOutcome, EditMemory, MemoryError, MemorySnapshot, RetrievalConfig,
};
use crate::exec::Execution;
use crate::model::{
    assemble_prompt, inject_edit_prefix, render_statement, Demonstration, Edit, Label, MultiHopCase, TemplateRegistry,
};
use crate::refine::{rank_vectors, EmbeddingVector, RefineError};

pub use judge::{judge, normalize};
pub use report::{
    render_comparison, render_csv, render_tables, report_emit, CaseRecord, ReportFormat, RunMetadata, RunReport,
    Summary, Tally, FULL_REPORT, PLOT_CSV, SUMMARY_REPORT, TABLES,
};

pub const STEP_BY_STEP: &str = "Think step by step.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("demonstrations: {0}")]
    Demo(#[from] DemoError),
    #[error("edit memory: {0}")]
    Memory(#[from] MemoryError),
    #[error("refine: {0}")]
    Refine(#[from] RefineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Demonstrations plus every edit of the case as new facts.
    Ripplecot,
    /// Demonstrations plus facts found by dynamic retrieval from a batch memory.
    RipplecotRetrieval,
    /// `Imagine that` edit lines, then the question.
    Ike,
    /// IKE with a step-by-step instruction after the question.
    Basecot,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ripplecot => "ripplecot",
            Method::RipplecotRetrieval => "ripplecot_retrieval",
            Method::Ike => "ike",
            Method::Basecot => "basecot",
        }
    }

    pub fn uses_demos(self) -> bool {
        matches!(self, Method::Ripplecot | Method::RipplecotRetrieval)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Oracle(OracleConfig),
    /// OpenAI-compatible endpoint configured from the environment.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashed { buckets: usize },
    Remote,
}

/// Where the candidate demonstrations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoSpec {
    pub mode: GenerationMode,
    /// Candidate pool size before refinement.
    pub candidate_count: usize,
    /// A JSONL file of demonstrations used instead of building a pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { mode: GenerationMode::FullShot, candidate_count: 20, path: None }
    }
}

/// Re-edit `sample` cases so each edited key holds `times` versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiTimeSpec {
    pub times: usize,
    pub sample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: DatasetDescriptor,
    /// Demonstrations in the prompt when refinement is off.
    pub k: usize,
    pub refine: bool,
    /// Demonstrations kept by refinement.
    pub t: usize,
    pub demos: DemoSpec,
    pub retrieval: RetrievalConfig,
    /// Evaluate only the first `n` cases; every case still contributes its
    /// edits to its batch memory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_time: Option<MultiTimeSpec>,
    pub backend: BackendSpec,
    pub embedder: EmbedderSpec,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Ripplecot,
            dataset: DatasetDescriptor::synthetic(Default::default()),
            k: 5,
            refine: true,
            t: 5,
            demos: DemoSpec::default(),
            retrieval: RetrievalConfig::default(),
            eval_limit: None,
            multi_time: None,
            backend: BackendSpec::Oracle(OracleConfig::default()),
            embedder: EmbedderSpec::Hashed { buckets: DEFAULT_BUCKETS },
            seed: 0,
            temperature: 0.0,
            max_tokens: CompletionRequest::DEFAULT_MAX_TOKENS,
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        if self.method.uses_demos() {
            if self.k == 0 || self.t == 0 {
                return bad("k and t must be at least 1");
            }
            let shown = if self.refine { self.t } else { self.k };
            if self.demos.path.is_none() && shown > self.demos.candidate_count {
                return bad("the demonstration pool must hold at least as many candidates as the prompt shows");
            }
        }
        if self.method == Method::RipplecotRetrieval {
            self.retrieval.validate().map_err(|e| EvalError::Config(e.to_string()))?;
            if self.retrieval.g == 0 {
                return bad("ripplecot_retrieval needs an edit batch size g >= 1");
            }
        }
        if let Some(mt) = &self.multi_time {
            if self.dataset.format != DatasetFormat::Synthetic {
                return bad("multi-time edits need a synthetic dataset");
            }
            if mt.times < 2 {
                return bad("multi-time edits need times >= 2");
            }
        }
        if self.eval_limit == Some(0) {
            return bad("eval_limit must be positive");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number");
        }
        if let EmbedderSpec::Hashed { buckets: 0 } = self.embedder {
            return bad("hashed embedder needs at least one bucket");
        }
        Ok(())
    }

    /// SHA-256 over the configuration with execution settings normalized.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.execution = Execution::Sequential;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn batch(&self) -> Option<usize> {
        (self.method == Method::RipplecotRetrieval).then_some(self.retrieval.g)
    }
}

/// Largest number of edits of the case sharing one key.
pub fn edit_multiplicity(case: &MultiHopCase) -> usize {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for e in &case.edits {
        *counts.entry(e.key()).or_default() += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

/// A graph holding the pre-edit world of loaded cases: every original hop
/// plus the edited-chain hops no edit asserts. Conflicting facts keep the
/// first seen.
pub fn graph_from_cases(cases: &[MultiHopCase], templates: &TemplateRegistry) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new(templates.clone());
    for case in cases {
        let asserted: HashSet<_> = case.edits.iter().map(Edit::edited).collect();
        let hops =
            case.original_chain.hops().iter().chain(case.edited_chain.hops().iter().filter(|h| !asserted.contains(*h)));
        for hop in hops {
            if let Err(e) = kg.insert(hop) {
                log::debug!("case {}: {e}", case.case_id);
            }
        }
    }
    kg
}

/// The IKE prompt: one `Imagine that` line per edit, a blank line, then the
/// question with an answer cue.
pub fn ike_prompt(case_edits: &[Edit], templates: &TemplateRegistry, question: &str, step_by_step: bool) -> String {
    let mut out: String = case_edits
        .iter()
        .map(|e| inject_edit_prefix(e, &templates.statement(e.key().1)))
        .collect::<Vec<_>>()
        .join("\n");
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str(&format!("{} {}\n", Label::Question.as_str(), question.trim()));
    if step_by_step {
        out.push_str(STEP_BY_STEP);
        out.push('\n');
    }
    out.push_str(Label::Answer.as_str());
    out
}

fn edit_statements(case: &MultiHopCase, templates: &TemplateRegistry) -> Vec<String> {
    case.edits.iter().map(|e| render_statement(e, &templates.statement(e.key().1))).collect()
}

/// Everything a run shares across cases, immutable while cases run.
pub struct Harness {
    cfg: RunConfig,
    llm: Arc<dyn CompletionBackend>,
    embedder: Arc<dyn Embedder>,
    data: LoadedDataset,
    demos: Vec<Demonstration>,
    demo_vectors: Vec<EmbeddingVector>,
    base: CompletionRequest,
}

struct Attempt {
    correct: bool,
    answer: String,
    rounds: usize,
    facts_used: Vec<String>,
    error: Option<String>,
}

impl Harness {
    /// Loads the dataset, connects backends and builds the demonstration pool.
    pub fn prepare(cfg: RunConfig) -> Result<Self, EvalError> {
        cfg.validate()?;
        let data = match cfg.multi_time {
            Some(mt) => {
                let syn = cfg.dataset.synthetic.clone().unwrap_or_default();
                let mut world = synth_generate(&syn)?;
                let out = multi_time_transform(&mut world, mt.times, mt.sample, mt.seed)?;
                let demo_corpus = world.cases.clone();
                let mut data = world.into_dataset();
                data.total_records = out.cases.len();
                data.quarantine.clear();
                data.cases = out.cases;
                return Self::with_demo_corpus(cfg, data, &demo_corpus);
            }
            None => cfg.dataset.load()?,
        };
        let corpus = data.cases.clone();
        Self::with_demo_corpus(cfg, data, &corpus)
    }

    fn with_demo_corpus(cfg: RunConfig, mut data: LoadedDataset, corpus: &[MultiHopCase]) -> Result<Self, EvalError> {
        let llm: Arc<dyn CompletionBackend> = match &cfg.backend {
            BackendSpec::Oracle(oc) => {
                let kg = data.graph.clone().unwrap_or_else(|| graph_from_cases(&data.cases, &data.templates));
                data.graph.get_or_insert_with(|| kg.clone());
                Arc::new(OracleBackend::new(Arc::new(kg), *oc).map_err(|e| EvalError::Config(e.to_string()))?)
            }
            BackendSpec::Remote => Arc::new(RemoteClient::from_env()?),
        };
        let embedder: Arc<dyn Embedder> = match &cfg.embedder {
            EmbedderSpec::Hashed { buckets } => Arc::new(HashedBowEmbedder::with_buckets(*buckets)),
            EmbedderSpec::Remote => Arc::new(RemoteClient::from_env()?),
        };
        let base = CompletionRequest::new("")
            .with_max_tokens(cfg.max_tokens)
            .with_temperature(cfg.temperature)
            .with_seed(Some(cfg.seed));
        let demos = if cfg.method.uses_demos() {
            build_demos(&cfg, corpus, &data.templates, llm.as_ref(), &base)?
        } else {
            Vec::new()
        };
        Self::from_parts(cfg, data, llm, embedder, demos)
    }

    /// A harness over already prepared pieces.
    pub fn from_parts(
        cfg: RunConfig,
        data: LoadedDataset,
        llm: Arc<dyn CompletionBackend>,
        embedder: Arc<dyn Embedder>,
        demos: Vec<Demonstration>,
    ) -> Result<Self, EvalError> {
        cfg.validate()?;
        let demo_vectors = if cfg.refine && !demos.is_empty() {
            let questions: Vec<&str> = demos.iter().map(Demonstration::question).collect();
            embedder.embed(&questions)?
        } else {
            Vec::new()
        };
        let base = CompletionRequest::new("")
            .with_max_tokens(cfg.max_tokens)
            .with_temperature(cfg.temperature)
            .with_seed(Some(cfg.seed));
        Ok(Self { cfg, llm, embedder, data, demos, demo_vectors, base })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &LoadedDataset {
        &self.data
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    /// Demonstrations shown for `question` of `case`: never ones built from
    /// the case itself; top-t by similarity with refinement, else the first k.
    fn demos_for(&self, case: &MultiHopCase, question: &str) -> Result<Vec<Demonstration>, EvalError> {
        self.demos_excluding(&case.questions, question)
    }

    fn demos_excluding(&self, own_questions: &[String], question: &str) -> Result<Vec<Demonstration>, EvalError> {
        let own = |d: &Demonstration| own_questions.iter().any(|q| q == d.question());
        if !self.cfg.refine {
            return Ok(self.demos.iter().filter(|d| !own(d)).take(self.cfg.k).cloned().collect());
        }
        let excluded = self.demos.iter().filter(|d| own(d)).count();
        let want = (self.cfg.t + excluded).min(self.demos.len());
        if want == 0 {
            return Ok(Vec::new());
        }
        let target = self.embedder.embed(&[question])?.pop().ok_or(BackendError::EmptyInput)?;
        Ok(rank_vectors(&target, &self.demo_vectors, want)?
            .into_iter()
            .map(|(i, _)| &self.demos[i])
            .filter(|d| !own(d))
            .take(self.cfg.t)
            .cloned()
            .collect())
    }

    fn attempt(
        &self,
        case: &MultiHopCase,
        question: &str,
        memory: Option<&MemorySnapshot>,
    ) -> Result<Attempt, EvalError> {
        let templates = &self.data.templates;
        let scored = |completion: String, rounds: usize, facts_used: Vec<String>| {
            let correct = judge(&completion, &case.gold_answer, &case.answer_aliases);
            let (_, answer) = extract_thought_answer(&completion);
            Attempt { correct, answer, rounds, facts_used, error: None }
        };
        match self.cfg.method {
            Method::Ike | Method::Basecot => {
                let prompt = ike_prompt(&case.edits, templates, question, self.cfg.method == Method::Basecot);
                Ok(scored(self.llm.complete(&self.base.for_prompt(prompt))?, 1, Vec::new()))
            }
            Method::Ripplecot => {
                let demos = self.demos_for(case, question)?;
                let facts = edit_statements(case, templates);
                let prompt = assemble_prompt(&demos, &facts, question).into_rendered();
                Ok(scored(self.llm.complete(&self.base.for_prompt(prompt))?, 1, facts))
            }
            Method::RipplecotRetrieval => {
                let demos = self.demos_for(case, question)?;
                let memory = memory.ok_or_else(|| EvalError::Config("retrieval run without a memory".into()))?;
                let out = dynamic_answer(
                    self.llm.as_ref(),
                    memory,
                    &demos,
                    question,
                    &self.cfg.retrieval,
                    self.embedder.as_ref(),
                    &self.base,
                )?;
                Ok(scored(out.completion, out.rounds, out.facts_used))
            }
        }
    }

    /// Runs every paraphrase in a fresh session; correct if any is.
    pub fn evaluate_case(
        &self,
        case: &MultiHopCase,
        memory: Option<&MemorySnapshot>,
        superseded: &HashSet<String>,
    ) -> CaseRecord {
        let mut attempts = Vec::with_capacity(case.questions.len());
        let mut verdicts = Vec::with_capacity(case.questions.len());
        let mut first_error = None;
        for q in case.questions.iter().take(MultiHopCase::MAX_QUESTIONS) {
            match self.attempt(case, q, memory) {
                Ok(a) => {
                    verdicts.push(a.correct);
                    attempts.push(a);
                }
                Err(e) => {
                    log::warn!("case {}: {e}", case.case_id);
                    verdicts.push(false);
                    let msg = e.to_string();
                    first_error.get_or_insert_with(|| msg.clone());
                    attempts.push(Attempt {
                        correct: false,
                        answer: String::new(),
                        rounds: 0,
                        facts_used: Vec::new(),
                        error: Some(msg),
                    });
                }
            }
        }
        let chosen = attempts.iter().position(|a| a.correct).unwrap_or(attempts.len().saturating_sub(1));
        let (answer, rounds, facts_used) = attempts
            .get_mut(chosen)
            .map(|a| (std::mem::take(&mut a.answer), a.rounds, std::mem::take(&mut a.facts_used)))
            .unwrap_or_default();
        let superseded_hits = attempts
            .iter()
            .flat_map(|a| a.facts_used.iter())
            .chain(facts_used.iter())
            .filter(|f| superseded.contains(*f))
            .count();
        let correct = verdicts.iter().any(|&v| v);
        CaseRecord {
            case_id: case.case_id.clone(),
            method: self.cfg.method,
            hop_count: case.hop_count,
            g: self.cfg.batch(),
            multiplicity: edit_multiplicity(case),
            correct,
            attempts: verdicts,
            answer,
            rounds,
            facts_used,
            superseded_hits,
            error: if correct { None } else { first_error.or_else(|| attempts.iter().find_map(|a| a.error.clone())) },
        }
    }

    fn failed_record(&self, case: &MultiHopCase, error: &EvalError) -> CaseRecord {
        CaseRecord {
            case_id: case.case_id.clone(),
            method: self.cfg.method,
            hop_count: case.hop_count,
            g: self.cfg.batch(),
            multiplicity: edit_multiplicity(case),
            correct: false,
            attempts: vec![false; case.questions.len().min(MultiHopCase::MAX_QUESTIONS)],
            answer: String::new(),
            rounds: 0,
            facts_used: Vec::new(),
            superseded_hits: 0,
            error: Some(error.to_string()),
        }
    }

    /// Memory for one batch. Edits go in round-major order: every case's
    /// first edit, then every second edit, so later versions of a key win.
    pub fn memory_for(&self, batch: &[MultiHopCase]) -> Result<EditMemory, EvalError> {
        let mut memory = EditMemory::new(self.data.templates.clone());
        let rounds = batch.iter().map(|c| c.edits.len()).max().unwrap_or(0);
        let ordered: Vec<Edit> =
            (0..rounds).flat_map(|r| batch.iter().filter_map(move |c| c.edits.get(r).cloned())).collect();
        memory.insert_all(ordered, self.embedder.as_ref())?;
        Ok(memory)
    }

    /// Answers a free-form question by dynamic retrieval over `memory`.
    pub fn ask(&self, memory: &MemorySnapshot, question: &str) -> Result<DynamicOutcome, EvalError> {
        let demos = if self.cfg.method.uses_demos() { self.demos_excluding(&[], question)? } else { Vec::new() };
        Ok(dynamic_answer(
            self.llm.as_ref(),
            memory,
            &demos,
            question,
            &self.cfg.retrieval,
            self.embedder.as_ref(),
            &self.base,
        )?)
    }

    fn batch_memory(&self, batch: &[MultiHopCase]) -> Result<(MemorySnapshot, HashSet<String>), EvalError> {
        let memory = self.memory_for(batch)?;
        let snapshot = memory.snapshot();
        let live: HashSet<&str> = snapshot.statements().collect();
        let superseded = memory
            .history()
            .iter()
            .map(|e| render_statement(e, &self.data.templates.statement(e.key().1)))
            .filter(|s| !live.contains(s.as_str()))
            .collect();
        Ok((snapshot, superseded))
    }

    pub fn run(&self) -> RunReport {
        let cases = &self.data.cases;
        let limit = self.cfg.eval_limit.unwrap_or(cases.len()).min(cases.len());
        let mut records = Vec::with_capacity(limit);
        match self.cfg.batch() {
            Some(g) => {
                for (b, batch) in cases.chunks(g).enumerate() {
                    let start = b * g;
                    if start >= limit {
                        break;
                    }
                    let evaluated = &batch[..(limit - start).min(batch.len())];
                    match self.batch_memory(batch) {
                        Ok((snapshot, superseded)) => records.extend(
                            self.cfg.execution.map(evaluated, |c| self.evaluate_case(c, Some(&snapshot), &superseded)),
                        ),
                        Err(e) => {
                            log::warn!("batch {b}: {e}");
                            records.extend(evaluated.iter().map(|c| self.failed_record(c, &e)));
                        }
                    }
                }
            }
            None => {
                let none = HashSet::new();
                records = self.cfg.execution.map(&cases[..limit], |c| self.evaluate_case(c, None, &none));
            }
        }
        RunReport::new(self.metadata(limit), records)
    }

    fn metadata(&self, evaluated: usize) -> RunMetadata {
        let cfg = &self.cfg;
        let dataset = match (&cfg.dataset.split, cfg.dataset.format) {
            (Some(s), DatasetFormat::Synthetic) => s.clone(),
            (Some(s), f) => format!("{}/{s}", format_name(f)),
            (None, f) => format_name(f).to_string(),
        };
        RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            method: cfg.method,
            dataset: if cfg.multi_time.is_some() { format!("{dataset}/multi-time") } else { dataset },
            cases_loaded: self.data.cases.len(),
            cases_evaluated: evaluated,
            quarantined: self.data.quarantine.len(),
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
            backend: self.llm.identity(),
            embedder: self.embedder.identity(),
            temperature: cfg.temperature,
            k: cfg.k,
            t: cfg.t,
            refine: cfg.refine,
            m: cfg.retrieval.m,
            g: cfg.batch(),
            demo_source: match (&cfg.demos.path, cfg.demos.mode) {
                (Some(p), _) => format!("file:{}", p.display()),
                (None, GenerationMode::FullShot) => "full_shot".into(),
                (None, GenerationMode::FewShot) => "few_shot".into(),
                (None, GenerationMode::ZeroShot) => "zero_shot".into(),
            },
            demo_pool: self.demos.len(),
            demo_dedup: false,
            similarity: "cosine".into(),
            paraphrase_sessions: "fresh".into(),
        }
    }
}

fn format_name(f: DatasetFormat) -> &'static str {
    match f {
        DatasetFormat::Mquake => "mquake",
        DatasetFormat::Rippleedit => "rippleedit",
        DatasetFormat::Synthetic => "synthetic",
        DatasetFormat::Normalized => "normalized",
    }
}

/// Reads demonstrations, one JSON object per line.
pub fn read_demos(path: &std::path::Path) -> Result<Vec<Demonstration>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io { path: path.to_path_buf(), source: e })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Report(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// The candidate pool for a run: read from file, drawn from the corpus, or
/// generated by the backend (few-shot references come from the corpus).
pub fn build_demos(
    cfg: &RunConfig,
    corpus: &[MultiHopCase],
    templates: &TemplateRegistry,
    llm: &dyn CompletionBackend,
    base: &CompletionRequest,
) -> Result<Vec<Demonstration>, EvalError> {
    if let Some(path) = &cfg.demos.path {
        return read_demos(path);
    }
    let gen = GenerationConfig {
        mode: cfg.demos.mode,
        k: cfg.k.min(cfg.demos.candidate_count),
        candidate_count: cfg.demos.candidate_count,
        seed: cfg.seed,
    };
    Ok(match cfg.demos.mode {
        GenerationMode::FullShot => full_shot_select(corpus, templates, &gen)?,
        GenerationMode::FewShot => {
            let refs_cfg =
                GenerationConfig { mode: GenerationMode::FullShot, k: 1, candidate_count: ReferenceSet::MAX, ..gen };
            let refs = ReferenceSet::new(full_shot_select(corpus, templates, &refs_cfg)?)?;
            generate(llm, Some(&refs), &gen, base)?
        }
        GenerationMode::ZeroShot => generate(llm, None, &gen, base)?,
    })
}

/// Runs `cfg` end to end.
pub fn run(cfg: RunConfig) -> Result<RunReport, EvalError> {
    Ok(Harness::prepare(cfg)?.run())
}
