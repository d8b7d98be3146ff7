//! Seeded synthetic worlds: a functional graph over readable tokens
//! ("E00017-kalomi", "R03-capital") and multi-hop edit cases on it.
//!
//! Every case owns freshly minted entities for its original chain, its
//! post-edit chain and (with two edits) the chain after the second edit,
//! so cases share relations but never entities.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LoadedDataset};
use crate::backends::{HashedBowEmbedder, KnowledgeGraph, Overlay, DEFAULT_BUCKETS};
use crate::model::{
    Edit, Fact, FactChain, FactTriplet, MultiHopCase, PhraseTemplate, PromptTemplate, TemplateRegistry, GENERIC_PHRASE,
    GENERIC_STATEMENT, QUESTION_OPENERS,
};

const RELATION_WORDS: &[&str] = &[
    "capital", "author", "founder", "spouse", "mentor", "origin", "owner", "leader", "neighbor", "partner", "rival",
    "sponsor", "heir", "patron", "ally", "agent", "editor", "pilot", "keeper", "tutor", "envoy", "curator", "herald",
    "warden",
];
const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
/// Words of every prompt, thought and self-check scaffold.
const SCAFFOLD_WORDS: &[&str] = &[
    "the",
    "of",
    "is",
    "therefore",
    "thus",
    "new",
    "fact",
    "facts",
    "question",
    "thought",
    "answer",
    "imagine",
    "that",
    "retrieved",
    "reasoning",
    "does",
    "above",
    "contradict",
    "any",
    "yes",
    "no",
    "or",
    "states",
    "think",
    "step",
    "by",
];
pub(crate) const QUESTION_FORMS: [&str; 3] = ["What is {}?", "Which entity is {}?", "Can you name {}?"];
const TAG: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Upper bound on minted entities.
    pub entity_count: usize,
    pub relation_count: usize,
    pub case_count: usize,
    /// Hop count → proportion of cases.
    pub hop_mix: BTreeMap<usize, f64>,
    pub edits_per_case: usize,
    pub seed: u64,
    /// Bucket count of the embedder whose scaffold buckets names avoid.
    pub buckets: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            entity_count: 50_000,
            relation_count: 16,
            case_count: 200,
            hop_mix: BTreeMap::from([(2, 0.34), (3, 0.33), (4, 0.33)]),
            edits_per_case: 1,
            seed: 0,
            buckets: DEFAULT_BUCKETS,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if self.entity_count == 0 || self.relation_count == 0 || self.case_count == 0 || self.buckets == 0 {
            return bad("entity_count, relation_count, case_count and buckets must be positive".into());
        }
        if !matches!(self.edits_per_case, 1 | 2) {
            return bad(format!("edits_per_case must be 1 or 2, got {}", self.edits_per_case));
        }
        if self.hop_mix.is_empty() {
            return bad("hop_mix is empty".into());
        }
        for (&hops, &p) in &self.hop_mix {
            if !(2..=4).contains(&hops) {
                return bad(format!("hop_mix key {hops} outside 2..=4"));
            }
            if !p.is_finite() || p < 0.0 {
                return bad(format!("hop_mix[{hops}] = {p} is not a proportion"));
            }
        }
        let total: f64 = self.hop_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("hop_mix proportions sum to {total}, not 1"));
        }
        Ok(())
    }

    /// Case count per hop length by largest remainder.
    pub fn hop_counts(&self) -> BTreeMap<usize, usize> {
        let n = self.case_count;
        let quotas: Vec<(usize, f64)> = self.hop_mix.iter().map(|(&h, &p)| (h, p * n as f64)).collect();
        let mut counts: BTreeMap<usize, usize> = quotas.iter().map(|&(h, q)| (h, q.floor() as usize)).collect();
        let mut left = n - counts.values().sum::<usize>();
        let mut by_remainder = quotas.clone();
        by_remainder.sort_by(|a, b| (b.1 - b.1.floor()).total_cmp(&(a.1 - a.1.floor())).then(a.0.cmp(&b.0)));
        for (h, _) in by_remainder.iter().cycle() {
            if left == 0 {
                break;
            }
            *counts.get_mut(h).expect("quota key") += 1;
            left -= 1;
        }
        counts
    }

    fn entities_needed(&self) -> usize {
        self.hop_counts()
            .iter()
            .map(|(&h, &c)| c * (2 * h + 1 + if self.edits_per_case == 2 { h - 1 } else { 0 }))
            .sum()
    }
}

/// Mints unique two-token entity names whose tokens avoid scaffold buckets.
#[derive(Debug, Clone)]
struct Namer {
    embedder: HashedBowEmbedder,
    reserved: HashSet<usize>,
    used_words: HashSet<String>,
    next_id: usize,
    minted: usize,
    budget: usize,
    rng: ChaCha8Rng,
}

impl Namer {
    fn new(cfg: &SyntheticConfig, reserved_tokens: &[String]) -> Self {
        let embedder = HashedBowEmbedder::with_buckets(cfg.buckets);
        let reserved = reserved_tokens.iter().map(|t| embedder.bucket(t)).collect();
        let used_words = reserved_tokens.iter().cloned().collect();
        Self {
            embedder,
            reserved,
            used_words,
            next_id: 0,
            minted: 0,
            budget: cfg.entity_count,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0e17),
        }
    }

    fn clear(&self, token: &str) -> bool {
        !self.reserved.contains(&self.embedder.bucket(token))
    }

    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    let on = ONSETS[self.rng.random_range(0..ONSETS.len())];
                    let v = VOWELS[self.rng.random_range(0..VOWELS.len())];
                    format!("{on}{v}")
                })
                .collect();
            if self.clear(&w) && self.used_words.insert(w.clone()) {
                return w;
            }
        }
    }

    fn mint(&mut self) -> Result<String, DatasetError> {
        if self.minted >= self.budget {
            return Err(DatasetError::GenerationExhausted(format!("entity budget {} used up", self.budget)));
        }
        let id = loop {
            let id = format!("e{:05}", self.next_id);
            self.next_id += 1;
            if self.clear(&id) {
                break id;
            }
        };
        let word = self.word();
        self.minted += 1;
        Ok(format!("E{}-{word}", &id[1..]))
    }
}

/// A generated graph with its cases.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub kg: KnowledgeGraph,
    pub cases: Vec<MultiHopCase>,
    pub cfg: SyntheticConfig,
    namer: Namer,
}

impl SyntheticWorld {
    pub fn into_dataset(self) -> LoadedDataset {
        let mut data = LoadedDataset { templates: self.kg.templates().clone(), ..LoadedDataset::default() };
        for (i, case) in self.cases.into_iter().enumerate() {
            data.admit(i, case);
        }
        data.graph = Some(self.kg);
        data
    }

    /// Adds a fresh chain `start -r-> x1 -r'-> x2 ...` over `relations`.
    fn extend_fresh(&mut self, start: &str, relations: &[String]) -> Result<Vec<FactTriplet>, DatasetError> {
        let mut hops = Vec::with_capacity(relations.len());
        let mut subject = start.to_string();
        for r in relations {
            let object = self.namer.mint()?;
            let hop = triplet(&subject, r, &object);
            self.kg.insert(&hop).map_err(|e| DatasetError::GenerationExhausted(e.to_string()))?;
            hops.push(hop);
            subject = object;
        }
        Ok(hops)
    }
}

fn triplet(s: &str, r: &str, o: &str) -> FactTriplet {
    FactTriplet::new(s, r, o).expect("generated names are non-empty")
}

fn relation_names(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("R{:02}-{}", i + 1, RELATION_WORDS[i % RELATION_WORDS.len()])).collect()
}

/// Question paraphrases asking for the tail of `relations` walked from `head`.
pub fn synthetic_questions(templates: &TemplateRegistry, head: &str, relations: &[String]) -> Vec<String> {
    let phrase = relations.iter().fold(head.to_string(), |inner, r| templates.phrases(r)[0].apply(&inner));
    QUESTION_FORMS.iter().map(|form| form.replace("{}", &phrase)).collect()
}

pub fn synth_generate(cfg: &SyntheticConfig) -> Result<SyntheticWorld, DatasetError> {
    cfg.validate()?;
    let longest = cfg.hop_mix.iter().filter(|(_, &p)| p > 0.0).map(|(&h, _)| h).max().unwrap_or(2);
    if cfg.relation_count < longest {
        return Err(DatasetError::GenerationExhausted(format!(
            "{longest}-hop chains need {longest} distinct relations, have {}",
            cfg.relation_count
        )));
    }
    let needed = cfg.entities_needed();
    if needed > cfg.entity_count {
        return Err(DatasetError::GenerationExhausted(format!(
            "{} cases need {needed} entities, budget is {}",
            cfg.case_count, cfg.entity_count
        )));
    }

    let relations = relation_names(cfg.relation_count);
    let mut templates = TemplateRegistry::new();
    for r in &relations {
        templates.insert_statement(
            r,
            PromptTemplate::new(GENERIC_STATEMENT.replace("{relation}", r)).expect("generic statement"),
        );
        templates
            .insert_phrase(r, PhraseTemplate::new(GENERIC_PHRASE.replace("{relation}", r)).expect("generic phrase"));
    }
    let mut reserved: BTreeSet<String> = SCAFFOLD_WORDS.iter().map(|w| w.to_string()).collect();
    for text in QUESTION_OPENERS.iter().chain(&QUESTION_FORMS).map(|s| s.to_string()).chain(relations.iter().cloned()) {
        reserved.extend(HashedBowEmbedder::tokens(&text));
    }
    let reserved: Vec<String> = reserved.into_iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hop_plan: Vec<usize> = cfg.hop_counts().into_iter().flat_map(|(h, c)| std::iter::repeat_n(h, c)).collect();
    hop_plan.shuffle(&mut rng);

    let mut world = SyntheticWorld {
        kg: KnowledgeGraph::new(templates),
        cases: Vec::with_capacity(cfg.case_count),
        cfg: cfg.clone(),
        namer: Namer::new(cfg, &reserved),
    };
    for (i, &hops) in hop_plan.iter().enumerate() {
        let path: Vec<String> = rand::seq::index::sample(&mut rng, relations.len(), hops)
            .into_iter()
            .map(|j| relations[j].clone())
            .collect();
        let head = world.namer.mint()?;
        world.kg.add_entity(&head);
        let original = world.extend_fresh(&head, &path)?;

        let b1 = world.namer.mint()?;
        let mut edits = vec![Edit::new(original[0].clone(), &b1).expect("fresh object")];
        let mut edited = vec![triplet(&head, &path[0], &b1)];
        edited.extend(world.extend_fresh(&b1, &path[1..])?);
        if cfg.edits_per_case == 2 {
            let c2 = world.namer.mint()?;
            edits.push(Edit::new(edited[1].clone(), &c2).expect("fresh object"));
            edited.truncate(1);
            edited.push(triplet(&b1, &path[1], &c2));
            edited.extend(world.extend_fresh(&c2, &path[2..])?);
        }
        let edited_chain = FactChain::new(edited).expect("linked by construction");
        world.cases.push(MultiHopCase {
            case_id: format!("syn-{i:05}"),
            questions: synthetic_questions(world.kg.templates(), &head, &path),
            gold_answer: edited_chain.answer().to_string(),
            answer_aliases: Vec::new(),
            hop_count: hops,
            original_chain: FactChain::new(original).expect("linked by construction"),
            edited_chain,
            edits,
            tag: Some(TAG.into()),
        });
    }
    Ok(world)
}

/// Edits in insertion order plus the cases they make true.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultiTimeOutput {
    /// Round-major: every case's first version, then every second version, ...
    pub edits: Vec<Edit>,
    pub cases: Vec<MultiHopCase>,
}

/// Replays `edits` (later ones win per key) on the graph along the case's
/// question path and returns the case with its edited chain and gold answer
/// recomputed.
pub fn apply_edit_sequence(
    kg: &KnowledgeGraph,
    case: &MultiHopCase,
    edits: &[Edit],
) -> Result<MultiHopCase, DatasetError> {
    let overlay: Overlay = edits
        .iter()
        .map(|e| ((e.base.subject().to_string(), e.base.relation().to_string()), e.new_object.clone()))
        .collect();
    let relations: Vec<String> = case.original_chain.relations().map(str::to_string).collect();
    let hops = kg
        .walk(case.original_chain.head(), &relations, &overlay)
        .map_err(|e| DatasetError::InvalidConfig(format!("case {}: {e}", case.case_id)))?;
    let edited_chain = FactChain::new(hops).map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
    let on_path: Vec<Edit> = edits
        .iter()
        .filter(|e| edited_chain.contains(&e.edited()) || case.original_chain.contains(&e.base))
        .cloned()
        .collect();
    Ok(MultiHopCase {
        gold_answer: edited_chain.answer().to_string(),
        answer_aliases: Vec::new(),
        hop_count: edited_chain.len(),
        edited_chain,
        edits: on_path,
        ..case.clone()
    })
}

/// Re-edits the first-edit key of `sample` seeded-random cases `times`
/// times in total. Version 1 is the case's own first edit; each later
/// version points at a fresh object with its own continuation chain.
pub fn multi_time_transform(
    world: &mut SyntheticWorld,
    times: usize,
    sample: usize,
    seed: u64,
) -> Result<MultiTimeOutput, DatasetError> {
    if sample == 0 {
        return Ok(MultiTimeOutput::default());
    }
    if times < 2 {
        return Err(DatasetError::InvalidConfig(format!("times must be at least 2, got {times}")));
    }
    if sample > world.cases.len() {
        return Err(DatasetError::InvalidConfig(format!("sample {sample} exceeds {} cases", world.cases.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, world.cases.len(), sample).into_vec();
    picked.sort_unstable();

    let mut versions: Vec<Vec<Edit>> = Vec::with_capacity(sample);
    for &ci in &picked {
        let case = world.cases[ci].clone();
        let first = case
            .edits
            .first()
            .ok_or_else(|| DatasetError::InvalidConfig(format!("case {} has no edit", case.case_id)))?;
        let mut chain = vec![Edit { version: 1, ..first.clone() }];
        let relations: Vec<String> = case.original_chain.relations().skip(1).map(str::to_string).collect();
        for v in 2..=times {
            let prev = chain.last().expect("non-empty").edited();
            let fresh = world.namer.mint()?;
            world.kg.add_entity(&fresh);
            world.extend_fresh(&fresh, &relations)?;
            chain.push(Edit { version: v as u64, ..Edit::new(prev, &fresh).expect("fresh object") });
        }
        versions.push(chain);
    }

    let mut out = MultiTimeOutput::default();
    for round in 0..times {
        out.edits.extend(versions.iter().map(|chain| chain[round].clone()));
    }
    for (&ci, chain) in picked.iter().zip(&versions) {
        out.cases.push(apply_edit_sequence(&world.kg, &world.cases[ci], chain)?);
    }
    Ok(out)
}
