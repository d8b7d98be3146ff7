//! Demonstration sourcing: sample from a case corpus, or ask a model to
//! write them (with or without reference examples) and keep only the
//! well-formed ones.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, CompletionBackend, CompletionRequest};
use crate::model::{
    build_thought, parse_demonstration_block, render_demonstrations, render_statement, restate_question,
    split_labeled_blocks, Demonstration, ModelError, MultiHopCase, TemplateRegistry,
};

/// Extra generation calls allowed when a batch comes back short.
pub const GENERATION_RETRIES: usize = 3;

const GENERATION_HEAD: &str = "Your task is to generate knowledge editing examples for in context learning.\n\
You need to first generate the knowledge being edited (fact being changed) and then ask a question that requires multi-hop (multi-step) reasoning. Finally you need to provide a answer with step-by-step reasoning in concise format.\n\n";

const EXAMPLE_LABEL: &str = "Example:\n";

const GENERATION_FORMAT: &str = "Please respond in the following format without any markdown.\n\
New Fact: <knowledge being editted>\n\
Question: <question that requires multi-step reasoning>\n\
Thought: <step-by-step reasoning in concise format>\n\
Answer: <answer with step-by-step reasoning in concise format>\n\n";

const GENERATION_TAIL: &str = "Please generate {k} knowledge editing examples. Please respond only the generated examples in the above format without any markdown or additional text.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemoError {
    #[error("corpus yields {have} usable demonstrations, {need} requested")]
    CorpusTooSmall { have: usize, need: usize },
    #[error("no valid demonstrations in generated text")]
    NoValidDemonstrations,
    #[error("generation produced {got} valid demonstrations, at least {need} required")]
    TooFewDemonstrations { got: usize, need: usize },
    #[error("reference set must hold 1 to 5 demonstrations, got {0}")]
    ReferenceSetSize(usize),
    #[error("generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    FullShot,
    FewShot,
    ZeroShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: GenerationMode,
    /// Demonstrations placed in the final prompt.
    pub k: usize,
    /// Size of the pool drawn or generated before refinement.
    pub candidate_count: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { mode: GenerationMode::FullShot, k: 5, candidate_count: 20, seed: 0 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), DemoError> {
        if self.k == 0 {
            return Err(DemoError::InvalidConfig("k must be at least 1".into()));
        }
        if self.candidate_count < self.k {
            return Err(DemoError::InvalidConfig(format!(
                "candidate_count {} is smaller than k {}",
                self.candidate_count, self.k
            )));
        }
        Ok(())
    }
}

/// Hand-picked demonstrations guiding few-shot generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Demonstration>", into = "Vec<Demonstration>")]
pub struct ReferenceSet {
    demos: Vec<Demonstration>,
}

impl ReferenceSet {
    pub const MAX: usize = 5;

    pub fn new(demos: Vec<Demonstration>) -> Result<Self, DemoError> {
        if demos.is_empty() || demos.len() > Self::MAX {
            return Err(DemoError::ReferenceSetSize(demos.len()));
        }
        Ok(Self { demos })
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }
}

impl TryFrom<Vec<Demonstration>> for ReferenceSet {
    type Error = DemoError;

    fn try_from(demos: Vec<Demonstration>) -> Result<Self, Self::Error> {
        Self::new(demos)
    }
}

impl From<ReferenceSet> for Vec<Demonstration> {
    fn from(r: ReferenceSet) -> Self {
        r.demos
    }
}

/// Demonstration built from a case: its edits as new facts, its first
/// question, a thought walking the edited chain, and the gold answer.
pub fn demo_from_case(case: &MultiHopCase, templates: &TemplateRegistry) -> Result<Demonstration, ModelError> {
    let facts: Vec<String> = case.edits.iter().map(|e| render_statement(e, &templates.statement(e.key().1))).collect();
    let question = case
        .questions
        .first()
        .ok_or_else(|| ModelError::InvalidDemonstration(format!("case {} has no question", case.case_id)))?;
    let thought = build_thought(&case.edited_chain, &restate_question(question), templates);
    Demonstration::new(&facts, question, &thought, &case.gold_answer)
}

/// `cfg.candidate_count` demonstrations drawn uniformly without
/// replacement under `cfg.seed`. Cases that do not yield a valid
/// demonstration are passed over.
pub fn full_shot_select(
    corpus: &[MultiHopCase],
    templates: &TemplateRegistry,
    cfg: &GenerationConfig,
) -> Result<Vec<Demonstration>, DemoError> {
    cfg.validate()?;
    let need = cfg.candidate_count;
    if corpus.len() < need {
        return Err(DemoError::CorpusTooSmall { have: corpus.len(), need });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked = Vec::with_capacity(need);
    for i in index::sample(&mut rng, corpus.len(), corpus.len()) {
        match demo_from_case(&corpus[i], templates) {
            Ok(demo) => picked.push(demo),
            Err(e) => log::debug!("case {} skipped as demonstration: {e}", corpus[i].case_id),
        }
        if picked.len() == need {
            return Ok(picked);
        }
    }
    Err(DemoError::CorpusTooSmall { have: picked.len(), need })
}

/// The generation instruction asking for `k` examples, with the reference
/// demonstrations under an `Example:` line when given.
pub fn render_generation_prompt(refs: Option<&ReferenceSet>, k: usize) -> String {
    let mut out = String::from(GENERATION_HEAD);
    if let Some(refs) = refs {
        out.push_str(EXAMPLE_LABEL);
        out.push_str(&render_demonstrations(refs.demos()));
        out.push_str("\n\n");
    }
    out.push_str(GENERATION_FORMAT);
    out.push_str(&GENERATION_TAIL.replace("{k}", &k.to_string()));
    out
}

/// Valid demonstrations in document order; malformed blocks are dropped.
pub fn parse_generated(text: &str) -> Result<Vec<Demonstration>, DemoError> {
    let demos: Vec<Demonstration> = split_labeled_blocks(text)
        .iter()
        .filter_map(|block| match parse_demonstration_block(block) {
            Ok(d) => Some(d),
            Err(reason) => {
                log::debug!("dropping generated block: {reason}");
                None
            }
        })
        .collect();
    if demos.is_empty() {
        return Err(DemoError::NoValidDemonstrations);
    }
    Ok(demos)
}

/// Asks `llm` for `cfg.candidate_count` demonstrations. A short batch is
/// topped up with at most [`GENERATION_RETRIES`] further calls; exact
/// duplicates are kept once. A backend error on the first call is returned;
/// on a top-up call it ends the top-ups.
pub fn generate(
    llm: &dyn CompletionBackend,
    refs: Option<&ReferenceSet>,
    cfg: &GenerationConfig,
    base: &CompletionRequest,
) -> Result<Vec<Demonstration>, DemoError> {
    cfg.validate()?;
    match (cfg.mode, refs) {
        (GenerationMode::FewShot, Some(_)) | (GenerationMode::ZeroShot, None) => {}
        (mode, refs) => {
            return Err(DemoError::InvalidConfig(format!(
                "{mode:?} generation with{} references",
                if refs.is_some() { "" } else { "out" }
            )))
        }
    }
    let request = base.for_prompt(render_generation_prompt(refs, cfg.candidate_count));
    let mut pool: Vec<Demonstration> = Vec::new();
    for attempt in 0..=GENERATION_RETRIES {
        let reply = match llm.complete(&request) {
            Ok(r) => r,
            Err(e) if attempt == 0 => return Err(e.into()),
            Err(e) => {
                log::warn!("generation top-up {attempt} failed: {e}");
                break;
            }
        };
        match parse_generated(&reply) {
            Ok(demos) => {
                for d in demos {
                    if !pool.contains(&d) {
                        pool.push(d);
                    }
                }
            }
            Err(_) => log::debug!("generation attempt {attempt} yielded nothing usable"),
        }
        if pool.len() >= cfg.candidate_count {
            break;
        }
    }
    pool.truncate(cfg.candidate_count);
    match pool.len() {
        0 => Err(DemoError::NoValidDemonstrations),
        n if n < cfg.k => Err(DemoError::TooFewDemonstrations { got: n, need: cfg.k }),
        _ => Ok(pool),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::model::{render_demonstration, Edit, FactChain, FactTriplet};
    use proptest::prelude::*;

    fn t(s: &str, r: &str, o: &str) -> FactTriplet {
        FactTriplet::new(s, r, o).unwrap()
    }

    fn demo(i: usize) -> Demonstration {
        Demonstration::new(
            [format!("The author of Book{i} is Writer{i}.")],
            &format!("What is the nationality of the author of Book{i}?"),
            &format!("The author of Book{i} is Writer{i}. Writer{i} is a citizen of Land{i}. Therefore, the nationality of the author of Book{i} is Land{i}."),
            &format!("Land{i}"),
        )
        .unwrap()
    }

    fn misery_case(id: &str) -> MultiHopCase {
        MultiHopCase {
            case_id: id.into(),
            questions: vec!["What is the nationality of the author of Misery?".into()],
            original_chain: FactChain::new(vec![
                t("Misery", "author", "Stephen King"),
                t("Stephen King", "citizen", "United States of America"),
            ])
            .unwrap(),
            edited_chain: FactChain::new(vec![
                t("Misery", "author", "Richard Dawkins"),
                t("Richard Dawkins", "citizen", "United Kingdom"),
            ])
            .unwrap(),
            edits: vec![Edit::new(t("Misery", "author", "Stephen King"), "Richard Dawkins").unwrap()],
            gold_answer: "United Kingdom".into(),
            answer_aliases: vec![],
            hop_count: 2,
            tag: None,
        }
    }

    fn registry() -> TemplateRegistry {
        TemplateRegistry::new()
            .with_statement("author", "The author of {s} is {o}")
            .unwrap()
            .with_statement("citizen", "{s} is a citizen of {o}")
            .unwrap()
    }

    #[test]
    fn case_to_demo() {
        let d = demo_from_case(&misery_case("m"), &registry()).unwrap();
        assert_eq!(d.new_facts(), ["The author of Misery is Richard Dawkins"]);
        let expected_thought =
            build_thought(&misery_case("m").edited_chain, "the nationality of the author of Misery", &registry());
        assert_eq!(d.thought(), expected_thought);
        assert_eq!(d.answer(), "United Kingdom");
    }

    #[test]
    fn full_shot_is_seeded() {
        let corpus: Vec<_> = (0..30).map(|i| misery_case(&format!("c{i}"))).collect();
        let mut cfg = GenerationConfig { candidate_count: 10, ..GenerationConfig::default() };
        let a = full_shot_select(&corpus, &registry(), &cfg).unwrap();
        assert_eq!(a, full_shot_select(&corpus, &registry(), &cfg).unwrap());
        assert_eq!(a.len(), 10);
        cfg.candidate_count = 31;
        assert_eq!(full_shot_select(&corpus, &registry(), &cfg), Err(DemoError::CorpusTooSmall { have: 30, need: 31 }));
    }

    #[test]
    fn exhaustive_draw_is_a_permutation() {
        let corpus: Vec<_> = (0..6)
            .map(|i| {
                let mut c = misery_case(&format!("c{i}"));
                c.questions = vec![format!("What is the nationality of the author of Misery {i}?")];
                c
            })
            .collect();
        let cfg = GenerationConfig { k: 2, candidate_count: 6, ..GenerationConfig::default() };
        let got = full_shot_select(&corpus, &registry(), &cfg).unwrap();
        let mut qs: Vec<_> = got.iter().map(|d| d.question().to_string()).collect();
        qs.sort();
        let mut want: Vec<_> = corpus.iter().map(|c| c.questions[0].clone()).collect();
        want.sort();
        assert_eq!(qs, want);
    }

    #[test]
    fn zero_shot_prompt_has_no_example_line() {
        let p = render_generation_prompt(None, 5);
        assert!(p.contains("Please generate 5 knowledge editing examples"));
        assert!(!p.contains("Example:"));
        assert!(p.starts_with("Your task is to generate knowledge editing examples"));
    }

    #[test]
    fn few_shot_prompt_length() {
        let refs = ReferenceSet::new((0..5).map(demo).collect()).unwrap();
        let with = render_generation_prompt(Some(&refs), 20);
        let without = render_generation_prompt(None, 20);
        let rendered: usize = refs.demos().iter().map(|d| render_demonstration(d).len()).sum();
        let separators = 4 * "\n\n".len();
        assert_eq!(with.len(), without.len() + "Example:\n".len() + rendered + separators + "\n\n".len());
        let single = ReferenceSet::new(vec![demo(0)]).unwrap();
        let p = render_generation_prompt(Some(&single), 3);
        assert_eq!(p.matches("\nThought: The author").count(), 1);
    }

    #[test]
    fn reference_set_bounds() {
        assert_eq!(ReferenceSet::new(vec![]), Err(DemoError::ReferenceSetSize(0)));
        assert_eq!(ReferenceSet::new((0..6).map(demo).collect()), Err(DemoError::ReferenceSetSize(6)));
    }

    #[test]
    fn capitalized_fact_label() {
        let text = "New Fact: The author of Misery is Richard Dawkins.\n\
                    Question: What is the nationality of the author of Misery?\n\
                    Thought: The author of Misery is Richard Dawkins. Richard Dawkins is a citizen of the United Kingdom. Therefore, the nationality of the author of Misery is British.\n\
                    Answer: British";
        let d = parse_generated(text).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].answer(), "British");
    }

    #[test]
    fn broken_blocks_are_dropped() {
        let good = render_demonstrations(&[demo(1), demo(2)]);
        let bad = render_demonstration(&demo(3)).replace("Thought:", "Reasoning:");
        let got = parse_generated(&format!("{}\n\n{bad}\n\n{}", render_demonstration(&demo(0)), good)).unwrap();
        assert_eq!(got, [demo(0), demo(1), demo(2)]);
        assert_eq!(parse_generated("garbage"), Err(DemoError::NoValidDemonstrations));
    }

    #[test]
    fn generation_retries_after_garbage() {
        let valid = render_demonstrations(&(0..5).map(demo).collect::<Vec<_>>());
        let llm = ScriptedBackend::new(["nothing useful", valid.as_str()]);
        let cfg = GenerationConfig { mode: GenerationMode::ZeroShot, k: 5, candidate_count: 5, seed: 0 };
        let got = generate(&llm, None, &cfg, &CompletionRequest::new("")).unwrap();
        assert_eq!(got.len(), 5);
        assert_eq!(llm.calls(), 2);
    }

    #[test]
    fn generation_budget_is_bounded() {
        let llm = ScriptedBackend::new(vec![render_demonstration(&demo(0)); 10]);
        let cfg = GenerationConfig { mode: GenerationMode::ZeroShot, k: 1, candidate_count: 20, seed: 0 };
        let got = generate(&llm, None, &cfg, &CompletionRequest::new("")).unwrap();
        assert_eq!(got, [demo(0)]);
        assert_eq!(llm.calls(), 1 + GENERATION_RETRIES);
    }

    #[test]
    fn few_shot_sends_references() {
        let refs = ReferenceSet::new((0..5).map(demo).collect()).unwrap();
        let llm = ScriptedBackend::new([render_demonstrations(&(10..15).map(demo).collect::<Vec<_>>())]);
        let cfg = GenerationConfig { mode: GenerationMode::FewShot, k: 5, candidate_count: 5, seed: 0 };
        generate(&llm, Some(&refs), &cfg, &CompletionRequest::new("")).unwrap();
        let sent = &llm.prompts()[0];
        assert!(refs.demos().iter().all(|d| sent.contains(&render_demonstration(d))));
        let wrong = GenerationConfig { mode: GenerationMode::ZeroShot, ..cfg };
        assert!(matches!(
            generate(&llm, Some(&refs), &wrong, &CompletionRequest::new("")),
            Err(DemoError::InvalidConfig(_))
        ));
    }

    #[test]
    fn short_pool_below_k_is_an_error() {
        let llm = ScriptedBackend::new(vec![render_demonstration(&demo(0)); 4]);
        let cfg = GenerationConfig { mode: GenerationMode::ZeroShot, k: 2, candidate_count: 3, seed: 0 };
        assert_eq!(
            generate(&llm, None, &cfg, &CompletionRequest::new("")),
            Err(DemoError::TooFewDemonstrations { got: 1, need: 2 })
        );
    }

    proptest! {
        #[test]
        fn parse_inverts_render(ids in prop::collection::vec(0usize..1000, 1..8)) {
            let demos: Vec<_> = ids.into_iter().map(demo).collect();
            prop_assert_eq!(parse_generated(&render_demonstrations(&demos)).unwrap(), demos);
        }
    }
}
