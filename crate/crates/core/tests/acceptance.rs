//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance is pinned below.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ripplecot::backends::{BackendError, CompletionRequest, Embedder, ScriptedBackend};
use ripplecot::dataset_io::{load_mquake, load_rippleedit, DatasetDescriptor, SyntheticConfig};
use ripplecot::demo_builder::{
    generate, parse_generated, DemoError, GenerationConfig, GenerationMode, GENERATION_RETRIES,
};
use ripplecot::eval::{run, Method, MultiTimeSpec, RunConfig, RunReport};
use ripplecot::exec::Execution;
use ripplecot::model::{assemble_prompt, parse_prompt, render_demonstrations, Demonstration};
use ripplecot::refine::{cosine, rank_top_t, EmbeddingVector, RefineConfig};

const SUITE_CASES: usize = 200;
const SUITE_SEED: u64 = 7;
const RIPPLECOT_REQUIRED_PCT: f64 = 100.0;
const IKE_REQUIRED_PCT: f64 = 0.0;
const HOP_SPREAD_MAX_PTS: f64 = 2.0;
const BATCH_G: usize = 3000;
const BATCH_GAP_MAX_PTS: f64 = 5.0;
const MULTI_TIME_TIMES: usize = 2;
const MULTI_TIME_SAMPLE: usize = 200;
const MULTI_TIME_DROP_MAX_PTS: f64 = 2.0;
const RANK_POOLS: usize = 1000;
const COSINE_PAIRS: usize = 10_000;
const COSINE_TOL: f64 = 1e-9;
const FAST_BUDGET: Duration = Duration::from_secs(60);
const SLOW_BUDGET: Duration = Duration::from_secs(300);

fn suite(cases: usize) -> SyntheticConfig {
    SyntheticConfig { case_count: cases, seed: SUITE_SEED, ..SyntheticConfig::default() }
}

fn config(method: Method, cases: usize) -> RunConfig {
    RunConfig { method, dataset: DatasetDescriptor::synthetic(suite(cases)), seed: SUITE_SEED, ..RunConfig::default() }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    check(took <= budget, format!("took {took:.1?}, budget {budget:?}"))?;
    Ok(took)
}

fn pct(correct: usize, cases: usize) -> f64 {
    100.0 * correct as f64 / cases as f64
}

fn c1_mechanism_separation() -> Result<String, String> {
    let start = Instant::now();
    let ripple = run(config(Method::Ripplecot, SUITE_CASES)).map_err(|e| e.to_string())?;
    let ike = run(config(Method::Ike, SUITE_CASES)).map_err(|e| e.to_string())?;
    let took = within(start, FAST_BUDGET)?;
    let multi = |r: &RunReport| {
        let rs: Vec<_> = r.records.iter().filter(|c| c.hop_count >= 2).collect();
        (rs.iter().filter(|c| c.correct).count(), rs.len())
    };
    let (rc, rn) = multi(&ripple);
    let (ic, in_) = multi(&ike);
    check(rn == SUITE_CASES && in_ == SUITE_CASES, format!("expected {SUITE_CASES} multi-hop cases, got {rn}/{in_}"))?;
    let (ra, ia) = (pct(rc, rn), pct(ic, in_));
    check(ra == RIPPLECOT_REQUIRED_PCT, format!("ripplecot {ra:.1}% != {RIPPLECOT_REQUIRED_PCT}%"))?;
    check(ia == IKE_REQUIRED_PCT, format!("ike {ia:.1}% != {IKE_REQUIRED_PCT}%"))?;
    Ok(format!("ripplecot {ra:.1}% vs ike {ia:.1}% on {rn} multi-hop cases ({took:.1?})"))
}

fn c2_hop_flatness() -> Result<String, String> {
    let start = Instant::now();
    let report = run(config(Method::Ripplecot, SUITE_CASES)).map_err(|e| e.to_string())?;
    let took = within(start, FAST_BUDGET)?;
    let accs: Vec<(usize, f64)> = report.summary.by_hop.iter().map(|(h, t)| (*h, t.accuracy())).collect();
    check(accs.len() == 3, format!("expected 2/3/4-hop groups, got {accs:?}"))?;
    let max = accs.iter().map(|a| a.1).fold(f64::MIN, f64::max);
    let min = accs.iter().map(|a| a.1).fold(f64::MAX, f64::min);
    check(max - min <= HOP_SPREAD_MAX_PTS, format!("spread {:.2} pts > {HOP_SPREAD_MAX_PTS}", max - min))?;
    let shown: Vec<String> = accs.iter().map(|(h, a)| format!("{h}-hop {a:.1}%")).collect();
    Ok(format!("{} spread {:.2} pts ({took:.1?})", shown.join(", "), max - min))
}

fn c3_batch_robustness() -> Result<String, String> {
    let start = Instant::now();
    let retrieval = |g: usize| {
        let mut cfg = config(Method::RipplecotRetrieval, BATCH_G);
        cfg.retrieval.g = g;
        cfg.eval_limit = Some(SUITE_CASES);
        run(cfg).map_err(|e| e.to_string())
    };
    let big = retrieval(BATCH_G)?;
    let single = retrieval(1)?;
    let took = within(start, SLOW_BUDGET)?;
    let ids = |r: &RunReport| r.records.iter().map(|c| c.case_id.clone()).collect::<Vec<_>>();
    check(ids(&big) == ids(&single), "g=3000 and g=1 runs evaluated different cases")?;
    let (a_big, a_one) = (big.summary.all.accuracy(), single.summary.all.accuracy());
    check((a_big - a_one).abs() <= BATCH_GAP_MAX_PTS, format!("g={BATCH_G} {a_big:.1}% vs g=1 {a_one:.1}%"))?;
    let m = big.metadata.m;
    check(big.records.iter().all(|r| r.facts_used.len() <= m), "facts_used exceeds m")?;
    Ok(format!(
        "g={BATCH_G} {a_big:.1}% vs g=1 {a_one:.1}% on {} matched cases, max facts {} <= m={m} ({took:.1?})",
        big.records.len(),
        big.summary.max_facts_used
    ))
}

fn c4_multi_time() -> Result<String, String> {
    let start = Instant::now();
    let mut base = config(Method::RipplecotRetrieval, MULTI_TIME_SAMPLE);
    base.retrieval.g = MULTI_TIME_SAMPLE;
    let single = run(base.clone()).map_err(|e| e.to_string())?;
    let multi = run(RunConfig {
        multi_time: Some(MultiTimeSpec { times: MULTI_TIME_TIMES, sample: MULTI_TIME_SAMPLE, seed: SUITE_SEED }),
        ..base
    })
    .map_err(|e| e.to_string())?;
    let took = within(start, SLOW_BUDGET)?;
    let truth: HashMap<&str, bool> = single.records.iter().map(|r| (r.case_id.as_str(), r.correct)).collect();
    let matched: Vec<(bool, bool)> =
        multi.records.iter().filter_map(|r| truth.get(r.case_id.as_str()).map(|&t| (t, r.correct))).collect();
    check(matched.len() == MULTI_TIME_SAMPLE, format!("matched {} of {MULTI_TIME_SAMPLE} cases", matched.len()))?;
    check(multi.records.iter().all(|r| r.multiplicity == MULTI_TIME_TIMES), "a sampled case lacks its re-edit")?;
    let a_single = pct(matched.iter().filter(|m| m.0).count(), matched.len());
    let a_multi = pct(matched.iter().filter(|m| m.1).count(), matched.len());
    let drop = a_single - a_multi;
    check(drop <= MULTI_TIME_DROP_MAX_PTS, format!("drop {drop:.1} pts ({a_single:.1}% -> {a_multi:.1}%)"))?;
    let hits = multi.summary.superseded_hits;
    check(hits == 0, format!("{hits} superseded facts retrieved"))?;
    Ok(format!(
        "single {a_single:.1}% -> twice-edited {a_multi:.1}%, drop {drop:.1} pts, 0 superseded retrievals ({took:.1?})"
    ))
}

/// Embedder over a fixed text → vector table.
struct TableEmbedder(HashMap<String, Vec<f64>>);

impl Embedder for TableEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        texts
            .iter()
            .map(|t| {
                let v = self.0.get(*t).ok_or_else(|| BackendError::InvalidRequest(format!("unknown text {t}")))?;
                EmbeddingVector::new(v.clone()).map_err(|e| BackendError::InvalidRequest(e.to_string()))
            })
            .collect()
    }

    fn identity(&self) -> String {
        "table".into()
    }
}

fn random_int_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<i64> {
    loop {
        let v: Vec<i64> = (0..dim).map(|_| rng.random_range(-1000..=1000)).collect();
        if v.iter().any(|&x| x != 0) {
            return v;
        }
    }
}

/// Exact cosine order for integer vectors: compares dot_a/|a| with dot_b/|b|
/// through squared, sign-aware integer products.
fn exact_cmp(dot_a: i128, norm2_a: i128, dot_b: i128, norm2_b: i128) -> Ordering {
    let lhs = dot_a * dot_a.abs() * norm2_b;
    let rhs = dot_b * dot_b.abs() * norm2_a;
    lhs.cmp(&rhs)
}

fn c5_refinement_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    let mut duplicated_pools = 0;
    for pool_i in 0..RANK_POOLS {
        let dim = rng.random_range(8..=512);
        let size = rng.random_range(5..=40);
        let t = if pool_i % 2 == 0 { 5 } else { rng.random_range(1..=size) };
        let target = random_int_vector(&mut rng, dim);
        let mut pool: Vec<Vec<i64>> = (0..size).map(|_| random_int_vector(&mut rng, dim)).collect();
        if pool_i % 3 == 0 {
            let (a, b) = (rng.random_range(0..size), rng.random_range(0..size));
            pool[b] = pool[a].clone();
            pool[rng.random_range(0..size)] = target.clone();
            duplicated_pools += 1;
        }
        let dot = |v: &[i64]| v.iter().zip(&target).map(|(a, b)| i128::from(*a) * i128::from(*b)).sum::<i128>();
        let norm2 = |v: &[i64]| v.iter().map(|a| i128::from(*a) * i128::from(*a)).sum::<i128>();
        let mut oracle: Vec<usize> = (0..size).collect();
        oracle.sort_by(|&i, &j| {
            exact_cmp(dot(&pool[j]), norm2(&pool[j]), dot(&pool[i]), norm2(&pool[i])).then(i.cmp(&j))
        });
        oracle.truncate(t);

        let mut table: HashMap<String, Vec<f64>> =
            pool.iter().enumerate().map(|(i, v)| (format!("q{i}"), v.iter().map(|&x| x as f64).collect())).collect();
        table.insert("target".into(), target.iter().map(|&x| x as f64).collect());
        let demos: Vec<Demonstration> = (0..size)
            .map(|i| Demonstration::new([format!("fact {i}")], &format!("q{i}"), "thought.", "a").expect("valid demo"))
            .collect();
        let got =
            rank_top_t(&demos, "target", &TableEmbedder(table), &RefineConfig { t }).map_err(|e| e.to_string())?;
        let got: Vec<usize> = got.iter().map(|d| d.question()[1..].parse().expect("index")).collect();
        check(got == oracle, format!("pool {pool_i} (dim {dim}, t {t}): got {got:?}, oracle {oracle:?}"))?;
    }
    Ok(format!("{RANK_POOLS} pools (dims 8-512, {duplicated_pools} with exact duplicates) match the exact full sort"))
}

/// Error-free transformations for double-double accumulation.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn dd_dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (p, pe) = two_prod(*x, *y);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += se + pe;
    }
    hi + lo
}

fn precise_cosine(a: &[f64], b: &[f64]) -> f64 {
    let c = dd_dot(a, b) / (dd_dot(a, a).sqrt() * dd_dot(b, b).sqrt());
    c.clamp(-1.0, 1.0)
}

fn c6_cosine_correctness() -> Result<String, String> {
    let v = |x: &[f64]| EmbeddingVector::new(x.to_vec()).expect("finite");
    let cos = |a: &[f64], b: &[f64]| cosine(&v(a), &v(b)).map(|s| s.value()).map_err(|e| e.to_string());
    check((cos(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0])? - 1.0).abs() <= COSINE_TOL, "self-similarity != 1")?;
    check(cos(&[1.0, 0.0], &[0.0, 3.0])?.abs() <= COSINE_TOL, "orthogonal != 0")?;
    let diag = cos(&[1.0, 0.0], &[1.0, 1.0])?;
    check((diag - std::f64::consts::FRAC_1_SQRT_2).abs() <= COSINE_TOL, "(1,0)·(1,1) != 1/sqrt(2)")?;
    check(format!("{diag:.8}") == "0.70710678", format!("(1,0)·(1,1) = {diag:.8}, expected 0.70710678"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0006);
    let mut worst = 0.0f64;
    for i in 0..COSINE_PAIRS {
        let dim = rng.random_range(1..=512);
        let scale_a = 10f64.powi(rng.random_range(-3..=3));
        let scale_b = 10f64.powi(rng.random_range(-3..=3));
        let draw = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> {
            loop {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * s).collect();
                if x.iter().any(|&e| e != 0.0) {
                    return x;
                }
            }
        };
        let a = draw(&mut rng, scale_a);
        let b = if i % 10 == 0 { a.iter().map(|x| x * 3.5).collect() } else { draw(&mut rng, scale_b) };
        let err = (cos(&a, &b)? - precise_cosine(&a, &b)).abs();
        worst = worst.max(err);
        check(err <= COSINE_TOL, format!("pair {i} (dim {dim}) off by {err:e}"))?;
    }
    Ok(format!("3 tagged examples + {COSINE_PAIRS} random pairs, worst error {worst:.2e} <= {COSINE_TOL:e}"))
}

const GOLDEN_PROMPT: &str = "New fact: the author of Misery is Richard Dawkins.
Question: What is the nationality of the author of Misery.
Thought: The author of Misery is Richard Dawkins. Richard Dawkins is a citizen of United Kingdom. Therefore, the nationality of the author of Misery is British.
Answer: British

New fact: The capital of United States of America is El Campu.
Question: What is the capital city of the country that Michael Feinstein is a citizen of ?
Thought: Michael Feinstein is a citizen of United States of America. The capital of United States of America is El Campu. Thus, the capital city of the country that Michael Feinstein is a citizen of is El Campu.
Answer: El Campu

New fact:
Lou Pearlman is a citizen of India
The capital of India is Taloga

Question: What is the capital of the country to which Lou Pearlman belonged?
Thought:";

fn worked_demos() -> Vec<Demonstration> {
    vec![
        Demonstration::new(
            ["the author of Misery is Richard Dawkins."],
            "What is the nationality of the author of Misery.",
            "The author of Misery is Richard Dawkins. Richard Dawkins is a citizen of United Kingdom. Therefore, the nationality of the author of Misery is British.",
            "British",
        )
        .expect("valid"),
        Demonstration::new(
            ["The capital of United States of America is El Campu."],
            "What is the capital city of the country that Michael Feinstein is a citizen of ?",
            "Michael Feinstein is a citizen of United States of America. The capital of United States of America is El Campu. Thus, the capital city of the country that Michael Feinstein is a citizen of is El Campu.",
            "El Campu",
        )
        .expect("valid"),
    ]
}

fn c7_prompt_golden() -> Result<String, String> {
    let demos = worked_demos();
    let facts = ["Lou Pearlman is a citizen of India", "The capital of India is Taloga"];
    let question = "What is the capital of the country to which Lou Pearlman belonged?";
    let bundle = assemble_prompt(&demos, &facts, question);
    check(bundle.rendered() == GOLDEN_PROMPT, format!("layout differs:\n{}", bundle.rendered()))?;
    let parsed = parse_prompt(bundle.rendered());
    check(parsed.demos == demos, "demonstrations not recovered")?;
    check(parsed.facts == facts, format!("facts not recovered: {:?}", parsed.facts))?;
    check(parsed.question.as_deref() == Some(question), "question not recovered")?;
    let reparsed = parse_generated(&render_demonstrations(&demos)).map_err(|e| e.to_string())?;
    check(reparsed == demos, "render/parse round trip differs")?;
    Ok(format!("{} bytes match the pinned layout; 2 demos, 2 facts and the question round-trip", GOLDEN_PROMPT.len()))
}

fn well_formed_blocks() -> Vec<String> {
    let mut blocks: Vec<String> =
        worked_demos().iter().map(|d| render_demonstrations(std::slice::from_ref(d))).collect();
    blocks.push(
        "New Fact: Lou Pearlman is a citizen of India\nThe capital of India is Taloga\nQuestion: What is the capital of the country to which Lou Pearlman belonged?\nThought: Lou Pearlman is a citizen of India. The capital of India is Taloga. Therefore, the capital of the country to which Lou Pearlman belonged is Taloga.\nAnswer: Taloga".into(),
    );
    blocks.push(
        "new fact:   Ellie Kemper is a citizen of Croatia.  \nquestion: What is the capital of the country Ellie Kemper is a citizen of?\nthought: Ellie Kemper is a citizen of Croatia. The capital of Croatia is Zagreb. Thus, the capital of the country Ellie Kemper is a citizen of is Zagreb.\nanswer: Zagreb  ".into(),
    );
    blocks
}

fn without(block: &str, label: &str) -> String {
    block.lines().filter(|l| !l.trim_start().to_lowercase().starts_with(label)).collect::<Vec<_>>().join("\n")
}

fn c8_generation_validation() -> Result<String, String> {
    let good = well_formed_blocks();
    for (i, b) in good.iter().enumerate() {
        let parsed = parse_generated(b).map_err(|e| format!("block {i} rejected: {e}"))?;
        check(parsed.len() == 1, format!("block {i} parsed into {} demos", parsed.len()))?;
    }
    let mut rejected = 0;
    for b in &good {
        for label in ["new fact:", "question:", "thought:", "answer:"] {
            let broken = without(b, label);
            check(parse_generated(&broken).is_err(), format!("block without {label} accepted:\n{broken}"))?;
            rejected += 1;
        }
    }

    let gen = GenerationConfig { mode: GenerationMode::ZeroShot, k: 2, candidate_count: 4, seed: 0 };
    let base = CompletionRequest::new("");
    let valid = good.join("\n\n");
    let transcripts: Vec<(&str, Vec<String>, usize, bool)> = vec![
        ("garbage then valid", vec!["no demos here".into(), valid.clone()], 2, true),
        ("always garbage", vec!["junk".into(); 10], 1 + GENERATION_RETRIES, false),
        ("always short", vec![good[0].clone(); 10], 1 + GENERATION_RETRIES, false),
        ("short then filled", vec![good[0].clone(), good[1].clone(), good[2].clone(), good[3].clone()], 4, true),
    ];
    for (name, script, calls, ok) in transcripts {
        let llm = ScriptedBackend::new(script);
        let out = generate(&llm, None, &gen, &base);
        check(llm.calls() == calls, format!("{name}: {} calls, expected {calls}", llm.calls()))?;
        check(llm.calls() - 1 <= GENERATION_RETRIES, format!("{name}: more than {GENERATION_RETRIES} top-ups"))?;
        check(out.is_ok() == ok, format!("{name}: unexpected result {out:?}"))?;
        if let Err(e) = &out {
            check(
                matches!(e, DemoError::NoValidDemonstrations | DemoError::TooFewDemonstrations { .. }),
                format!("{name}: {e}"),
            )?;
        }
    }
    let flaky = ScriptedBackend::with_results(vec![Ok(good[0].clone()), Err(BackendError::Transport("reset".into()))]);
    let out = generate(&flaky, None, &GenerationConfig { k: 1, ..gen }, &base);
    check(flaky.calls() == 2 && out.map(|d| d.len()).ok() == Some(1), "flaky top-up not handled")?;
    Ok(format!(
        "{} well-formed blocks accepted, {rejected} section-missing blocks rejected, 5 transcripts within 1+{GENERATION_RETRIES} calls",
        good.len()
    ))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn c9_loader_integrity() -> Result<String, String> {
    let mq = load_mquake(&fixture("mquake.json"), "cf").map_err(|e| e.to_string())?;
    check(
        mq.cases.len() == 3 && mq.quarantine.len() == 2,
        format!("mquake {} cases / {} quarantined", mq.cases.len(), mq.quarantine.len()),
    )?;
    check(mq.reconciles() && mq.total_records == 5, "mquake counts do not reconcile")?;
    check(mq.quarantine.iter().all(|q| !q.reasons.is_empty()), "mquake quarantine without reasons")?;
    let four = mq.cases.iter().find(|c| c.case_id == "2").ok_or("case 2 missing")?;
    check(four.hop_count == 4 && four.edits.len() == 2, "4-hop record mapped wrongly")?;

    let re = load_rippleedit(&fixture("rippleedit.json"), "popular").map_err(|e| e.to_string())?;
    check(
        re.cases.len() == 4 && re.quarantine.len() == 4,
        format!("rippleedit {} cases / {} quarantined", re.cases.len(), re.quarantine.len()),
    )?;
    check(re.reconciles() && re.total_records == 8, "rippleedit counts do not reconcile")?;
    let labels: BTreeSet<&str> = re.quarantine.iter().filter_map(|q| q.category.as_deref()).collect();
    check(
        labels.contains("Relation_Specificity") && labels.contains("Logical_Generalization"),
        format!("labels {labels:?}"),
    )?;

    for case in mq.cases.iter().chain(&re.cases) {
        case.validate().map_err(|e| e.to_string())?;
    }
    let mut cfg = RunConfig {
        method: Method::Ripplecot,
        dataset: DatasetDescriptor::file(
            ripplecot::dataset_io::DatasetFormat::Mquake,
            fixture("mquake.json"),
            Some("cf".into()),
        ),
        refine: false,
        k: 1,
        ..RunConfig::default()
    };
    cfg.demos.candidate_count = 1;
    let report = run(cfg).map_err(|e| e.to_string())?;
    check(
        report.summary.all.cases == 3 && report.metadata.quarantined == 2,
        "denominator includes quarantined records",
    )?;
    Ok(format!(
        "mquake 5 = {} + {} quarantined, rippleedit 8 = {} + {} quarantined, eval denominator {}",
        mq.cases.len(),
        mq.quarantine.len(),
        re.cases.len(),
        re.quarantine.len(),
        report.summary.all.cases
    ))
}

fn c10_determinism() -> Result<String, String> {
    let matrix = |execution: Execution| -> Result<Vec<String>, String> {
        let mut out = Vec::new();
        for method in [Method::Ike, Method::Basecot, Method::Ripplecot, Method::RipplecotRetrieval] {
            let mut cfg = RunConfig { execution, ..config(method, SUITE_CASES) };
            cfg.retrieval.g = 100;
            out.push(run(cfg).map_err(|e| e.to_string())?.summary_json());
        }
        Ok(out)
    };
    let first = matrix(Execution::Sequential)?;
    let second = matrix(Execution::Parallel { width: 4 })?;
    for (a, b) in first.iter().zip(&second) {
        check(a == b, "summary reports differ between runs")?;
    }
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!("4 methods x {SUITE_CASES} cases, sequential vs 4-wide parallel: {bytes} summary bytes identical"))
}

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(u8, &str, Check); 10] = [
        (1, "mechanism separation", c1_mechanism_separation),
        (2, "hop flatness", c2_hop_flatness),
        (3, "batch robustness", c3_batch_robustness),
        (4, "multi-time edit stability", c4_multi_time),
        (5, "refinement exactness", c5_refinement_exactness),
        (6, "cosine correctness", c6_cosine_correctness),
        (7, "prompt golden layout", c7_prompt_golden),
        (8, "generation validation", c8_generation_validation),
        (9, "loader integrity", c9_loader_integrity),
        (10, "determinism", c10_determinism),
    ];
    let filter: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, criterion) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
