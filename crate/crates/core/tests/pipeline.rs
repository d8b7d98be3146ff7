use std::collections::HashMap;

use ripplecot::backends::HashedBowEmbedder;
use ripplecot::dataset_io::{
    read_normalized, synth_generate, write_normalized, DatasetDescriptor, DatasetFormat, SyntheticConfig,
};
use ripplecot::edit_memory::EditMemory;
use ripplecot::eval::{run, Method, RunConfig};
use ripplecot::model::{Edit, FactTriplet, TemplateRegistry};

fn token_counts(text: &str, e: &HashedBowEmbedder) -> HashMap<usize, f64> {
    let mut m = HashMap::new();
    for t in HashedBowEmbedder::tokens(text) {
        *m.entry(e.bucket(&t)).or_insert(0.0) += 1.0;
    }
    m
}

fn sparse_cosine(a: &HashMap<usize, f64>, b: &HashMap<usize, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let norm = |m: &HashMap<usize, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

#[test]
fn pearlman_fact_found_among_3000() {
    let templates = TemplateRegistry::new()
        .with_statement("citizenship", "{s} is a citizen of {o}")
        .unwrap()
        .with_statement("capital", "The capital of {s} is {o}")
        .unwrap();
    let emb = HashedBowEmbedder::default();
    let mut mem = EditMemory::new(templates.clone());
    let mut statements = Vec::new();
    let mut edits = Vec::new();
    for i in 0..2999 {
        let (rel, subj) =
            if i % 2 == 0 { ("citizenship", format!("Person{i}")) } else { ("capital", format!("Country{i}")) };
        edits.push(Edit::new(FactTriplet::new(&subj, rel, "Old").unwrap(), &format!("Place{i}")).unwrap());
    }
    edits.insert(
        1500,
        Edit::new(FactTriplet::new("Lou Pearlman", "citizenship", "United States").unwrap(), "India").unwrap(),
    );
    for e in &edits {
        statements.push(templates.render(e));
    }
    mem.insert_all(edits, &emb).unwrap();

    let probe = "capital of the country of which Lou Pearlman is a citizen";
    let got = mem.retrieve_one::<&str>(probe, &emb, &[]).unwrap();
    assert_eq!(got, "Lou Pearlman is a citizen of India");

    // Brute force over the full memory; first maximum wins.
    let p = token_counts(probe, &emb);
    let mut best = (f64::MIN, "");
    for s in &statements {
        let c = sparse_cosine(&p, &token_counts(s, &emb));
        if c > best.0 {
            best = (c, s);
        }
    }
    assert_eq!(best.1, got);
}

#[test]
fn normalized_round_trip_preserves_results() {
    let syn = SyntheticConfig { case_count: 60, seed: 3, ..SyntheticConfig::default() };
    let world = synth_generate(&syn).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.jsonl");
    write_normalized(std::fs::File::create(&path).unwrap(), &world.cases, world.kg.templates(), Some(&world.kg))
        .unwrap();
    let back = read_normalized(&path).unwrap();
    assert_eq!(back.cases, world.cases);
    assert!(back.reconciles());

    let cfg = |dataset| RunConfig { method: Method::RipplecotRetrieval, dataset, seed: 3, ..RunConfig::default() };
    let mut direct = cfg(DatasetDescriptor::synthetic(syn));
    direct.retrieval.g = 60;
    let mut loaded = cfg(DatasetDescriptor::file(DatasetFormat::Normalized, path, None));
    loaded.retrieval.g = 60;
    let (a, b) = (run(direct).unwrap(), run(loaded).unwrap());
    assert_eq!(a.records, b.records);
    assert_eq!(a.summary.all.correct, 60);
}
