//! `ripplecot` command line: demonstration pools, edit memory queries,
//! evaluation runs and report rendering.
//!
//! Settings resolve as environment < flags < `--config` file.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ripplecot::backends::BackendError;
use ripplecot::dataset_io::{write_quarantine, DatasetError};
use ripplecot::eval::{
    render_comparison, render_tables, report_emit, EvalError, Harness, Method, ReportFormat, RunConfig, RunReport,
};
use serde_json::{json, Map, Value};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATASET: u8 = 3;
const EXIT_BACKEND: u8 = 4;

/// Rejected settings that never reached the library.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "ripplecot", version, about = "Chain-of-thought in-context knowledge editing toolkit")]
struct Cli {
    /// Log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the demonstration pool for a dataset and write it as JSONL.
    GenDemos(GenDemosArgs),
    /// Load edits into an edit memory, optionally export it and answer questions.
    Edit(EditArgs),
    /// Run an evaluation and write reports.
    Eval(EvalArgs),
    /// Render tables from one or more full reports.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ripplecot,
    RipplecotRetrieval,
    Ike,
    Basecot,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Synthetic,
    Mquake,
    Rippleedit,
    Normalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Oracle,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Hashed,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum DemoModeArg {
    FullShot,
    FewShot,
    ZeroShot,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Full,
    Summary,
    Table,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Full => ReportFormat::Full,
            FormatArg::Summary => ReportFormat::Summary,
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

fn name<V: ValueEnum>(v: V) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().replace('-', "_")
}

/// Flags mirroring `RunConfig`. Unset flags keep the library defaults.
#[derive(Args, Default)]
struct RunArgs {
    /// TOML file of `RunConfig` fields; its values override flags.
    #[arg(long, env = "RIPPLECOT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, env = "RIPPLECOT_METHOD")]
    method: Option<MethodArg>,
    #[arg(long, value_enum, env = "RIPPLECOT_DATASET")]
    dataset: Option<DatasetArg>,
    /// Dataset file for mquake, rippleedit and normalized.
    #[arg(long, env = "RIPPLECOT_DATASET_PATH")]
    path: Option<PathBuf>,
    /// Split or subset tag (cf, t, popular, ...).
    #[arg(long)]
    split: Option<String>,
    /// Synthetic case count.
    #[arg(long)]
    cases: Option<usize>,
    /// Synthetic edits per case (1 or 2).
    #[arg(long)]
    edits_per_case: Option<usize>,
    /// Evaluate only the first N cases.
    #[arg(long)]
    limit: Option<usize>,
    /// Demonstrations in the prompt without refinement.
    #[arg(long)]
    k: Option<usize>,
    /// Demonstrations kept by refinement.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long, value_enum)]
    demo_mode: Option<DemoModeArg>,
    /// Candidate pool size before refinement.
    #[arg(long)]
    candidates: Option<usize>,
    /// JSONL demonstrations used instead of building a pool.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Edit batch size sharing one memory.
    #[arg(long)]
    g: Option<usize>,
    /// Maximum retrieval rounds.
    #[arg(long)]
    m: Option<usize>,
    /// Re-edit sampled synthetic cases this many times.
    #[arg(long, requires = "sample")]
    times: Option<usize>,
    /// Synthetic cases to re-edit.
    #[arg(long, requires = "times")]
    sample: Option<usize>,
    #[arg(long, env = "RIPPLECOT_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, env = "RIPPLECOT_BACKEND")]
    backend: Option<BackendArg>,
    /// Oracle hops answerable without chain-of-thought demonstrations.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_enum, env = "RIPPLECOT_EMBEDDER")]
    embedder: Option<EmbedderArg>,
    /// Hashed embedder dimension.
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Concurrent cases; 1 runs sequentially.
    #[arg(long, env = "RIPPLECOT_WIDTH")]
    width: Option<usize>,
}

#[derive(Args)]
struct GenDemosArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output JSONL file.
    #[arg(long, short, default_value = "demos.jsonl")]
    output: PathBuf,
}

#[derive(Args)]
struct EditArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Load only the edits of the first N cases.
    #[arg(long)]
    batch: Option<usize>,
    /// Question answered by dynamic retrieval; repeatable.
    #[arg(long, short)]
    question: Vec<String>,
    /// Write every inserted edit, versions included, as JSONL.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Report directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Report files to write; all when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<FormatArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Full reports (report.full.jsonl) to read.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Re-emit the report files of a single run into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<FormatArg>,
}

fn set(obj: &mut Value, path: &[&str], v: Value) {
    let mut cur = obj;
    for key in &path[..path.len() - 1] {
        let map = cur.as_object_mut().expect("object path");
        cur = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
    }
    cur.as_object_mut().expect("object path").insert(path[path.len() - 1].to_string(), v);
}

/// Recursive merge; a differing `kind` or `format` tag replaces the whole
/// object so variant fields never mix.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retag =
                ["kind", "format"].iter().any(|t| matches!((b.get(*t), o.get(*t)), (Some(x), Some(y)) if x != y));
            if retag {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunArgs {
    fn overlay(&self, cfg: &mut Value) {
        if let Some(m) = self.method {
            set(cfg, &["method"], json!(name(m)));
        }
        if let Some(d) = self.dataset {
            let format = name(d);
            if cfg["dataset"]["format"] != json!(format) {
                set(cfg, &["dataset"], json!({ "format": format }));
            }
        }
        if let Some(p) = &self.path {
            set(cfg, &["dataset", "path"], json!(p));
        }
        if let Some(s) = &self.split {
            set(cfg, &["dataset", "split"], json!(s));
        }
        let synthetic = cfg["dataset"]["format"] == json!("synthetic");
        for (flag, key) in [(self.cases, "case_count"), (self.edits_per_case, "edits_per_case")] {
            if let (Some(v), true) = (flag, synthetic) {
                set(cfg, &["dataset", "synthetic", key], json!(v));
            }
        }
        for (flag, path) in [
            (self.limit, &["eval_limit"][..]),
            (self.k, &["k"][..]),
            (self.t, &["t"][..]),
            (self.candidates, &["demos", "candidate_count"][..]),
            (self.g, &["retrieval", "g"][..]),
            (self.m, &["retrieval", "m"][..]),
        ] {
            if let Some(v) = flag {
                set(cfg, path, json!(v));
            }
        }
        if self.no_refine {
            set(cfg, &["refine"], json!(false));
        }
        if let Some(mode) = self.demo_mode {
            set(cfg, &["demos", "mode"], json!(name(mode)));
        }
        if let Some(p) = &self.demos {
            set(cfg, &["demos", "path"], json!(p));
        }
        if let (Some(times), Some(sample)) = (self.times, self.sample) {
            let seed = self.seed.unwrap_or(0);
            set(cfg, &["multi_time"], json!({ "times": times, "sample": sample, "seed": seed }));
        }
        if let Some(seed) = self.seed {
            set(cfg, &["seed"], json!(seed));
            if synthetic {
                set(cfg, &["dataset", "synthetic", "seed"], json!(seed));
            }
        }
        match self.backend {
            Some(BackendArg::Remote) => set(cfg, &["backend"], json!({ "kind": "remote" })),
            Some(BackendArg::Oracle) if cfg["backend"]["kind"] != json!("oracle") => {
                let default = serde_json::to_value(RunConfig::default().backend).expect("serializes");
                set(cfg, &["backend"], default);
            }
            _ => {}
        }
        if let (Some(d), true) = (self.depth, cfg["backend"]["kind"] == json!("oracle")) {
            set(cfg, &["backend", "reasoning_depth"], json!(d));
        }
        match self.embedder {
            Some(EmbedderArg::Remote) => set(cfg, &["embedder"], json!({ "kind": "remote" })),
            Some(EmbedderArg::Hashed) if cfg["embedder"]["kind"] != json!("hashed") => {
                let default = serde_json::to_value(RunConfig::default().embedder).expect("serializes");
                set(cfg, &["embedder"], default);
            }
            _ => {}
        }
        if let Some(b) = self.buckets {
            if cfg["embedder"]["kind"] == json!("hashed") {
                set(cfg, &["embedder", "buckets"], json!(b));
            }
            if synthetic {
                set(cfg, &["dataset", "synthetic", "buckets"], json!(b));
            }
        }
        if let Some(t) = self.temperature {
            set(cfg, &["temperature"], json!(t));
        }
        if let Some(n) = self.max_tokens {
            set(cfg, &["max_tokens"], json!(n));
        }
        match self.width {
            Some(0) | Some(1) => set(cfg, &["execution"], json!("sequential")),
            Some(w) => set(cfg, &["execution"], json!({ "parallel": { "width": w } })),
            None => {}
        }
    }

    /// Library defaults, then env and flags, then the config file.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        self.overlay(&mut cfg);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let file: toml::Value =
                toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let file = serde_json::to_value(file).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            merge(&mut cfg, file);
        }
        let cfg: RunConfig =
            serde_json::from_value(cfg).map_err(|e| config_error(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn formats(args: &[FormatArg]) -> BTreeSet<ReportFormat> {
    if args.is_empty() {
        ReportFormat::ALL.into_iter().collect()
    } else {
        args.iter().map(|&f| f.into()).collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<usize> {
    let mut out = create(path)?;
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

fn gen_demos(args: GenDemosArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if !cfg.method.uses_demos() {
        cfg.method = Method::Ripplecot;
    }
    let harness = Harness::prepare(cfg)?;
    let n = write_jsonl(&args.output, harness.demos())?;
    println!("wrote {n} demonstrations to {}", args.output.display());
    Ok(())
}

fn edit(args: EditArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    cfg.method = Method::RipplecotRetrieval;
    let harness = Harness::prepare(cfg)?;
    let cases = harness.dataset().cases.as_slice();
    let batch = &cases[..args.batch.unwrap_or(cases.len()).min(cases.len())];
    let memory = harness.memory_for(batch)?;
    let inserted = memory.history().len();
    println!(
        "{} cases, {inserted} edits inserted, {} live, {} superseded",
        batch.len(),
        memory.live_count(),
        inserted - memory.live_count()
    );
    if let Some(path) = &args.export {
        let n = write_jsonl(path, memory.history())?;
        println!("exported {n} edits to {}", path.display());
    }
    let snapshot = memory.snapshot();
    for q in &args.question {
        let out = harness.ask(&snapshot, q)?;
        println!("\nQuestion: {q}\nAnswer: {}\nRounds: {}", out.answer, out.rounds);
        for f in &out.facts_used {
            println!("  fact: {f}");
        }
        if out.standing_contradiction {
            println!("  (contradiction still standing after the last round)");
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let harness = Harness::prepare(cfg)?;
    let report = harness.run();
    let written = report_emit(&report, &args.out, &formats(&args.format))?;
    let quarantine = &harness.dataset().quarantine;
    if !quarantine.is_empty() {
        let path = args.out.join("quarantine.jsonl");
        write_quarantine(&path, quarantine)?;
        log::info!("{} records quarantined, see {}", quarantine.len(), path.display());
    }
    print!("{}", render_tables(&report));
    for path in written {
        log::info!("wrote {}", path.display());
    }
    let errors = report.summary.errors;
    if errors > 0 {
        log::warn!("{errors} cases recorded backend errors");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let reports = args.reports.iter().map(|p| RunReport::read_full(p)).collect::<Result<Vec<_>, _>>()?;
    for (r, path) in reports.iter().zip(&args.reports) {
        if !r.consistent() {
            bail!(EvalError::Report(format!("{}: summary disagrees with its records", path.display())));
        }
    }
    if let Some(dir) = &args.out {
        let [single] = reports.as_slice() else {
            return Err(config_error("--out re-emits a single report"));
        };
        for path in report_emit(single, dir, &formats(&args.format))? {
            log::info!("wrote {}", path.display());
        }
    }
    match reports.as_slice() {
        [single] => print!("{}", render_tables(single)),
        many => print!("{}", render_comparison(many)),
    }
    Ok(())
}

fn backend_unavailable(e: &BackendError) -> bool {
    matches!(e, BackendError::Unavailable(_) | BackendError::Transport(_) | BackendError::Timeout(_))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<DatasetError>() {
            return EXIT_DATASET;
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            if backend_unavailable(e) {
                return EXIT_BACKEND;
            }
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            match e {
                EvalError::Config(_) => return EXIT_CONFIG,
                EvalError::Dataset(_) => return EXIT_DATASET,
                EvalError::Backend(b) if backend_unavailable(b) => return EXIT_BACKEND,
                _ => {}
            }
        }
    }
    EXIT_FAILURE
}

/// The error chain, skipping causes already quoted by an outer message.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenDemos(a) => gen_demos(a),
        Command::Edit(a) => edit(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["ripplecot", "eval"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).expect("parses").command {
            Command::Eval(e) => e.run,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_map_onto_config() {
        let cfg = args(&[
            "--method",
            "ripplecot-retrieval",
            "--cases",
            "50",
            "--g",
            "25",
            "--m",
            "3",
            "--seed",
            "7",
            "--buckets",
            "1024",
            "--no-refine",
            "--k",
            "2",
            "--width",
            "1",
        ])
        .resolve()
        .unwrap();
        assert_eq!(cfg.method, Method::RipplecotRetrieval);
        assert_eq!((cfg.retrieval.g, cfg.retrieval.m), (25, 3));
        assert_eq!((cfg.k, cfg.refine, cfg.seed), (2, false, 7));
        let syn = cfg.dataset.synthetic.unwrap();
        assert_eq!((syn.case_count, syn.seed, syn.buckets), (50, 7, 1024));
        assert_eq!(cfg.embedder, ripplecot::eval::EmbedderSpec::Hashed { buckets: 1024 });
        assert_eq!(cfg.execution, ripplecot::exec::Execution::Sequential);
    }

    #[test]
    fn config_file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "k = 4\nrefine = false\n[retrieval]\nm = 2\n[backend]\nkind = \"remote\"\n").unwrap();
        let cfg = args(&["--k", "3", "--m", "4", "--g", "9", "--config", path.to_str().unwrap()]).resolve().unwrap();
        assert_eq!((cfg.k, cfg.retrieval.m, cfg.retrieval.g), (4, 2, 9));
        assert_eq!(cfg.backend, ripplecot::eval::BackendSpec::Remote);
    }

    #[test]
    fn merge_replaces_on_tag_change() {
        let mut base = json!({"backend": {"kind": "oracle", "reasoning_depth": 1}, "k": 5});
        merge(&mut base, json!({"backend": {"kind": "remote"}, "t": 2}));
        assert_eq!(base, json!({"backend": {"kind": "remote"}, "k": 5, "t": 2}));
        let mut base = json!({"a": {"b": 1, "c": 2}});
        merge(&mut base, json!({"a": {"c": 3}}));
        assert_eq!(base, json!({"a": {"b": 1, "c": 3}}));
    }

    #[test]
    fn described_chain_has_no_repeats() {
        let e: anyhow::Error = EvalError::Backend(BackendError::Unavailable("down".into())).into();
        assert_eq!(describe(&e), "backend: backend unavailable: down");
        assert_eq!(describe(&e.context("preparing run")), "preparing run: backend: backend unavailable: down");
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let config: anyhow::Error = EvalError::Config("bad".into()).into();
        let dataset: anyhow::Error = EvalError::Dataset(DatasetError::InvalidConfig("x".into())).into();
        let backend: anyhow::Error = EvalError::Backend(BackendError::Unavailable("down".into())).into();
        let other: anyhow::Error = EvalError::Report("x".into()).into();
        assert_eq!(exit_code(&config), EXIT_CONFIG);
        assert_eq!(exit_code(&dataset), EXIT_DATASET);
        assert_eq!(exit_code(&backend), EXIT_BACKEND);
        assert_eq!(exit_code(&other), EXIT_FAILURE);
        assert_eq!(exit_code(&config_error("x").context("loading")), EXIT_CONFIG);
    }
}
