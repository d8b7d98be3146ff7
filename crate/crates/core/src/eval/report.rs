//! Run reports: per-case records, aggregates, metadata and the on-disk
//! renderings (full JSONL, summary JSON, markdown tables, plot CSV).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, Method};

pub const FULL_REPORT: &str = "report.full.jsonl";
pub const SUMMARY_REPORT: &str = "report.summary.json";
pub const TABLES: &str = "tables.md";
pub const PLOT_CSV: &str = "plot.csv";

/// Outcome of one case: the OR over its paraphrase attempts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub method: Method,
    pub hop_count: usize,
    /// Edit batch size, for retrieval runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    /// Largest number of edits sharing one (subject, relation) key.
    pub multiplicity: usize,
    pub correct: bool,
    /// Per-paraphrase verdicts, in question order.
    pub attempts: Vec<bool>,
    /// Extracted answer of the reported attempt (first correct, else last).
    pub answer: String,
    pub rounds: usize,
    pub facts_used: Vec<String>,
    /// Retrieved statements that belong to superseded edits.
    #[serde(default)]
    pub superseded_hits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub cases: usize,
    pub correct: usize,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.cases += 1;
        self.correct += usize::from(correct);
    }

    /// Percentage; 0 for an empty tally.
    pub fn accuracy(&self) -> f64 {
        if self.cases == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.cases as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub all: Tally,
    pub by_hop: BTreeMap<usize, Tally>,
    pub by_g: BTreeMap<usize, Tally>,
    pub by_multiplicity: BTreeMap<usize, Tally>,
    pub errors: usize,
    pub superseded_hits: usize,
    pub max_facts_used: usize,
}

impl Summary {
    pub fn from_records(records: &[CaseRecord]) -> Self {
        let mut s = Summary::default();
        for r in records {
            s.all.add(r.correct);
            s.by_hop.entry(r.hop_count).or_default().add(r.correct);
            if let Some(g) = r.g {
                s.by_g.entry(g).or_default().add(r.correct);
            }
            s.by_multiplicity.entry(r.multiplicity).or_default().add(r.correct);
            s.errors += usize::from(r.error.is_some());
            s.superseded_hits += r.superseded_hits;
            s.max_facts_used = s.max_facts_used.max(r.facts_used.len());
        }
        s
    }
}

/// Everything needed to reproduce or identify a run. No wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub method: Method,
    pub dataset: String,
    pub cases_loaded: usize,
    pub cases_evaluated: usize,
    pub quarantined: usize,
    pub seed: u64,
    /// SHA-256 of the run configuration, execution settings excluded.
    pub config_hash: String,
    pub backend: String,
    pub embedder: String,
    pub temperature: f64,
    pub k: usize,
    pub t: usize,
    pub refine: bool,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    pub demo_source: String,
    pub demo_pool: usize,
    pub demo_dedup: bool,
    pub similarity: String,
    pub paraphrase_sessions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub summary: Summary,
    pub records: Vec<CaseRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header<'a> {
    #[serde(borrow)]
    kind: &'a str,
    metadata: RunMetadata,
    summary: Summary,
}

impl RunReport {
    pub fn new(metadata: RunMetadata, records: Vec<CaseRecord>) -> Self {
        Self { metadata, summary: Summary::from_records(&records), records }
    }

    /// Aggregates agree with the records.
    pub fn consistent(&self) -> bool {
        self.summary == Summary::from_records(&self.records)
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            metadata: &'a RunMetadata,
            summary: &'a Summary,
        }
        serde_json::to_string_pretty(&View { metadata: &self.metadata, summary: &self.summary })
            .expect("report serializes")
    }

    /// Header line with metadata and summary, then one record per line.
    pub fn write_full<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header { kind: "run", metadata: self.metadata.clone(), summary: self.summary.clone() };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_full(path: &Path) -> Result<Self, EvalError> {
        let io = |e| EvalError::Io { path: path.to_path_buf(), source: e };
        let file = fs::File::open(path).map_err(io)?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, e: serde_json::Error| EvalError::Report(format!("{}:{line}: {e}", path.display()));
        let first =
            lines.next().ok_or_else(|| EvalError::Report(format!("{} is empty", path.display())))?.map_err(io)?;
        let header: Header<'_> = serde_json::from_str(&first).map_err(|e| bad(1, e))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e))?);
            }
        }
        Ok(Self { metadata: header.metadata, summary: header.summary, records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Full,
    Summary,
    Table,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] =
        [ReportFormat::Full, ReportFormat::Summary, ReportFormat::Table, ReportFormat::Csv];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Full => FULL_REPORT,
            ReportFormat::Summary => SUMMARY_REPORT,
            ReportFormat::Table => TABLES,
            ReportFormat::Csv => PLOT_CSV,
        }
    }
}

fn pct(t: &Tally) -> String {
    format!("{:.1}", t.accuracy())
}

/// Accuracy rows by hop count then `All`, plus batch-size and edit
/// multiplicity tables when the run has them. Headers only when empty.
pub fn render_tables(report: &RunReport) -> String {
    let s = &report.summary;
    let mut out = format!("# {} on {}\n\n", report.metadata.method, report.metadata.dataset);
    out.push_str("| Hops | Cases | Correct | Accuracy (%) |\n|---|---:|---:|---:|\n");
    for (h, t) in &s.by_hop {
        let _ = writeln!(out, "| {h}-hop | {} | {} | {} |", t.cases, t.correct, pct(t));
    }
    if s.all.cases > 0 {
        let _ = writeln!(out, "| All | {} | {} | {} |", s.all.cases, s.all.correct, pct(&s.all));
    }
    if !s.by_g.is_empty() {
        out.push_str("\n| g | Cases | Correct | Accuracy (%) |\n|---:|---:|---:|---:|\n");
        for (g, t) in &s.by_g {
            let _ = writeln!(out, "| {g} | {} | {} | {} |", t.cases, t.correct, pct(t));
        }
    }
    if s.by_multiplicity.keys().any(|&m| m > 1) {
        out.push_str("\n| Edits per key | Cases | Correct | Accuracy (%) |\n|---:|---:|---:|---:|\n");
        for (m, t) in &s.by_multiplicity {
            let _ = writeln!(out, "| {m} | {} | {} | {} |", t.cases, t.correct, pct(t));
        }
    }
    out
}

/// One row per run, one column per hop group seen in any run, then `All`.
pub fn render_comparison(reports: &[RunReport]) -> String {
    let hops: BTreeSet<usize> = reports.iter().flat_map(|r| r.summary.by_hop.keys().copied()).collect();
    let mut out = String::from("| Method | Dataset |");
    for h in &hops {
        let _ = write!(out, " {h}-hop |");
    }
    out.push_str(" All |\n|---|---|");
    out.push_str(&"---:|".repeat(hops.len() + 1));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} | {} |", r.metadata.method, r.metadata.dataset);
        for h in &hops {
            match r.summary.by_hop.get(h) {
                Some(t) => {
                    let _ = write!(out, " {} |", pct(t));
                }
                None => out.push_str(" - |"),
            }
        }
        let _ = writeln!(out, " {} |", pct(&r.summary.all));
    }
    out
}

pub fn render_csv(report: &RunReport) -> String {
    let s = &report.summary;
    let method = report.metadata.method;
    let mut out = String::from("method,dimension,group,cases,correct,accuracy\n");
    let mut row = |dim: &str, group: String, t: &Tally| {
        let _ = writeln!(out, "{method},{dim},{group},{},{},{:.4}", t.cases, t.correct, t.accuracy());
    };
    for (h, t) in &s.by_hop {
        row("hop", h.to_string(), t);
    }
    for (g, t) in &s.by_g {
        row("g", g.to_string(), t);
    }
    for (m, t) in &s.by_multiplicity {
        row("multiplicity", m.to_string(), t);
    }
    if s.all.cases > 0 {
        row("all", "all".into(), &s.all);
    }
    out
}

/// Writes the requested renderings into `dir`, returning the paths.
pub fn report_emit(
    report: &RunReport,
    dir: &Path,
    formats: &BTreeSet<ReportFormat>,
) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io { path: dir.to_path_buf(), source: e })?;
    let mut written = Vec::new();
    for format in formats {
        let path = dir.join(format.file_name());
        let io = |e| EvalError::Io { path: path.clone(), source: e };
        match format {
            ReportFormat::Full => {
                let file = fs::File::create(&path).map_err(io)?;
                report.write_full(BufWriter::new(file)).map_err(io)?;
            }
            ReportFormat::Summary => fs::write(&path, report.summary_json() + "\n").map_err(io)?,
            ReportFormat::Table => fs::write(&path, render_tables(report)).map_err(io)?,
            ReportFormat::Csv => fs::write(&path, render_csv(report)).map_err(io)?,
        }
        written.push(path);
    }
    Ok(written)
}
