//! Benchmark loaders (MQuAKE, RippleEdit), the synthetic suite generator,
//! the multi-time edit transform and a normalized JSONL interchange format.
//!
//! Records that parse but break a case invariant are quarantined with
//! reasons rather than dropped; records missing required fields are
//! schema errors.

mod mquake;
mod rippleedit;
mod synthetic;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backends::KnowledgeGraph;
use crate::model::{MultiHopCase, TemplateRegistry};

pub use mquake::load_mquake;
pub use rippleedit::{load_rippleedit, RIPPLE_CATEGORIES};
pub use synthetic::{
    apply_edit_sequence, multi_time_transform, synth_generate, synthetic_questions, MultiTimeOutput, SyntheticConfig,
    SyntheticWorld,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("record {index}: {reason}")]
    Json { index: usize, reason: String },
    #[error("record {index}: missing or malformed field `{field}`")]
    Schema { index: usize, field: String },
    #[error("synthetic generation exhausted: {0}")]
    GenerationExhausted(String),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn schema(index: usize, field: impl Into<String>) -> Self {
        DatasetError::Schema { index, field: field.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Mquake,
    Rippleedit,
    Synthetic,
    /// This crate's own JSONL interchange.
    Normalized,
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub format: DatasetFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Split or subset tag (cf, t, popular, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

impl DatasetDescriptor {
    pub fn synthetic(cfg: SyntheticConfig) -> Self {
        Self { format: DatasetFormat::Synthetic, path: None, split: Some("synthetic".into()), synthetic: Some(cfg) }
    }

    pub fn file(format: DatasetFormat, path: impl Into<PathBuf>, split: Option<String>) -> Self {
        Self { format, path: Some(path.into()), split, synthetic: None }
    }

    pub fn load(&self) -> Result<LoadedDataset, DatasetError> {
        let path = || {
            self.path
                .as_deref()
                .ok_or_else(|| DatasetError::InvalidConfig(format!("{:?} dataset needs a path", self.format)))
        };
        let split = self.split.clone().unwrap_or_default();
        match self.format {
            DatasetFormat::Mquake => load_mquake(path()?, &split),
            DatasetFormat::Rippleedit => load_rippleedit(path()?, &split),
            DatasetFormat::Normalized => read_normalized(path()?),
            DatasetFormat::Synthetic => {
                let cfg = self.synthetic.clone().unwrap_or_default();
                Ok(synth_generate(&cfg)?.into_dataset())
            }
        }
    }
}

/// A malformed record kept aside with machine-readable reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    /// Position of the source record in its file.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedDataset {
    pub cases: Vec<MultiHopCase>,
    pub templates: TemplateRegistry,
    /// Present for synthetic worlds, where the oracle can answer.
    pub graph: Option<KnowledgeGraph>,
    pub quarantine: Vec<QuarantineRecord>,
    /// Candidate cases seen; equals `cases.len() + quarantine.len()`.
    pub total_records: usize,
}

impl LoadedDataset {
    pub fn reconciles(&self) -> bool {
        self.total_records == self.cases.len() + self.quarantine.len()
    }

    /// Admits `case` or quarantines it with its invariant violations.
    pub(crate) fn admit(&mut self, index: usize, case: MultiHopCase) {
        self.total_records += 1;
        let reasons = case.violations();
        if reasons.is_empty() {
            self.cases.push(case);
        } else {
            log::warn!("record {index} ({}) quarantined: {}", case.case_id, reasons.join("; "));
            self.quarantine.push(QuarantineRecord { index, case_id: Some(case.case_id), category: case.tag, reasons });
        }
    }

    pub(crate) fn reject(
        &mut self,
        index: usize,
        case_id: Option<String>,
        category: Option<String>,
        reasons: Vec<String>,
    ) {
        self.total_records += 1;
        self.quarantine.push(QuarantineRecord { index, case_id, category, reasons });
    }
}

/// Records of a JSON array file, or one record per non-blank line.
pub(crate) fn read_records(path: &Path) -> Result<Vec<Value>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return match serde_json::from_str::<Value>(&text) {
            Ok(Value::Array(items)) => Ok(items),
            Ok(_) => Err(DatasetError::Json { index: 0, reason: "expected an array".into() }),
            Err(e) => Err(DatasetError::Json { index: 0, reason: e.to_string() }),
        };
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(index, line)| {
            serde_json::from_str(line).map_err(|e| DatasetError::Json { index, reason: e.to_string() })
        })
        .collect()
}

pub(crate) fn str_field<'v>(record: &'v Value, index: usize, field: &str) -> Result<&'v str, DatasetError> {
    record
        .get(field)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| DatasetError::schema(index, field))
}

pub(crate) fn string_list(value: Option<&Value>) -> Vec<String> {
    value
        .and_then(Value::as_array)
        .map(|items| {
            items.iter().filter_map(Value::as_str).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        })
        .unwrap_or_default()
}

/// Writes quarantined records as JSON lines.
pub fn write_quarantine(path: &Path, records: &[QuarantineRecord]) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("quarantine records serialize");
        writeln!(out, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

pub const NORMALIZED_FORMAT: &str = "ripplecot-cases/1";

#[derive(Serialize, Deserialize)]
struct NormalizedHeader {
    format: String,
    templates: TemplateRegistry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<KnowledgeGraph>,
}

/// Header line (format tag, templates, optional graph) then one case per line.
pub fn write_normalized<W: Write>(
    mut out: W,
    cases: &[MultiHopCase],
    templates: &TemplateRegistry,
    graph: Option<&KnowledgeGraph>,
) -> std::io::Result<()> {
    let header =
        NormalizedHeader { format: NORMALIZED_FORMAT.into(), templates: templates.clone(), graph: graph.cloned() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for case in cases {
        serde_json::to_writer(&mut out, case)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_normalized(path: &Path) -> Result<LoadedDataset, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line =
        lines.next().ok_or_else(|| DatasetError::schema(0, "format"))?.map_err(|e| DatasetError::io(path, e))?;
    let header: NormalizedHeader =
        serde_json::from_str(&header_line).map_err(|e| DatasetError::Json { index: 0, reason: e.to_string() })?;
    if header.format != NORMALIZED_FORMAT {
        return Err(DatasetError::schema(0, "format"));
    }
    let mut data = LoadedDataset { templates: header.templates, graph: header.graph, ..LoadedDataset::default() };
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MultiHopCase>(&line) {
            Ok(case) => data.admit(i + 1, case),
            Err(e) => data.reject(i + 1, None, None, vec![e.to_string()]),
        }
    }
    Ok(data)
}
