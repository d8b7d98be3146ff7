//! MQuAKE records: `requested_rewrite` edits with `{}` cloze prompts,
//! labeled original/new hop triples under `orig`, up to three questions,
//! and the post-edit answer with aliases.

use std::path::Path;

use serde_json::Value;

use super::{read_records, str_field, string_list, DatasetError, LoadedDataset};
use crate::model::{Edit, FactChain, FactTriplet, MultiHopCase, PromptTemplate};

fn triples(record: &Value, index: usize, field: &str) -> Result<Vec<[String; 3]>, DatasetError> {
    let path = format!("orig.{field}");
    let items = record
        .get("orig")
        .and_then(|o| o.get(field))
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::schema(index, &path))?;
    items
        .iter()
        .map(|t| {
            let parts: Vec<&str> =
                t.as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
            match parts.as_slice() {
                [s, r, o] => Ok([s.to_string(), r.to_string(), o.to_string()]),
                _ => Err(DatasetError::schema(index, &path)),
            }
        })
        .collect()
}

fn nested_str<'v>(value: &'v Value, index: usize, outer: &str, inner: &str) -> Result<&'v str, DatasetError> {
    value
        .get(outer)
        .and_then(|v| v.get(inner))
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| DatasetError::schema(index, format!("requested_rewrite.{outer}.{inner}")))
}

/// `"{} is a citizen of"` → `"{s} is a citizen of {o}"`.
fn cloze_to_template(prompt: &str) -> Option<PromptTemplate> {
    if !prompt.contains("{}") {
        return None;
    }
    PromptTemplate::new(format!("{} {{o}}", prompt.trim().replacen("{}", "{s}", 1))).ok()
}

fn chain(hops: &[[String; 3]]) -> Result<FactChain, String> {
    let triplets = hops
        .iter()
        .map(|[s, r, o]| FactTriplet::new(s, r, o).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    FactChain::new(triplets).map_err(|e| e.to_string())
}

pub fn load_mquake(path: &Path, split: &str) -> Result<LoadedDataset, DatasetError> {
    let records = read_records(path)?;
    let mut data = LoadedDataset::default();
    for (index, record) in records.iter().enumerate() {
        let case_id = match record.get("case_id") {
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
            _ => return Err(DatasetError::schema(index, "case_id")),
        };
        let questions = string_list(record.get("questions"));
        if questions.is_empty() {
            return Err(DatasetError::schema(index, "questions"));
        }
        let rewrites = record
            .get("requested_rewrite")
            .and_then(Value::as_array)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| DatasetError::schema(index, "requested_rewrite"))?;
        let gold = str_field(record, index, "new_answer")?.to_string();
        let aliases = string_list(record.get("new_answer_alias"));
        let original = triples(record, index, "triples_labeled")?;
        let edited = triples(record, index, "new_triples_labeled")?;
        let edit_triples = triples(record, index, "edit_triples_labeled")?;
        if edit_triples.len() != rewrites.len() {
            return Err(DatasetError::schema(index, "orig.edit_triples_labeled"));
        }

        let mut reasons = Vec::new();
        let mut edits = Vec::new();
        for (rewrite, [subject, relation, _]) in rewrites.iter().zip(&edit_triples) {
            let old = nested_str(rewrite, index, "target_true", "str")?;
            let new = nested_str(rewrite, index, "target_new", "str")?;
            let prompt = str_field(rewrite, index, "prompt")?;
            match cloze_to_template(prompt) {
                Some(t) => data.templates.insert_statement(relation, t),
                None => log::warn!("record {index}: prompt {prompt:?} has no {{}} slot, relation {relation:?} uses the generic template"),
            }
            match FactTriplet::new(subject, relation, old).and_then(|base| Edit::new(base, new)) {
                Ok(e) => edits.push(e),
                Err(e) => reasons.push(format!("edit: {e}")),
            }
        }
        let original_chain = chain(&original).map_err(|e| reasons.push(format!("original chain: {e}")));
        let edited_chain = chain(&edited).map_err(|e| reasons.push(format!("edited chain: {e}")));
        let (Ok(original_chain), Ok(edited_chain)) = (original_chain, edited_chain) else {
            data.reject(index, Some(case_id), Some(split.to_string()), reasons);
            continue;
        };
        if !reasons.is_empty() {
            data.reject(index, Some(case_id), Some(split.to_string()), reasons);
            continue;
        }
        let hop_count = edited_chain.len();
        let case = MultiHopCase {
            case_id,
            questions: questions.into_iter().take(MultiHopCase::MAX_QUESTIONS).collect(),
            original_chain,
            edited_chain,
            edits,
            gold_answer: gold,
            answer_aliases: aliases,
            hop_count,
            tag: (!split.is_empty()).then(|| split.to_string()),
        };
        data.admit(index, case);
    }
    Ok(data)
}
