//! RippleEdit records. Each record carries one edit and probe groups keyed
//! by category:
//!
//! ```json
//! {"id": "popular-3", "example_type": "popular",
//!  "edit": {"subject": "Leonardo DiCaprio", "relation": "country of citizenship",
//!           "target": "Syria", "original": "United States of America",
//!           "template": "{s} is a citizen of {o}"},
//!  "Compositionality_I": [{"test_queries": [{"prompt": "...", "relation": "capital",
//!      "answers": [{"value": "Damascus", "aliases": ["Dimashq"]}],
//!      "original_answer": "Washington"}]}],
//!  "Compositionality_II": [{"test_queries": [{"prompt": "...", "subject": "Titanic",
//!      "relation": "cast member", "answers": [{"value": "Syria"}]}]}],
//!  "Subject_Aliasing": [{"test_queries": [{"prompt": "...", "subject": "Leo DiCaprio",
//!      "answers": [{"value": "Syria"}]}]}]}
//! ```
//!
//! Mapping, with the edit `(s, r, o → o*)`:
//! * `Compositionality_I`: `(s, r, o*) → (o*, q.relation, answer)`.
//! * `Compositionality_II`: `(q.subject, q.relation, s) → (s, r, o*)`.
//! * `Subject_Aliasing`: the one-hop `(s, r, o*)` asked through an alias.
//!
//! Groups of the other categories are quarantined under their category.
//! Up to three queries of a group become the case's paraphrases.

use std::path::Path;

use serde_json::Value;

use super::{read_records, str_field, string_list, DatasetError, LoadedDataset};
use crate::model::{Edit, FactChain, FactTriplet, MultiHopCase, PromptTemplate};

pub const RIPPLE_CATEGORIES: &[&str] = &[
    "Compositionality_I",
    "Compositionality_II",
    "Subject_Aliasing",
    "Logical_Generalization",
    "Relation_Specificity",
    "Forgetfulness",
    "Preservation",
];

struct EditSpec<'v> {
    subject: &'v str,
    relation: &'v str,
    target: &'v str,
    original: &'v str,
}

struct Query {
    prompt: String,
    subject: Option<String>,
    relation: Option<String>,
    answer: String,
    aliases: Vec<String>,
    original_answer: Option<String>,
}

fn parse_query(q: &Value) -> Option<Query> {
    let prompt = q.get("prompt")?.as_str()?.trim().to_string();
    let mut answers = q.get("answers")?.as_array()?.iter();
    let first = answers.next()?;
    let answer = first.get("value")?.as_str()?.trim().to_string();
    if prompt.is_empty() || answer.is_empty() {
        return None;
    }
    let mut aliases = string_list(first.get("aliases"));
    for other in answers {
        if let Some(v) = other.get("value").and_then(Value::as_str) {
            aliases.push(v.trim().to_string());
        }
        aliases.extend(string_list(other.get("aliases")));
    }
    let text = |key: &str| q.get(key).and_then(Value::as_str).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    Some(Query {
        prompt,
        subject: text("subject"),
        relation: text("relation"),
        answer,
        aliases,
        original_answer: text("original_answer"),
    })
}

fn t(s: &str, r: &str, o: &str) -> Result<FactTriplet, String> {
    FactTriplet::new(s, r, o).map_err(|e| e.to_string())
}

/// Original and edited chains for one probe group, or the reason it has none.
fn chains(category: &str, edit: &EditSpec<'_>, q: &Query) -> Result<(Vec<FactTriplet>, Vec<FactTriplet>), String> {
    let EditSpec { subject, relation, target, original } = *edit;
    match category {
        "Compositionality_I" => {
            let rel = q.relation.as_deref().ok_or("query has no relation")?;
            let mut orig = vec![t(subject, relation, original)?];
            if let Some(prev) = &q.original_answer {
                orig.push(t(original, rel, prev)?);
            }
            Ok((orig, vec![t(subject, relation, target)?, t(target, rel, &q.answer)?]))
        }
        "Compositionality_II" => {
            let head = q.subject.as_deref().ok_or("query has no subject")?;
            let rel = q.relation.as_deref().ok_or("query has no relation")?;
            if q.answer != target {
                return Err(format!("answer {:?} is not the edit target {target:?}", q.answer));
            }
            Ok((
                vec![t(head, rel, subject)?, t(subject, relation, original)?],
                vec![t(head, rel, subject)?, t(subject, relation, target)?],
            ))
        }
        "Subject_Aliasing" => {
            if q.answer != target {
                return Err(format!("answer {:?} is not the edit target {target:?}", q.answer));
            }
            Ok((vec![t(subject, relation, original)?], vec![t(subject, relation, target)?]))
        }
        other => Err(format!("category {other} has no compositional chain form")),
    }
}

pub fn load_rippleedit(path: &Path, subset: &str) -> Result<LoadedDataset, DatasetError> {
    let records = read_records(path)?;
    let mut data = LoadedDataset::default();
    for (index, record) in records.iter().enumerate() {
        let subset_tag =
            record.get("example_type").and_then(Value::as_str).filter(|s| !s.is_empty()).unwrap_or(subset).to_string();
        let id = record
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("{subset_tag}-{index}"));
        let raw_edit = record.get("edit").ok_or_else(|| DatasetError::schema(index, "edit"))?;
        let field = |name: &str| {
            str_field(raw_edit, index, name).map_err(|_| DatasetError::schema(index, format!("edit.{name}")))
        };
        let edit = EditSpec {
            subject: field("subject")?,
            relation: field("relation")?,
            target: field("target")?,
            original: field("original")?,
        };
        match raw_edit.get("template").and_then(Value::as_str).map(PromptTemplate::new) {
            Some(Ok(tpl)) => data.templates.insert_statement(edit.relation, tpl),
            Some(Err(e)) => log::warn!("record {index}: bad template ({e}), using the generic one"),
            None if !data.templates.contains(edit.relation) => {
                log::warn!("record {index}: no template for {:?}, using the generic one", edit.relation)
            }
            None => {}
        }
        let base = FactTriplet::new(edit.subject, edit.relation, edit.original)
            .and_then(|b| Edit::new(b, edit.target))
            .map_err(|_| DatasetError::schema(index, "edit"))?;

        for category in RIPPLE_CATEGORIES {
            let Some(groups) = record.get(*category).and_then(Value::as_array) else { continue };
            for (g, group) in groups.iter().enumerate() {
                let case_id = format!("{id}/{category}/{g}");
                let queries: Vec<Query> = group
                    .get("test_queries")
                    .and_then(Value::as_array)
                    .map(|qs| qs.iter().filter_map(parse_query).collect())
                    .unwrap_or_default();
                let Some(first) = queries.first() else {
                    data.reject(index, Some(case_id), Some(category.to_string()), vec!["no usable test query".into()]);
                    continue;
                };
                let built = chains(category, &edit, first).and_then(|(orig, new)| {
                    Ok((
                        FactChain::new(orig).map_err(|e| e.to_string())?,
                        FactChain::new(new).map_err(|e| e.to_string())?,
                    ))
                });
                let (original_chain, edited_chain) = match built {
                    Ok(c) => c,
                    Err(reason) => {
                        data.reject(index, Some(case_id), Some(category.to_string()), vec![reason]);
                        continue;
                    }
                };
                let hop_count = edited_chain.len();
                let case = MultiHopCase {
                    case_id,
                    questions: queries.iter().take(MultiHopCase::MAX_QUESTIONS).map(|q| q.prompt.clone()).collect(),
                    original_chain,
                    edited_chain,
                    edits: vec![base.clone()],
                    gold_answer: first.answer.clone(),
                    answer_aliases: first.aliases.clone(),
                    hop_count,
                    tag: Some(subset_tag.clone()),
                };
                data.admit(index, case);
            }
        }
    }
    Ok(data)
}
