//! Structured-output extraction and validation for every prompt family.

use std::collections::BTreeSet;

use serde_json::{Map, Value};

use super::{GatewayError, SchemaTag};

/// Scores from the ranking prompt are kept inside the open unit interval.
pub const SCORE_EPSILON: f64 = 1e-6;
pub const MAX_PENALTY: f64 = 0.5;
/// Refined definitions are cut to this many words.
pub const DEFINITION_WORD_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    Definition(String),
    IsA(bool),
    Ranked(Vec<(String, f64)>),
    Penalties(Vec<(String, f64)>),
}

/// Finds the first JSON object embedded in `raw`, skipping prose and code
/// fences around it.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Parses and validates a raw response. When `vocabulary` is given, every
/// term the response names must belong to it.
pub fn parse_structured(
    raw: &str,
    tag: SchemaTag,
    vocabulary: Option<&BTreeSet<String>>,
) -> Result<Structured, GatewayError> {
    let obj = extract_json_object(raw).ok_or_else(|| GatewayError::Parse { raw: raw.to_string() })?;
    let schema_err = |msg: String| GatewayError::Schema { message: msg, raw: raw.to_string() };

    let check_keys = |obj: &Map<String, Value>, required: &[&str], optional: &[&str]| {
        for k in required {
            if !obj.contains_key(*k) {
                return Err(schema_err(format!("missing field {k:?}")));
            }
        }
        for k in obj.keys() {
            if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                return Err(schema_err(format!("unexpected field {k:?}")));
            }
        }
        Ok(())
    };

    match tag {
        SchemaTag::RefineDefinition => {
            check_keys(&obj, &["definition"], &["term"])?;
            let text = obj["definition"]
                .as_str()
                .ok_or_else(|| schema_err("definition must be a string".into()))?;
            let words: Vec<&str> = text.split_whitespace().take(DEFINITION_WORD_CAP).collect();
            if words.is_empty() {
                return Err(schema_err("definition is empty".into()));
            }
            Ok(Structured::Definition(words.join(" ")))
        }
        SchemaTag::IsaJudgment => {
            check_keys(&obj, &["answer"], &[])?;
            match &obj["answer"] {
                Value::Bool(b) => Ok(Structured::IsA(*b)),
                Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                    "yes" | "true" => Ok(Structured::IsA(true)),
                    "no" | "false" => Ok(Structured::IsA(false)),
                    other => Err(schema_err(format!("answer must be yes or no, got {other:?}"))),
                },
                _ => Err(schema_err("answer must be yes or no".into())),
            }
        }
        SchemaTag::RankAndScore => {
            check_keys(&obj, &["parents"], &["child"])?;
            let items = scored_items(&obj["parents"], "score", raw, vocabulary)?;
            Ok(Structured::Ranked(
                items
                    .into_iter()
                    .map(|(p, s)| (p, s.clamp(SCORE_EPSILON, 1.0 - SCORE_EPSILON)))
                    .collect(),
            ))
        }
        SchemaTag::Penalty => {
            check_keys(&obj, &["penalties"], &["child"])?;
            let items = scored_items(&obj["penalties"], "penalty", raw, vocabulary)?;
            Ok(Structured::Penalties(
                items.into_iter().map(|(p, s)| (p, s.clamp(0.0, MAX_PENALTY))).collect(),
            ))
        }
    }
}

fn scored_items(
    list: &Value,
    value_key: &str,
    raw: &str,
    vocabulary: Option<&BTreeSet<String>>,
) -> Result<Vec<(String, f64)>, GatewayError> {
    let schema_err = |msg: String| GatewayError::Schema { message: msg, raw: raw.to_string() };
    let arr = list.as_array().ok_or_else(|| schema_err("expected an array".into()))?;
    let mut out = Vec::with_capacity(arr.len());
    for item in arr {
        let obj = item.as_object().ok_or_else(|| schema_err("array items must be objects".into()))?;
        for k in obj.keys() {
            if k != "parent" && k != value_key && k != "reason" {
                return Err(schema_err(format!("unexpected field {k:?}")));
            }
        }
        let parent = obj
            .get("parent")
            .and_then(Value::as_str)
            .ok_or_else(|| schema_err("item missing string field \"parent\"".into()))?;
        let parent = crate::term::normalize_term(parent);
        let value = obj
            .get(value_key)
            .and_then(Value::as_f64)
            .filter(|v| v.is_finite())
            .ok_or_else(|| schema_err(format!("item missing numeric field {value_key:?}")))?;
        if let Some(vocab) = vocabulary {
            if !vocab.contains(&parent) {
                return Err(GatewayError::Vocabulary { term: parent, raw: raw.to_string() });
            }
        }
        out.push((parent, value));
    }
    Ok(out)
}
