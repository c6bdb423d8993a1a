use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Which response schema a chat request expects back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaTag {
    RefineDefinition,
    IsaJudgment,
    RankAndScore,
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub response_schema_tag: SchemaTag,
    /// Structured context of the request (child, anchor, candidates, ...).
    /// Part of the digest; never sent to the provider.
    #[serde(default)]
    pub metadata: HashMap<String, Value>,
}

impl ChatRequest {
    pub fn new(model_id: &str, tag: SchemaTag, system_prompt: String, user_prompt: String) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            system_prompt,
            user_prompt,
            temperature: 0.0,
            max_output_tokens: 1024,
            response_schema_tag: tag,
            metadata: HashMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("chat request serializes")
    }

    pub fn digest(&self) -> String {
        digest_value(&self.to_value())
    }
}

/// Request key for one embedding lookup.
pub fn embedding_request(model: &str, text: &str) -> Value {
    serde_json::json!({ "kind": "embedding", "model": model, "text": text })
}

/// Writes `v` as JSON with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(xs) => {
                out.push('[');
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(x, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(v, &mut out);
    out
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn digest_value(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(v).as_bytes()))
}
