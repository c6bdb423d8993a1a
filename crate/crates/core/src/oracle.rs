//! Backends that answer from a known gold tree. Used to synthesize replay
//! transcripts for offline end-to-end runs.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::gateway::{ChatBackend, ChatRequest, EmbeddingBackend, GatewayError, SchemaTag};
use crate::taxonomy::Taxonomy;

/// Score given to the gold parent in a ranking answer.
pub const GOLD_PARENT_SCORE: f64 = 0.95;
/// Score of the best non-gold candidate; later ones step down from here.
pub const OTHER_SCORE: f64 = 0.5;

pub struct GoldOracle {
    root: String,
    parent: BTreeMap<String, String>,
    ancestors: BTreeMap<String, BTreeSet<String>>,
}

impl GoldOracle {
    pub fn new(gold: &Taxonomy) -> Self {
        let parent: BTreeMap<String, String> = gold.edges.iter().map(|(c, p)| (c.clone(), p.clone())).collect();
        let mut ancestors = BTreeMap::new();
        for n in &gold.nodes {
            let mut up = BTreeSet::new();
            let mut cur = n;
            while let Some(p) = parent.get(cur) {
                if !up.insert(p.clone()) {
                    break;
                }
                cur = p;
            }
            ancestors.insert(n.clone(), up);
        }
        GoldOracle { root: gold.root.clone(), parent, ancestors }
    }

    fn is_ancestor(&self, anchor: &str, query: &str) -> bool {
        self.ancestors.get(query).is_some_and(|a| a.contains(anchor))
    }

    fn answer(&self, req: &ChatRequest) -> Result<Value, String> {
        let meta = |k: &str| req.metadata.get(k).ok_or_else(|| format!("request lacks metadata {k:?}"));
        let text = |k: &str| meta(k).and_then(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("{k} is not a string")));
        let names = |k: &str| -> Result<Vec<String>, String> {
            serde_json::from_value(meta(k)?.clone()).map_err(|e| format!("{k}: {e}"))
        };
        Ok(match req.response_schema_tag {
            SchemaTag::IsaJudgment => {
                let yes = self.is_ancestor(&text("anchor")?, &text("query")?);
                json!({"answer": if yes { "yes" } else { "no" }})
            }
            SchemaTag::RankAndScore => {
                let child = text("child")?;
                let candidates = names("candidates")?;
                let k = meta("k")?.as_u64().ok_or("k is not an integer")? as usize;
                let gold = self.parent.get(&child);
                let mut out = Vec::new();
                if let Some(p) = gold.filter(|p| candidates.contains(p)) {
                    out.push(json!({"parent": p, "score": GOLD_PARENT_SCORE}));
                }
                let mut next = OTHER_SCORE;
                for c in candidates.iter().filter(|c| Some(*c) != gold) {
                    out.push(json!({"parent": c, "score": next}));
                    next = (next - 0.05).max(0.05);
                }
                out.truncate(k.min(candidates.len()));
                json!({"child": child, "parents": out})
            }
            SchemaTag::Penalty => {
                let child = text("child")?;
                let parents = names("parents")?;
                let items: Vec<Value> = parents.iter().map(|p| json!({"parent": p, "penalty": 0.0})).collect();
                json!({"child": child, "penalties": items})
            }
            SchemaTag::RefineDefinition => {
                let term = text("term")?;
                let root = req.metadata.get("root").and_then(Value::as_str).unwrap_or(&self.root);
                json!({"term": term, "definition": format!("{term} is a concept in the domain of {root}.")})
            }
        })
    }
}

impl ChatBackend for GoldOracle {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        self.answer(req).map(|v| v.to_string()).map_err(GatewayError::InvalidInput)
    }
}

/// Deterministic bag-of-words vectors: each lowercase alphanumeric token
/// adds 1 to a hashed bucket.
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: 64 }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

impl HashingEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            v[(fnv1a(&tok.to_lowercase()) % self.dim as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
