//! Joint ranking of each term's fused candidates by the large model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError, SchemaTag, Structured};
use crate::term::sort_scored;

/// Confidence given to the fallback `child -> root` edge when the model
/// selects nothing usable.
pub const FALLBACK_CONFIDENCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedParent {
    pub parent: String,
    pub score: f64,
}

/// One line of the ranking artifact: P(t) with confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedParentSet {
    pub child: String,
    pub ranked: Vec<RankedParent>,
}

impl RankedParentSet {
    pub fn fallback(child: &str, root: &str) -> Self {
        RankedParentSet {
            child: child.to_string(),
            ranked: vec![RankedParent { parent: root.to_string(), score: FALLBACK_CONFIDENCE }],
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("ranking candidates of {child:?}: {source}")]
pub struct RankingError {
    pub child: String,
    #[source]
    pub source: GatewayError,
}

pub const RANK_SYSTEM_PROMPT: &str = "You are an expert taxonomist. You compare candidate parent terms \
for a child term and answer with a single JSON object and nothing else.";

pub struct RankInput<'a> {
    pub child: &'a str,
    pub child_definition: &'a str,
    /// Fused candidates, in order.
    pub candidates: &'a [String],
    pub definitions: &'a BTreeMap<String, String>,
    pub root: &'a str,
    pub root_definition: &'a str,
    pub k2: usize,
}

pub fn rank_request(model: &str, input: &RankInput<'_>) -> ChatRequest {
    let k = input.k2.min(input.candidates.len());
    let mut listing = String::new();
    for (i, c) in input.candidates.iter().enumerate() {
        let def = input.definitions.get(c).map(String::as_str).unwrap_or("");
        listing.push_str(&format!("{}. {c}: {def}\n", i + 1));
    }
    let user = format!(
        "Root topic: {root}\n\
         Root definition: {root_def}\n\
         Child term: {child}\n\
         Child definition: {child_def}\n\n\
         Candidate parent terms:\n{listing}\n\
         Within the semantic scope of the root topic, compare all candidates together and decide which are \
         the most likely direct parent (immediate hypernym) of the child term. Select exactly {k} candidates, \
         ranked from most to least likely, and give each a confidence strictly between 0 and 1. \
         Use candidate names exactly as listed.\n\n\
         Return JSON in exactly this form: {{\"child\": \"{child}\", \"parents\": [{{\"parent\": \"<candidate>\", \"score\": <confidence>}}]}}",
        root = input.root,
        root_def = input.root_definition,
        child = input.child,
        child_def = input.child_definition,
    );
    ChatRequest::new(model, SchemaTag::RankAndScore, RANK_SYSTEM_PROMPT.to_string(), user)
        .with_meta("child", input.child)
        .with_meta("candidates", input.candidates.to_vec())
        .with_meta("k", k)
}

/// Ranks the candidates of one child. Names outside `vocabulary` are an
/// error; names inside it but outside the candidate list are dropped.
pub fn rank_and_score(
    gateway: &Gateway,
    model: &str,
    input: &RankInput<'_>,
    vocabulary: &BTreeSet<String>,
) -> Result<RankedParentSet, RankingError> {
    if input.candidates.is_empty() {
        log::warn!("{:?} has no candidates; attaching to the root", input.child);
        return Ok(RankedParentSet::fallback(input.child, input.root));
    }
    let req = rank_request(model, input);
    let items = match gateway.chat_structured(&req, Some(vocabulary)) {
        Ok(Structured::Ranked(items)) => items,
        Ok(other) => unreachable!("rank schema produced {other:?}"),
        Err(source) => return Err(RankingError { child: input.child.to_string(), source }),
    };
    Ok(select_ranked(input.child, input.root, input.candidates, items, input.k2))
}

/// Keeps entries naming a candidate (first mention wins), orders them by
/// confidence then name, and cuts to `k2`. Falls back to the root when
/// nothing survives.
pub fn select_ranked(
    child: &str,
    root: &str,
    candidates: &[String],
    items: Vec<(String, f64)>,
    k2: usize,
) -> RankedParentSet {
    let allowed: BTreeSet<&str> = candidates.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut kept: Vec<(String, f64)> = items
        .into_iter()
        .filter(|(p, _)| p != child && allowed.contains(p.as_str()))
        .filter(|(p, _)| seen.insert(p.clone()))
        .collect();
    if kept.is_empty() {
        log::warn!("no usable parent selected for {child:?}; attaching to the root");
        return RankedParentSet::fallback(child, root);
    }
    sort_scored(&mut kept);
    kept.truncate(k2.min(candidates.len()));
    RankedParentSet {
        child: child.to_string(),
        ranked: kept.into_iter().map(|(parent, score)| RankedParent { parent, score }).collect(),
    }
}
