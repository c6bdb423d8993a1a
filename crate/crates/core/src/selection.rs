//! Hybrid parent candidate selection.
//!
//! Two independent candidate lists are built per term and fused:
//!
//! * template voting: the lightweight model judges each `(query, anchor)`
//!   pair under every is-a template; the number of "yes" answers is the
//!   pair's score;
//! * definition matching: cosine similarity between unit embeddings of
//!   `name: definition`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::Mutuality;
use crate::gateway::{ChatRequest, Gateway, GatewayError, SchemaTag, Structured};
use crate::term::canonical_cmp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("template {0:?} must contain <query> and <anchor> exactly once")]
    BadTemplate(String),
    #[error("template set is empty")]
    NoTemplates,
    #[error("no embedding for term {0:?}")]
    MissingEmbedding(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: Vec<String>,
}

impl TemplateSet {
    pub fn new(templates: &[String]) -> Result<Self, SelectionError> {
        if templates.is_empty() {
            return Err(SelectionError::NoTemplates);
        }
        for t in templates {
            if t.matches("<query>").count() != 1 || t.matches("<anchor>").count() != 1 {
                return Err(SelectionError::BadTemplate(t.clone()));
            }
        }
        Ok(TemplateSet { templates: templates.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(String::as_str)
    }

    pub fn instantiate(&self, index: usize, query: &str, anchor: &str) -> String {
        self.templates[index].replace("<query>", query).replace("<anchor>", anchor)
    }
}

/// Per-template judgments for one `(query, anchor)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsaVote {
    pub query: String,
    pub anchor: String,
    pub per_template: Vec<bool>,
    pub score: usize,
}

impl IsaVote {
    pub fn from_judgments(query: &str, anchor: &str, per_template: Vec<bool>) -> Self {
        let score = per_template.iter().filter(|&&b| b).count();
        IsaVote { query: query.into(), anchor: anchor.into(), per_template, score }
    }
}

pub const ISA_SYSTEM_PROMPT: &str = "You judge whether an is-a (hypernymy) relation holds between two terms. \
You answer with a single JSON object and nothing else.";

pub fn isa_request(model: &str, templates: &TemplateSet, index: usize, query: &str, anchor: &str) -> ChatRequest {
    let sentence = templates.instantiate(index, query, anchor);
    let user = format!(
        "Statement: \"{sentence}\"\n\
         In this statement \"{query}\" is the candidate child term and \"{anchor}\" is the candidate parent term.\n\
         Is the statement true, that is, is \"{query}\" a kind of \"{anchor}\"?\n\
         Return {{\"answer\": \"yes\"}} or {{\"answer\": \"no\"}}."
    );
    ChatRequest::new(model, SchemaTag::IsaJudgment, ISA_SYSTEM_PROMPT.to_string(), user)
        .with_max_tokens(16)
        .with_meta("query", query)
        .with_meta("anchor", anchor)
        .with_meta("template", index)
}

/// Asks the lightweight model once per template. Unparseable answers (after
/// the gateway's reprompt) count as "no"; transport and replay failures
/// propagate.
pub fn isa_vote(
    gateway: &Gateway,
    model: &str,
    query: &str,
    anchor: &str,
    templates: &TemplateSet,
) -> Result<IsaVote, GatewayError> {
    let mut judgments = Vec::with_capacity(templates.len());
    for i in 0..templates.len() {
        let req = isa_request(model, templates, i, query, anchor);
        let yes = match gateway.chat_structured(&req, None) {
            Ok(Structured::IsA(b)) => b,
            Ok(other) => unreachable!("isa schema produced {other:?}"),
            Err(e) if e.is_output_error() => {
                log::warn!("is-a judgment ({query:?}, {anchor:?}, template {i}) unusable, counted as no: {e}");
                false
            }
            Err(e) => return Err(e),
        };
        judgments.push(yes);
    }
    Ok(IsaVote::from_judgments(query, anchor, judgments))
}

/// Score(q, a) for every judged pair. Unjudged pairs score 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoteTable {
    scores: BTreeMap<(String, String), usize>,
}

impl VoteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, vote: &IsaVote) {
        self.scores.insert((vote.query.clone(), vote.anchor.clone()), vote.score);
    }

    pub fn set(&mut self, query: &str, anchor: &str, score: usize) {
        self.scores.insert((query.to_string(), anchor.to_string()), score);
    }

    pub fn score(&self, query: &str, anchor: &str) -> usize {
        self.scores.get(&(query.to_string(), anchor.to_string())).copied().unwrap_or(0)
    }
}

/// Top `k_isa` anchors for `query` by vote score, with reciprocal pruning.
pub fn isa_candidates(
    query: &str,
    vocabulary: &[String],
    votes: &VoteTable,
    k_isa: usize,
    mutuality: Mutuality,
) -> Vec<String> {
    let mut ranked: Vec<(&str, usize)> = vocabulary
        .iter()
        .filter(|a| a.as_str() != query)
        .map(|a| (a.as_str(), votes.score(query, a)))
        .filter(|&(a, s)| {
            s > 0 && (mutuality == Mutuality::Off || votes.score(a, query) <= s)
        })
        .collect();
    ranked.sort_by(|x, y| canonical_cmp((x.0, Some(x.1 as f64)), (y.0, Some(y.1 as f64))));
    ranked.into_iter().take(k_isa).map(|(a, _)| a.to_string()).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top `k_def` anchors by embedding similarity, with similarities.
pub fn definition_candidates(
    query: &str,
    vocabulary: &[String],
    embeddings: &BTreeMap<String, Vec<f64>>,
    k_def: usize,
) -> Result<Vec<(String, f64)>, SelectionError> {
    let eq = embeddings.get(query).ok_or_else(|| SelectionError::MissingEmbedding(query.to_string()))?;
    let mut ranked = Vec::with_capacity(vocabulary.len());
    for a in vocabulary.iter().filter(|a| a.as_str() != query) {
        let ea = embeddings.get(a).ok_or_else(|| SelectionError::MissingEmbedding(a.clone()))?;
        ranked.push((a.clone(), cosine(eq, ea)));
    }
    ranked.sort_by(|x, y| canonical_cmp((&x.0, Some(x.1)), (&y.0, Some(y.1))));
    ranked.truncate(k_def);
    Ok(ranked)
}

/// Order-preserving union: the is-a block first, then definition matches,
/// duplicates removed, cut to `k1`.
pub fn fuse_candidates(isa: &[String], defs: &[String], k1: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    isa.iter()
        .chain(defs)
        .filter(|p| seen.insert(p.as_str()))
        .take(k1)
        .cloned()
        .collect()
}

/// One fused candidate with the evidence that put it there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub parent: String,
    pub isa_score: Option<usize>,
    pub def_sim: Option<f64>,
}

/// One line of the candidates artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub child: String,
    pub candidates: Vec<CandidateInfo>,
}

impl CandidateList {
    pub fn parents(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.parent.clone()).collect()
    }
}

/// Candidates without selection: every other term, canonical order.
pub fn all_pairs_candidates(child: &str, terms: &[String]) -> CandidateList {
    let mut parents: Vec<&String> = terms.iter().filter(|t| t.as_str() != child).collect();
    parents.sort_by(|a, b| canonical_cmp((a, None), (b, None)));
    CandidateList {
        child: child.to_string(),
        candidates: parents
            .into_iter()
            .map(|p| CandidateInfo { parent: p.clone(), isa_score: None, def_sim: None })
            .collect(),
    }
}
