//! Score calibration with structural features.
//!
//! Steps, in order: drop unreliable mutual edges, min-max normalize, build
//! candidate structure, compute features, ask the large model for a penalty
//! per candidate parent, and rescale `s' = s * (1 - penalty)`.

mod features;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use features::{compute_features, CandidateGraph, StructuralFeatures};

use crate::gateway::{ChatRequest, Gateway, GatewayError, SchemaTag, Structured, MAX_PENALTY};
use crate::par::parallel_map;
use crate::taxonomy::{CandidateEdge, EdgeStage};

#[derive(Debug, thiserror::Error)]
#[error("penalties for {child:?}: {source}")]
pub struct CalibrationError {
    pub child: String,
    #[source]
    pub source: GatewayError,
}

/// For every pair present in both directions: drop both when their scores
/// are within `tau_m` of each other, otherwise keep only the stronger one.
pub fn filter_mutual_edges(edges: &[CandidateEdge], tau_m: f64) -> Vec<CandidateEdge> {
    let score: BTreeMap<(&str, &str), f64> =
        edges.iter().map(|e| ((e.child.as_str(), e.parent.as_str()), e.score)).collect();
    edges
        .iter()
        .filter(|e| match score.get(&(e.parent.as_str(), e.child.as_str())) {
            None => true,
            Some(&reverse) => (e.score - reverse).abs() > tau_m && e.score > reverse,
        })
        .cloned()
        .collect()
}

/// Global min-max normalization. A degenerate range maps every score to 1.
pub fn normalize_scores(edges: &[CandidateEdge]) -> Vec<CandidateEdge> {
    let (lo, hi) = edges
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.score), hi.max(e.score)));
    edges
        .iter()
        .map(|e| {
            let s = if hi > lo { (e.score - lo) / (hi - lo) } else { 1.0 };
            CandidateEdge { score: s, ..e.clone() }
        })
        .collect()
}

pub fn filter_and_normalize(edges: &[CandidateEdge], tau_m: f64) -> Vec<CandidateEdge> {
    let filtered = filter_mutual_edges(edges, tau_m);
    if filtered.is_empty() {
        return filtered;
    }
    normalize_scores(&filtered)
}

/// One line of the calibration artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedEdge {
    pub child: String,
    pub parent: String,
    pub base_score: f64,
    pub features: StructuralFeatures,
    pub penalty: f64,
    pub final_score: f64,
}

impl CalibratedEdge {
    pub fn new(child: &str, parent: &str, base_score: f64, features: StructuralFeatures, penalty: f64) -> Self {
        let penalty = penalty.clamp(0.0, MAX_PENALTY);
        CalibratedEdge {
            child: child.to_string(),
            parent: parent.to_string(),
            base_score,
            features,
            penalty,
            final_score: base_score * (1.0 - penalty),
        }
    }

    pub fn to_candidate(&self) -> CandidateEdge {
        CandidateEdge::new(&self.child, &self.parent, self.final_score, EdgeStage::Calibrated)
    }
}

/// Source of per-parent penalties for one child.
pub trait PenaltySource: Sync {
    fn penalties(
        &self,
        child: &str,
        parents: &[(String, StructuralFeatures)],
    ) -> Result<BTreeMap<String, f64>, CalibrationError>;
}

impl<F> PenaltySource for F
where
    F: Fn(&str, &[(String, StructuralFeatures)]) -> BTreeMap<String, f64> + Sync,
{
    fn penalties(
        &self,
        child: &str,
        parents: &[(String, StructuralFeatures)],
    ) -> Result<BTreeMap<String, f64>, CalibrationError> {
        Ok(self(child, parents))
    }
}

pub const PENALTY_SYSTEM_PROMPT: &str = "You are an expert taxonomist calibrating candidate parent scores \
using structural evidence. You answer with a single JSON object and nothing else.";

pub fn penalty_request(
    model: &str,
    child: &str,
    root: &str,
    root_definition: &str,
    parents: &[(String, StructuralFeatures)],
) -> ChatRequest {
    let mut listing = String::new();
    for (p, f) in parents {
        listing.push_str(&format!(
            "- {p}: margin={:.4}, popularity={:.4}, skip_support={:.4}, sibling_cohesion={:.4}, pullback={:.4}, depth_penalty={:.4}\n",
            f.margin, f.popularity, f.skip_support, f.sibling_cohesion, f.pullback, f.depth_penalty
        ));
    }
    let user = format!(
        "Root topic: {root}\n\
         Root definition: {root_definition}\n\
         Child term: {child}\n\n\
         Candidate parents with structural features:\n{listing}\n\
         Feature meanings:\n\
         - margin: confidence lead of this candidate over the best competing candidate for the child.\n\
         - popularity: fraction of all child terms that list this candidate; high values suggest an overly general parent.\n\
         - skip_support: evidence of an intermediate node between child and candidate; high values suggest an ancestor rather than the direct parent.\n\
         - sibling_cohesion: how similar the candidate sets of this candidate's other children are; high values suggest a coherent grouping.\n\
         - pullback: how many of the child's other candidates themselves take this candidate as a parent.\n\
         - depth_penalty: shallowness of the candidate below the root; high values suggest a general concept.\n\n\
         Evaluate the is-a relation strictly within the semantic scope of the root topic. Compare all candidates \
         for this child and estimate how suitable each is as the direct parent. Assign each candidate a penalty \
         between 0 and 0.5: larger when the candidate is overly general, is more likely an ancestor than the \
         direct parent, or is otherwise unsuitable; 0 when it is a fitting direct parent.\n\n\
         Return JSON in exactly this form: {{\"child\": \"{child}\", \"penalties\": [{{\"parent\": \"<candidate>\", \"penalty\": <value>}}]}}"
    );
    let names: Vec<&str> = parents.iter().map(|(p, _)| p.as_str()).collect();
    ChatRequest::new(model, SchemaTag::Penalty, PENALTY_SYSTEM_PROMPT.to_string(), user)
        .with_meta("child", child)
        .with_meta("parents", names)
}

/// Penalties from the large model, one prompt per child.
pub struct LlmPenalties<'a> {
    pub gateway: &'a Gateway,
    pub model: &'a str,
    pub root: &'a str,
    pub root_definition: &'a str,
}

impl PenaltySource for LlmPenalties<'_> {
    fn penalties(
        &self,
        child: &str,
        parents: &[(String, StructuralFeatures)],
    ) -> Result<BTreeMap<String, f64>, CalibrationError> {
        llm_penalties(self.gateway, self.model, child, parents, self.root, self.root_definition)
    }
}

/// Missing parents default to 0; invalid output (after the reprompt) or a
/// transport failure leaves every penalty at 0. Replay misses and
/// authentication errors propagate.
pub fn llm_penalties(
    gateway: &Gateway,
    model: &str,
    child: &str,
    parents: &[(String, StructuralFeatures)],
    root: &str,
    root_definition: &str,
) -> Result<BTreeMap<String, f64>, CalibrationError> {
    let mut out: BTreeMap<String, f64> = parents.iter().map(|(p, _)| (p.clone(), 0.0)).collect();
    if parents.is_empty() {
        return Ok(out);
    }
    let req = penalty_request(model, child, root, root_definition, parents);
    match gateway.chat_structured(&req, None) {
        Ok(Structured::Penalties(items)) => {
            for (p, v) in items {
                match out.get_mut(&p) {
                    Some(slot) => *slot = v,
                    None => log::debug!("penalty for non-candidate {p:?} of {child:?} ignored"),
                }
            }
        }
        Ok(other) => unreachable!("penalty schema produced {other:?}"),
        Err(e) if e.is_output_error() || matches!(e, GatewayError::Transport(_)) => {
            log::warn!("penalties for {child:?} unavailable, leaving scores unchanged: {e}");
        }
        Err(source) => return Err(CalibrationError { child: child.to_string(), source }),
    }
    Ok(out)
}

/// Full calibration pass. Returns one record per surviving edge, ordered
/// by (child, parent).
pub fn calibrate(
    edges: &[CandidateEdge],
    root: &str,
    delta: f64,
    tau_m: f64,
    penalties: &dyn PenaltySource,
    workers: usize,
) -> Result<Vec<CalibratedEdge>, CalibrationError> {
    let normalized = filter_and_normalize(edges, tau_m);
    if normalized.is_empty() {
        return Ok(Vec::new());
    }
    let features = compute_features(&normalized, root, delta);

    let mut per_child: BTreeMap<&str, Vec<(String, StructuralFeatures)>> = BTreeMap::new();
    for ((t, p), f) in &features {
        per_child.entry(t.as_str()).or_default().push((p.clone(), *f));
    }
    let jobs: Vec<(&str, Vec<(String, StructuralFeatures)>)> = per_child.into_iter().collect();
    let answers = parallel_map(&jobs, workers, |(child, parents)| penalties.penalties(child, parents));

    let mut penalty: BTreeMap<(String, String), f64> = BTreeMap::new();
    for ((child, _), answer) in jobs.iter().zip(answers) {
        for (p, v) in answer? {
            penalty.insert((child.to_string(), p), v);
        }
    }

    let mut out: Vec<CalibratedEdge> = normalized
        .iter()
        .map(|e| {
            let key = (e.child.clone(), e.parent.clone());
            let p = penalty.get(&key).copied().unwrap_or(0.0);
            CalibratedEdge::new(&e.child, &e.parent, e.score, features[&key], p)
        })
        .collect();
    out.sort_by(|a, b| (&a.child, &a.parent).cmp(&(&b.child, &b.parent)));
    Ok(out)
}

/// Distinct child terms of an edge set.
pub fn child_set(edges: &[CandidateEdge]) -> BTreeSet<&str> {
    edges.iter().map(|e| e.child.as_str()).collect()
}
