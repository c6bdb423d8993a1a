//! Ancestor-F1 and Edge-F1 between a predicted and a gold taxonomy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::taxonomy::{validate_taxonomy, Taxonomy, Violation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error("taxonomy is not a valid tree: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidTaxonomy(Vec<Violation>),
    #[error("node sets differ (only in prediction: {only_pred:?}; only in gold: {only_gold:?})")]
    NodeSetMismatch { only_pred: Vec<String>, only_gold: Vec<String> },
    #[error("roots differ: predicted {pred:?}, gold {gold:?}")]
    RootMismatch { pred: String, gold: String },
    #[error("nothing to average")]
    Empty,
}

/// Every `(ancestor, descendant)` pair with `ancestor != descendant`.
pub fn ancestor_closure(t: &Taxonomy) -> Result<BTreeSet<(String, String)>, EvaluationError> {
    let violations = validate_taxonomy(t);
    if !violations.is_empty() {
        return Err(EvaluationError::InvalidTaxonomy(violations));
    }
    let children = t.children_map();
    let mut out = BTreeSet::new();
    // DFS from the root carrying the current root-to-node path.
    let mut stack: Vec<(&str, Vec<&str>)> = vec![(t.root.as_str(), Vec::new())];
    while let Some((node, path)) = stack.pop() {
        for &a in &path {
            out.insert((a.to_string(), node.to_string()));
        }
        let mut next_path = path.clone();
        next_path.push(node);
        for &c in children.get(node).into_iter().flatten() {
            stack.push((c, next_path.clone()));
        }
    }
    Ok(out)
}

/// Match / predicted / gold counts for one relation type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn of<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> Self {
        Counts { matched: pred.intersection(gold).count(), predicted: pred.len(), gold: gold.len() }
    }

    fn add(self, o: Counts) -> Counts {
        Counts {
            matched: self.matched + o.matched,
            predicted: self.predicted + o.predicted,
            gold: self.gold + o.gold,
        }
    }

    /// (precision, recall, F1); an empty denominator yields 0.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.matched, self.predicted);
        let r = ratio(self.matched, self.gold);
        (p, r, f1(p, r))
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTuple {
    pub ancestor: Counts,
    pub edge: Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ancestor_precision: f64,
    pub ancestor_recall: f64,
    pub ancestor_f1: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
}

impl MetricsReport {
    pub fn from_counts(c: &CountTuple) -> Self {
        let (ancestor_precision, ancestor_recall, ancestor_f1) = c.ancestor.prf();
        let (edge_precision, edge_recall, edge_f1) = c.edge.prf();
        MetricsReport { ancestor_precision, ancestor_recall, ancestor_f1, edge_precision, edge_recall, edge_f1 }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.ancestor_precision,
            self.ancestor_recall,
            self.ancestor_f1,
            self.edge_precision,
            self.edge_recall,
            self.edge_f1,
        ]
    }
}

pub fn count(pred: &Taxonomy, gold: &Taxonomy) -> Result<CountTuple, EvaluationError> {
    if pred.root != gold.root {
        return Err(EvaluationError::RootMismatch { pred: pred.root.clone(), gold: gold.root.clone() });
    }
    if pred.nodes != gold.nodes {
        return Err(EvaluationError::NodeSetMismatch {
            only_pred: pred.nodes.difference(&gold.nodes).cloned().collect(),
            only_gold: gold.nodes.difference(&pred.nodes).cloned().collect(),
        });
    }
    Ok(CountTuple {
        ancestor: Counts::of(&ancestor_closure(pred)?, &ancestor_closure(gold)?),
        edge: Counts::of(&pred.edges, &gold.edges),
    })
}

pub fn score(pred: &Taxonomy, gold: &Taxonomy) -> Result<MetricsReport, EvaluationError> {
    Ok(MetricsReport::from_counts(&count(pred, gold)?))
}

/// Pools counts across taxonomies before computing P/R/F1.
pub fn micro_average(counts: &[CountTuple]) -> Result<MetricsReport, EvaluationError> {
    if counts.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let pooled = counts.iter().fold(CountTuple::default(), |acc, c| CountTuple {
        ancestor: acc.ancestor.add(c.ancestor),
        edge: acc.edge.add(c.edge),
    });
    Ok(MetricsReport::from_counts(&pooled))
}

/// Percentages with exactly two decimals, as written to report files.
#[derive(Debug, Serialize)]
pub struct PercentReport {
    #[serde(rename = "P_a")]
    pub p_a: Box<RawValue>,
    #[serde(rename = "R_a")]
    pub r_a: Box<RawValue>,
    #[serde(rename = "F1_a")]
    pub f1_a: Box<RawValue>,
    #[serde(rename = "P_e")]
    pub p_e: Box<RawValue>,
    #[serde(rename = "R_e")]
    pub r_e: Box<RawValue>,
    #[serde(rename = "F1_e")]
    pub f1_e: Box<RawValue>,
}

pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

impl From<&MetricsReport> for PercentReport {
    fn from(m: &MetricsReport) -> Self {
        let raw = |x: f64| RawValue::from_string(percent(x)).expect("formatted number is valid JSON");
        PercentReport {
            p_a: raw(m.ancestor_precision),
            r_a: raw(m.ancestor_recall),
            f1_a: raw(m.ancestor_f1),
            p_e: raw(m.edge_precision),
            r_e: raw(m.edge_recall),
            f1_e: raw(m.edge_f1),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MetricsFile {
    pub averaging: &'static str,
    pub per_taxonomy: BTreeMap<String, PercentReport>,
    pub micro: PercentReport,
}

impl MetricsFile {
    pub fn new(per: &[(String, CountTuple)]) -> Result<Self, EvaluationError> {
        let counts: Vec<CountTuple> = per.iter().map(|(_, c)| *c).collect();
        let micro = micro_average(&counts)?;
        Ok(MetricsFile {
            averaging: "micro",
            per_taxonomy: per
                .iter()
                .map(|(name, c)| (name.clone(), PercentReport::from(&MetricsReport::from_counts(c))))
                .collect(),
            micro: PercentReport::from(&micro),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Plain-text rendering for the terminal.
pub fn render(m: &MetricsReport) -> String {
    format!(
        "P_a {}  R_a {}  F1_a {}\nP_e {}  R_e {}  F1_e {}",
        percent(m.ancestor_precision),
        percent(m.ancestor_recall),
        percent(m.ancestor_f1),
        percent(m.edge_precision),
        percent(m.edge_recall),
        percent(m.edge_f1)
    )
}
