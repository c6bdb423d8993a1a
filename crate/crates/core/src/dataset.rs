//! Task files, predicted-taxonomy files, and conversion from plain edge lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::taxonomy::{validate_taxonomy, Taxonomy, Violation};
use crate::term::normalize_term;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    ParseError { path: PathBuf, message: String },
    #[error("gold taxonomy is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    GoldInvalid(Vec<Violation>),
    #[error("term mismatch: {0}")]
    TermMismatch(String),
    #[error("expected exactly one parentless node, found {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("gold edges contain a cycle through {0:?}")]
    CycleInGold(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

fn parse_err(path: &Path, message: impl ToString) -> DatasetError {
    DatasetError::ParseError { path: path.to_path_buf(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTerm {
    pub name: String,
    #[serde(default)]
    pub definition: Option<String>,
}

/// On-disk task layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFile {
    pub root: String,
    #[serde(default)]
    pub root_definition: Option<String>,
    pub terms: Vec<TaskTerm>,
    #[serde(default)]
    pub gold_edges: Option<Vec<(String, String)>>,
}

impl TaskFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task serializes")
    }
}

/// A validated task. `terms` always contains the root, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub root: String,
    pub root_definition: Option<String>,
    pub terms: Vec<TaskTerm>,
    pub gold: Option<Taxonomy>,
}

impl Task {
    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn given_definitions(&self) -> BTreeMap<String, Option<String>> {
        self.terms.iter().map(|t| (t.name.clone(), t.definition.clone())).collect()
    }
}

pub fn load_task(path: &Path) -> Result<Task, DatasetError> {
    let text = read(path)?;
    let file: TaskFile = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    task_from_file(file).map_err(|e| match e {
        DatasetError::ParseError { message, .. } => parse_err(path, message),
        other => other,
    })
}

pub fn task_from_file(file: TaskFile) -> Result<Task, DatasetError> {
    let bad = |m: String| DatasetError::ParseError { path: PathBuf::new(), message: m };
    let root = normalize_term(&file.root);
    if root.is_empty() {
        return Err(bad("root name is empty".into()));
    }
    let mut seen = BTreeSet::new();
    let mut terms = Vec::with_capacity(file.terms.len() + 1);
    for t in file.terms {
        let name = normalize_term(&t.name);
        if name.is_empty() {
            return Err(bad("a term name is empty".into()));
        }
        if !seen.insert(name.clone()) {
            return Err(bad(format!("duplicate term {name:?}")));
        }
        terms.push(TaskTerm { name, definition: t.definition });
    }
    if !seen.contains(&root) {
        terms.insert(0, TaskTerm { name: root.clone(), definition: file.root_definition.clone() });
        seen.insert(root.clone());
    }

    let gold = match file.gold_edges {
        None => None,
        Some(edges) => {
            let mut t = Taxonomy::new(root.clone());
            t.nodes = seen.clone();
            for (c, p) in edges {
                let (c, p) = (normalize_term(&c), normalize_term(&p));
                for n in [&c, &p] {
                    if !seen.contains(n) {
                        return Err(DatasetError::TermMismatch(format!("gold edge names unknown term {n:?}")));
                    }
                }
                t.edges.insert((c, p));
            }
            let violations = validate_taxonomy(&t);
            if !violations.is_empty() {
                return Err(DatasetError::GoldInvalid(violations));
            }
            Some(t)
        }
    };
    Ok(Task { root, root_definition: file.root_definition, terms, gold })
}

/// Output layout of a predicted taxonomy. `edge_scores` keys are
/// `"child|parent"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedFile {
    pub root: String,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub edge_scores: BTreeMap<String, f64>,
}

impl PredictedFile {
    pub fn new(taxonomy: &Taxonomy, weights: &BTreeMap<(String, String), f64>) -> Self {
        PredictedFile {
            root: taxonomy.root.clone(),
            edges: taxonomy.edges.iter().cloned().collect(),
            edge_scores: weights.iter().map(|((c, p), w)| (format!("{c}|{p}"), *w)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prediction serializes")
    }

    /// Node set is the root plus every edge endpoint.
    pub fn taxonomy(&self) -> Taxonomy {
        let mut t = Taxonomy::new(normalize_term(&self.root));
        for (c, p) in &self.edges {
            t.add_edge(normalize_term(c), normalize_term(p));
        }
        t
    }
}

/// Reads a taxonomy from either a predicted file or a task file with gold
/// edges.
pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, DatasetError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    if value.get("terms").is_some() {
        let task = load_task(path)?;
        return task.gold.ok_or_else(|| parse_err(path, "task file has no gold_edges"));
    }
    let pred: PredictedFile = serde_json::from_value(value).map_err(|e| parse_err(path, e))?;
    Ok(pred.taxonomy())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternalFormat {
    /// One `child<TAB>parent` pair per line.
    EdgeList(PathBuf),
    /// A term file (`name` or `name<TAB>definition` per line) plus a
    /// relation file in edge-list form.
    TermsAndRelations { terms: PathBuf, relations: PathBuf },
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_edge_list(path: &Path) -> Result<Vec<(String, String)>, DatasetError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (no, line) in data_lines(&text) {
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(c), Some(p), None) if !c.trim().is_empty() && !p.trim().is_empty() => {
                out.push((normalize_term(c), normalize_term(p)));
            }
            _ => return Err(parse_err(path, format!("line {no}: expected child<TAB>parent"))),
        }
    }
    Ok(out)
}

fn parse_term_list(path: &Path) -> Result<Vec<TaskTerm>, DatasetError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (_, line) in data_lines(&text) {
        let (name, def) = match line.split_once('\t') {
            Some((n, d)) => (n, Some(d.trim().to_string()).filter(|d| !d.is_empty())),
            None => (line, None),
        };
        out.push(TaskTerm { name: normalize_term(name), definition: def });
    }
    Ok(out)
}

/// Builds a task file from an external source, inferring the root as the
/// unique node without a parent.
pub fn convert_external(format: &ExternalFormat) -> Result<TaskFile, DatasetError> {
    let (edges, listed) = match format {
        ExternalFormat::EdgeList(path) => (parse_edge_list(path)?, Vec::new()),
        ExternalFormat::TermsAndRelations { terms, relations } => (parse_edge_list(relations)?, parse_term_list(terms)?),
    };

    let mut terms: Vec<TaskTerm> = Vec::new();
    let mut seen = BTreeSet::new();
    for t in listed {
        if !seen.insert(t.name.clone()) {
            return Err(DatasetError::TermMismatch(format!("duplicate term {:?}", t.name)));
        }
        terms.push(t);
    }
    let explicit = !terms.is_empty();
    for (c, p) in &edges {
        for n in [c, p] {
            if seen.insert(n.clone()) {
                if explicit {
                    return Err(DatasetError::TermMismatch(format!("relation names unlisted term {n:?}")));
                }
                terms.push(TaskTerm { name: n.clone(), definition: None });
            }
        }
    }

    let children: BTreeSet<&str> = edges.iter().map(|(c, _)| c.as_str()).collect();
    let roots: Vec<String> = terms.iter().filter(|t| !children.contains(t.name.as_str())).map(|t| t.name.clone()).collect();
    let root = match roots.as_slice() {
        [r] => r.clone(),
        [] => {
            let all: Vec<String> = terms.iter().map(|t| t.name.clone()).collect();
            return Err(DatasetError::CycleInGold(all));
        }
        _ => return Err(DatasetError::MultipleRoots(roots)),
    };

    let mut t = Taxonomy::new(root.clone());
    t.nodes = seen;
    t.edges = edges.iter().cloned().collect();
    let violations = validate_taxonomy(&t);
    if let Some(Violation::Cycle { nodes }) = violations.iter().find(|v| matches!(v, Violation::Cycle { .. })) {
        return Err(DatasetError::CycleInGold(nodes.clone()));
    }
    if !violations.is_empty() {
        return Err(DatasetError::GoldInvalid(violations));
    }

    let root_definition = terms.iter().find(|x| x.name == root).and_then(|x| x.definition.clone());
    Ok(TaskFile { root, root_definition, terms, gold_edges: Some(edges) })
}
