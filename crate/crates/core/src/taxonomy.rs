//! Rooted taxonomies, their structural validation, and the candidate-edge
//! type passed between pipeline stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A rooted taxonomy. Edges are `(child, parent)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub root: String,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    RootNotANode { root: String },
    UnknownNode { child: String, parent: String },
    SelfLoop { node: String },
    RootHasParent { parent: String },
    MultipleParents { node: String, parents: Vec<String> },
    Cycle { nodes: Vec<String> },
    Disconnected { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootNotANode { root } => write!(f, "root {root:?} is not in the node set"),
            Violation::UnknownNode { child, parent } => {
                write!(f, "edge ({child:?}, {parent:?}) references a node outside the node set")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop on {node:?}"),
            Violation::RootHasParent { parent } => write!(f, "root has parent {parent:?}"),
            Violation::MultipleParents { node, parents } => {
                write!(f, "{node:?} has {} parents: {parents:?}", parents.len())
            }
            Violation::Cycle { nodes } => write!(f, "directed cycle through {nodes:?}"),
            Violation::Disconnected { node } => write!(f, "{node:?} has no path to the root"),
        }
    }
}

impl Taxonomy {
    pub fn new(root: impl Into<String>) -> Self {
        let root = root.into();
        Taxonomy {
            nodes: BTreeSet::from([root.clone()]),
            root,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a taxonomy whose node set is the root plus every edge endpoint.
    pub fn from_edges<I, S>(root: &str, edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut t = Taxonomy::new(root);
        for (c, p) in edges {
            t.add_edge(c.into(), p.into());
        }
        t
    }

    pub fn add_edge(&mut self, child: String, parent: String) {
        self.nodes.insert(child.clone());
        self.nodes.insert(parent.clone());
        self.edges.insert((child, parent));
    }

    /// Parent of each node, when it has exactly one.
    pub fn parent_map(&self) -> BTreeMap<&str, &str> {
        self.edges.iter().map(|(c, p)| (c.as_str(), p.as_str())).collect()
    }

    pub fn children_map(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (c, p) in &self.edges {
            out.entry(p.as_str()).or_default().push(c.as_str());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        validate_taxonomy(self).is_empty()
    }
}

/// Checks every tree invariant. An empty result means the taxonomy is a
/// spanning arborescence over its node set.
pub fn validate_taxonomy(t: &Taxonomy) -> Vec<Violation> {
    let mut out = Vec::new();
    if !t.nodes.contains(&t.root) {
        out.push(Violation::RootNotANode { root: t.root.clone() });
    }

    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (c, p) in &t.edges {
        if !t.nodes.contains(c) || !t.nodes.contains(p) {
            out.push(Violation::UnknownNode { child: c.clone(), parent: p.clone() });
            continue;
        }
        if c == p {
            out.push(Violation::SelfLoop { node: c.clone() });
            continue;
        }
        if *c == t.root {
            out.push(Violation::RootHasParent { parent: p.clone() });
        }
        parents.entry(c.as_str()).or_default().push(p.as_str());
    }
    for (node, ps) in &parents {
        if ps.len() > 1 {
            out.push(Violation::MultipleParents {
                node: node.to_string(),
                parents: ps.iter().map(|s| s.to_string()).collect(),
            });
        }
    }

    let cyclic = cyclic_components(&t.nodes, &parents);
    let on_cycle: BTreeSet<&str> = cyclic.iter().flatten().copied().collect();
    for comp in cyclic {
        out.push(Violation::Cycle { nodes: comp.iter().map(|s| s.to_string()).collect() });
    }

    // Reachability from the root along parent -> child.
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (c, ps) in &parents {
        for p in ps {
            children.entry(p).or_default().push(c);
        }
    }
    let mut seen = BTreeSet::new();
    if t.nodes.contains(&t.root) {
        let mut stack = vec![t.root.as_str()];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(children.get(n).into_iter().flatten().copied());
            }
        }
    }
    for n in &t.nodes {
        if !seen.contains(n.as_str()) && !on_cycle.contains(n.as_str()) {
            out.push(Violation::Disconnected { node: n.clone() });
        }
    }
    out
}

/// Strongly connected components with more than one node (Tarjan).
fn cyclic_components<'a>(
    nodes: &'a BTreeSet<String>,
    parents: &BTreeMap<&'a str, Vec<&'a str>>,
) -> Vec<Vec<&'a str>> {
    struct State<'a, 'b> {
        parents: &'b BTreeMap<&'a str, Vec<&'a str>>,
        index: BTreeMap<&'a str, usize>,
        low: BTreeMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        next: usize,
        out: Vec<Vec<&'a str>>,
    }

    fn visit<'a>(s: &mut State<'a, '_>, v: &'a str) {
        s.index.insert(v, s.next);
        s.low.insert(v, s.next);
        s.next += 1;
        s.stack.push(v);
        s.on_stack.insert(v);
        for &w in s.parents.get(v).into_iter().flatten() {
            if !s.index.contains_key(w) {
                visit(s, w);
                let lw = s.low[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(lw);
            } else if s.on_stack.contains(w) {
                let iw = s.index[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if s.low[v] == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().unwrap();
                s.on_stack.remove(w);
                comp.push(w);
                if w == v {
                    break;
                }
            }
            if comp.len() > 1 {
                comp.sort_unstable();
                s.out.push(comp);
            }
        }
    }

    let mut s = State {
        parents,
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    for n in nodes {
        if !s.index.contains_key(n.as_str()) {
            visit(&mut s, n.as_str());
        }
    }
    s.out.sort();
    s.out
}

/// Which stage last touched a candidate edge's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStage {
    Selected,
    Ranked,
    Calibrated,
}

/// A child -> parent hypothesis with its current score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    pub child: String,
    pub parent: String,
    pub score: f64,
    pub stage: EdgeStage,
}

impl CandidateEdge {
    pub fn new(child: impl Into<String>, parent: impl Into<String>, score: f64, stage: EdgeStage) -> Self {
        CandidateEdge {
            child: child.into(),
            parent: parent.into(),
            score,
            stage,
        }
    }
}
