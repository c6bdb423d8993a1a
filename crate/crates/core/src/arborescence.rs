//! Maximum spanning arborescence (Chu-Liu/Edmonds) over calibrated edges.

use std::collections::{BTreeMap, BTreeSet};

use crate::taxonomy::{CandidateEdge, Taxonomy};

/// Weight of repair arcs added by [`ensure_attachable`]. Kept below any
/// score a real edge can carry after calibration.
pub const FALLBACK_WEIGHT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArborescenceError {
    #[error("{node:?} has no incoming arc; no spanning arborescence exists")]
    Infeasible { node: String },
    #[error("root {0:?} is not a node of the graph")]
    MissingRoot(String),
    #[error("arc ({child:?}, {parent:?}) is invalid: {reason}")]
    BadArc { child: String, parent: String, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub child: String,
    pub parent: String,
    pub weight: f64,
}

/// Candidate structure for assembly. Each arc is read as `parent -> child`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedDigraph {
    pub nodes: BTreeSet<String>,
    pub arcs: Vec<Arc>,
}

impl WeightedDigraph {
    pub fn new<I: IntoIterator<Item = String>>(nodes: I) -> Self {
        WeightedDigraph { nodes: nodes.into_iter().collect(), arcs: Vec::new() }
    }

    pub fn add_arc(&mut self, child: &str, parent: &str, weight: f64) -> Result<(), ArborescenceError> {
        let bad = |reason| ArborescenceError::BadArc { child: child.into(), parent: parent.into(), reason };
        if child == parent {
            return Err(bad("self-loop"));
        }
        if !weight.is_finite() {
            return Err(bad("non-finite weight"));
        }
        if !self.nodes.contains(child) || !self.nodes.contains(parent) {
            return Err(bad("endpoint is not a node"));
        }
        self.arcs.push(Arc { child: child.into(), parent: parent.into(), weight });
        Ok(())
    }

    pub fn from_edges<I: IntoIterator<Item = String>>(
        nodes: I,
        edges: &[CandidateEdge],
    ) -> Result<Self, ArborescenceError> {
        let mut g = WeightedDigraph::new(nodes);
        for e in edges {
            g.add_arc(&e.child, &e.parent, e.score)?;
        }
        Ok(g)
    }
}

/// Adds a `root -> node` fallback arc for every node the root cannot reach.
/// Returns the repaired nodes.
pub fn ensure_attachable(graph: &mut WeightedDigraph, root: &str) -> Vec<String> {
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in &graph.arcs {
        if a.child != root {
            children.entry(a.parent.as_str()).or_default().push(a.child.as_str());
        }
    }
    let mut reached = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if reached.insert(n) {
            stack.extend(children.get(n).into_iter().flatten().copied());
        }
    }
    let orphans: Vec<String> = graph
        .nodes
        .iter()
        .filter(|n| n.as_str() != root && !reached.contains(n.as_str()))
        .cloned()
        .collect();
    for n in &orphans {
        graph.arcs.push(Arc { child: n.clone(), parent: root.to_string(), weight: FALLBACK_WEIGHT });
    }
    orphans
}

/// The chosen tree with the weight of each kept arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Arborescence {
    pub taxonomy: Taxonomy,
    /// `(child, parent) -> weight`
    pub weights: BTreeMap<(String, String), f64>,
}

impl Arborescence {
    /// Sum of arc weights, accumulated in (child, parent) order.
    pub fn total_weight(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Maximum-weight spanning arborescence rooted at `root`. Arcs into the
/// root are ignored; among equal-weight alternatives the arc earliest in
/// (parent, child) byte order wins.
pub fn max_arborescence(graph: &WeightedDigraph, root: &str) -> Result<Arborescence, ArborescenceError> {
    if !graph.nodes.contains(root) {
        return Err(ArborescenceError::MissingRoot(root.to_string()));
    }
    let names: Vec<&str> = graph.nodes.iter().map(String::as_str).collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let root_ix = index[root];

    // Canonical arc list: one arc per (parent, child), the heaviest.
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for a in &graph.arcs {
        let (u, v) = (index[a.parent.as_str()], index[a.child.as_str()]);
        if v == root_ix || u == v {
            continue;
        }
        let w = best.entry((u, v)).or_insert(a.weight);
        if a.weight > *w {
            *w = a.weight;
        }
    }
    let arcs: Vec<(usize, usize, f64)> = best.into_iter().map(|((u, v), w)| (u, v, w)).collect();

    let chosen = edmonds(names.len(), root_ix, &arcs).map_err(|v| ArborescenceError::Infeasible {
        node: names[v].to_string(),
    })?;

    let mut taxonomy = Taxonomy::new(root);
    taxonomy.nodes = graph.nodes.clone();
    let mut weights = BTreeMap::new();
    for (v, arc) in chosen.into_iter().enumerate() {
        if v == root_ix {
            continue;
        }
        let (u, _, w) = arcs[arc];
        let key = (names[v].to_string(), names[u].to_string());
        taxonomy.edges.insert(key.clone());
        weights.insert(key, w);
    }
    Ok(Arborescence { taxonomy, weights })
}

/// Chu-Liu/Edmonds with recursive cycle contraction. `arcs` are
/// `(from, to, weight)`; returns, per node, the index of its chosen
/// incoming arc (`usize::MAX` for the root). `Err(v)` names a node without
/// any incoming arc.
fn edmonds(n: usize, root: usize, arcs: &[(usize, usize, f64)]) -> Result<Vec<usize>, usize> {
    let mut best_in: Vec<Option<usize>> = vec![None; n];
    for (i, &(u, v, w)) in arcs.iter().enumerate() {
        if v == root || u == v {
            continue;
        }
        match best_in[v] {
            Some(j) if arcs[j].2 >= w => {}
            _ => best_in[v] = Some(i),
        }
    }
    for (v, b) in best_in.iter().enumerate() {
        if v != root && b.is_none() {
            return Err(v);
        }
    }
    let parent = |v: usize| arcs[best_in[v].unwrap()].0;

    // Cycles in the best-incoming graph.
    let mut cycle_of = vec![usize::MAX; n];
    let mut n_cycles = 0;
    let mut walk_mark = vec![usize::MAX; n];
    for start in 0..n {
        let mut v = start;
        while v != root && walk_mark[v] == usize::MAX && cycle_of[v] == usize::MAX {
            walk_mark[v] = start;
            v = parent(v);
        }
        if v != root && walk_mark[v] == start && cycle_of[v] == usize::MAX {
            let mut u = v;
            loop {
                cycle_of[u] = n_cycles;
                u = parent(u);
                if u == v {
                    break;
                }
            }
            n_cycles += 1;
        }
    }
    if n_cycles == 0 {
        return Ok(best_in.into_iter().map(|b| b.unwrap_or(usize::MAX)).collect());
    }

    // Contract: cycle c becomes node c; other nodes follow in index order.
    let mut new_id = vec![0usize; n];
    let mut next = n_cycles;
    for v in 0..n {
        new_id[v] = if cycle_of[v] != usize::MAX {
            cycle_of[v]
        } else {
            next += 1;
            next - 1
        };
    }
    let mut sub_arcs = Vec::with_capacity(arcs.len());
    let mut origin = Vec::with_capacity(arcs.len());
    for (i, &(u, v, w)) in arcs.iter().enumerate() {
        let (cu, cv) = (new_id[u], new_id[v]);
        if cu == cv {
            continue;
        }
        let w = if cycle_of[v] != usize::MAX { w - arcs[best_in[v].unwrap()].2 } else { w };
        sub_arcs.push((cu, cv, w));
        origin.push(i);
    }
    let sub = edmonds(next, new_id[root], &sub_arcs).map_err(|cv| {
        (0..n).find(|&v| new_id[v] == cv).expect("contracted node has a member")
    })?;

    let mut chosen = vec![usize::MAX; n];
    for (cv, &k) in sub.iter().enumerate() {
        if cv == new_id[root] {
            continue;
        }
        let i = origin[k];
        chosen[arcs[i].1] = i;
    }
    for v in 0..n {
        if v != root && chosen[v] == usize::MAX {
            chosen[v] = best_in[v].unwrap();
        }
    }
    Ok(chosen)
}
