use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::taxonomy::CandidateEdge;

/// Per-edge structural signals handed to the penalty prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralFeatures {
    /// Lead of `s(t,p)` over the best competing parent of `t`; in [-1, 1].
    pub margin: f64,
    /// Share of all children that list `p` as a candidate; in [0, 1].
    pub popularity: f64,
    /// Share of `t`'s other candidates that themselves take `p` as a
    /// weaker-linked parent; in [0, 1].
    pub pullback: f64,
    /// Evidence for an intermediate node between `t` and `p`; in [0, 1].
    pub skip_support: f64,
    /// Mean Jaccard overlap of candidate sets among `p`'s other children;
    /// in [0, 1].
    pub sibling_cohesion: f64,
    /// Shallowness of `p` below the root; in [0, 0.5].
    pub depth_penalty: f64,
}

impl StructuralFeatures {
    pub fn in_range(&self) -> bool {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        self.margin.is_finite()
            && (-1.0..=1.0).contains(&self.margin)
            && unit(self.popularity)
            && unit(self.pullback)
            && unit(self.skip_support)
            && unit(self.sibling_cohesion)
            && self.depth_penalty.is_finite()
            && (0.0..=0.5).contains(&self.depth_penalty)
    }
}

/// Candidate structure of an edge set: `P(t)` per child and `S(p)` per
/// parent.
#[derive(Debug, Clone, Default)]
pub struct CandidateGraph<'a> {
    pub parents: BTreeMap<&'a str, BTreeMap<&'a str, f64>>,
    pub children: BTreeMap<&'a str, BTreeSet<&'a str>>,
}

impl<'a> CandidateGraph<'a> {
    pub fn build(edges: &'a [CandidateEdge]) -> Self {
        let mut g = CandidateGraph::default();
        for e in edges {
            g.parents.entry(&e.child).or_default().insert(&e.parent, e.score);
            g.children.entry(&e.parent).or_default().insert(&e.child);
        }
        g
    }

    fn score(&self, child: &str, parent: &str) -> Option<f64> {
        self.parents.get(child).and_then(|ps| ps.get(parent)).copied()
    }

    /// BFS depth from `root` along parent -> child edges.
    pub fn depths(&self, root: &str) -> BTreeMap<&'a str, usize> {
        let mut depth: BTreeMap<&'a str, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        // The root may be absent from the edge set; it still has depth 0.
        let root_key: &'a str = self
            .children
            .keys()
            .chain(self.parents.keys())
            .find(|k| **k == root)
            .copied()
            .unwrap_or("");
        if root_key.is_empty() {
            return depth;
        }
        depth.insert(root_key, 0);
        queue.push_back(root_key);
        while let Some(n) = queue.pop_front() {
            let d = depth[n];
            for &c in self.children.get(n).into_iter().flatten() {
                if !depth.contains_key(c) {
                    depth.insert(c, d + 1);
                    queue.push_back(c);
                }
            }
        }
        depth
    }
}

fn jaccard(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let inter = a.keys().filter(|k| b.contains_key(*k)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Computes all six features for every edge. Scores are expected to be
/// already normalized into [0, 1].
pub fn compute_features(
    edges: &[CandidateEdge],
    root: &str,
    delta: f64,
) -> BTreeMap<(String, String), StructuralFeatures> {
    let g = CandidateGraph::build(edges);
    let depths = g.depths(root);
    let d_max = depths.values().copied().max().unwrap_or(0);
    let n_children = g.parents.len();

    let mut out = BTreeMap::new();
    for (&t, pt) in &g.parents {
        for (&p, &s_tp) in pt {
            let others = || pt.iter().filter(|(q, _)| **q != p);

            let margin = others()
                .map(|(_, &s)| s)
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                .map_or(0.0, |best| s_tp - best);

            let popularity = g.children.get(p).map_or(0, BTreeSet::len) as f64 / n_children as f64;

            let pullback = if pt.len() <= 1 {
                0.0
            } else {
                let n = others()
                    .filter(|(f, &s_tf)| match g.score(f, p) {
                        Some(s_fp) => s_fp.min(s_tf) < s_tp,
                        None => false,
                    })
                    .count();
                n as f64 / (pt.len() - 1) as f64
            };

            let skip_support = others()
                .filter(|(_, &s_tm)| s_tm >= s_tp - delta)
                .filter_map(|(m, &s_tm)| g.score(m, p).map(|s_mp| s_tm.min(s_mp)))
                .fold(0.0, f64::max);

            let sibling_cohesion = match g.children.get(p) {
                Some(sibs) => {
                    let mut sum = 0.0;
                    let mut n = 0usize;
                    for &t2 in sibs.iter().filter(|&&x| x != t) {
                        sum += jaccard(pt, &g.parents[t2]);
                        n += 1;
                    }
                    if n == 0 {
                        0.0
                    } else {
                        sum / n as f64
                    }
                }
                None => 0.0,
            };

            let depth_penalty = match depths.get(p) {
                Some(_) if d_max == 0 => 0.5,
                Some(&d) => 0.5 * (1.0 - d as f64 / d_max as f64),
                None => 0.25,
            };

            out.insert(
                (t.to_string(), p.to_string()),
                StructuralFeatures { margin, popularity, pullback, skip_support, sibling_cohesion, depth_penalty },
            );
        }
    }
    out
}
