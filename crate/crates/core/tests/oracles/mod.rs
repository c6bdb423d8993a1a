//! Brute-force reference implementations used to cross-check the library.
//! Each one works straight from the definitions with dense matrices and no
//! shared code paths.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense digraph: `w[child][parent]`, `None` where there is no arc.
pub type Dense = Vec<Vec<Option<f64>>>;

/// Best total weight over all spanning arborescences rooted at `root`, by
/// trying every parent assignment. `None` when none exists.
pub fn best_arborescence(w: &Dense, root: usize) -> Option<f64> {
    let n = w.len();
    let others: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    let choices: Vec<Vec<usize>> =
        others.iter().map(|&v| (0..n).filter(|&u| u != v && w[v][u].is_some()).collect()).collect();
    if choices.iter().any(Vec::is_empty) {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; others.len()];
    loop {
        let mut parent = vec![usize::MAX; n];
        for (i, &v) in others.iter().enumerate() {
            parent[v] = choices[i][pick[i]];
        }
        let reaches_root = |mut v: usize| {
            for _ in 0..n {
                if v == root {
                    return true;
                }
                v = parent[v];
            }
            v == root
        };
        if others.iter().all(|&v| reaches_root(v)) {
            // Sum in child order so equal trees give bit-equal totals.
            let total: f64 = others.iter().map(|&v| w[v][parent[v]].unwrap()).sum();
            if best.map_or(true, |b| total > b) {
                best = Some(total);
            }
        }
        let mut i = 0;
        loop {
            if i == pick.len() {
                return best;
            }
            pick[i] += 1;
            if pick[i] < choices[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Uniform weight on a 2^-20 grid; sums of a few such values are exact in
/// binary floating point, so totals compare with `==`.
pub fn grid_weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0..(1u32 << 20)) as f64 / (1u32 << 20) as f64
}

pub fn random_digraph(rng: &mut ChaCha8Rng, max_nodes: usize) -> Dense {
    let n = rng.gen_range(2..=max_nodes);
    let density = rng.gen_range(0.3..1.0);
    let mut w = vec![vec![None; n]; n];
    for (c, row) in w.iter_mut().enumerate() {
        for (p, slot) in row.iter_mut().enumerate() {
            if c != p && rng.gen_bool(density) {
                *slot = Some(grid_weight(rng));
            }
        }
    }
    w
}

/// Ancestor relation by Warshall's algorithm on the parent matrix.
/// `anc[a][d]` is true when `a` is a proper ancestor of `d`.
pub fn closure(parent: &[Option<usize>]) -> Vec<Vec<bool>> {
    let n = parent.len();
    let mut anc = vec![vec![false; n]; n];
    for (d, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            anc[*p][d] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if anc[i][k] {
                for j in 0..n {
                    if anc[k][j] {
                        anc[i][j] = true;
                    }
                }
            }
        }
    }
    anc
}

fn prf(matched: usize, predicted: usize, gold: usize) -> [f64; 3] {
    let p = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    [p, r, f]
}

/// [P_a, R_a, F1_a, P_e, R_e, F1_e] for two parent vectors over the same
/// node indices.
pub fn metrics(pred: &[Option<usize>], gold: &[Option<usize>]) -> [f64; 6] {
    let (ap, ag) = (closure(pred), closure(gold));
    let n = pred.len();
    let (mut m, mut np, mut ng) = (0, 0, 0);
    for i in 0..n {
        for j in 0..n {
            np += ap[i][j] as usize;
            ng += ag[i][j] as usize;
            m += (ap[i][j] && ag[i][j]) as usize;
        }
    }
    let em = (0..n).filter(|&v| pred[v].is_some() && pred[v] == gold[v]).count();
    let ep = pred.iter().filter(|p| p.is_some()).count();
    let eg = gold.iter().filter(|p| p.is_some()).count();
    let [a, b, c] = prf(m, np, ng);
    let [d, e, f] = prf(em, ep, eg);
    [a, b, c, d, e, f]
}

/// Random rooted tree over `0..n` with root 0; parent of `v` precedes `v`.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<Option<usize>> {
    (0..n).map(|v| if v == 0 { None } else { Some(rng.gen_range(0..v)) }).collect()
}

/// Moves a few random nodes under random non-descendants.
pub fn perturb(rng: &mut ChaCha8Rng, tree: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut t = tree.to_vec();
    let n = t.len();
    if n < 3 {
        return t;
    }
    for _ in 0..rng.gen_range(0..=n / 2) {
        let v = rng.gen_range(1..n);
        let anc = closure(&t);
        let options: Vec<usize> = (0..n).filter(|&u| u != v && !anc[v][u]).collect();
        t[v] = Some(options[rng.gen_range(0..options.len())]);
    }
    t
}

/// Six feature values for edge (t, p), from the formulas. `s[c][q]` is the
/// normalized score of candidate edge c -> q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub margin: f64,
    pub pop: f64,
    pub pb: f64,
    pub skip_support: f64,
    pub coh: f64,
    pub depth_pen: f64,
}

pub fn features(s: &Dense, root: usize, delta: f64, t: usize, p: usize) -> Features {
    let n = s.len();
    let parents = |x: usize| -> Vec<usize> { (0..n).filter(|&q| s[x][q].is_some()).collect() };
    let children_of = |q: usize| -> Vec<usize> { (0..n).filter(|&c| s[c][q].is_some()).collect() };
    let stp = s[t][p].unwrap();
    let pt = parents(t);

    let margin = if pt.len() == 1 {
        0.0
    } else {
        let mut best = f64::NEG_INFINITY;
        for &q in &pt {
            if q != p && s[t][q].unwrap() > best {
                best = s[t][q].unwrap();
            }
        }
        stp - best
    };

    let with_parent = (0..n).filter(|&c| !parents(c).is_empty()).count();
    let pop = children_of(p).len() as f64 / with_parent as f64;

    let pb = if pt.len() <= 1 {
        0.0
    } else {
        let mut k = 0;
        for &f in &pt {
            if f != p {
                if let Some(sfp) = s[f][p] {
                    let stf = s[t][f].unwrap();
                    if (if sfp < stf { sfp } else { stf }) < stp {
                        k += 1;
                    }
                }
            }
        }
        k as f64 / (pt.len() - 1) as f64
    };

    let mut skip_support = 0.0;
    for &m in &pt {
        if m == p {
            continue;
        }
        let stm = s[t][m].unwrap();
        if stm >= stp - delta {
            if let Some(smp) = s[m][p] {
                let v = if stm < smp { stm } else { smp };
                if v > skip_support {
                    skip_support = v;
                }
            }
        }
    }

    let sibs: Vec<usize> = children_of(p).into_iter().filter(|&c| c != t).collect();
    let coh = if sibs.is_empty() {
        0.0
    } else {
        let a = parents(t);
        let mut sum = 0.0;
        for &c in &sibs {
            let b = parents(c);
            let inter = a.iter().filter(|x| b.contains(x)).count();
            let union = a.len() + b.len() - inter;
            sum += inter as f64 / union as f64;
        }
        sum / sibs.len() as f64
    };

    // Shortest distance from the root along parent -> child arcs, by
    // repeated relaxation.
    let root_present = (0..n).any(|c| s[c][root].is_some() || s[root][c].is_some());
    let mut dist = vec![usize::MAX; n];
    if root_present {
        dist[root] = 0;
        for _ in 0..n {
            for c in 0..n {
                for q in 0..n {
                    if s[c][q].is_some() && dist[q] != usize::MAX && dist[q] + 1 < dist[c] {
                        dist[c] = dist[q] + 1;
                    }
                }
            }
        }
    }
    let d_max = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0);
    let depth_pen = if dist[p] == usize::MAX {
        0.25
    } else if d_max == 0 {
        0.5
    } else {
        0.5 * (1.0 - dist[p] as f64 / d_max as f64)
    };

    Features { margin, pop, pb, skip_support, coh, depth_pen }
}

/// Random candidate-edge matrix over `n` terms with scores min-max
/// normalized into [0, 1].
pub fn random_candidates(rng: &mut ChaCha8Rng, n: usize) -> Dense {
    let density = rng.gen_range(0.15..0.7);
    let mut s = vec![vec![None; n]; n];
    for (c, row) in s.iter_mut().enumerate() {
        for (q, slot) in row.iter_mut().enumerate() {
            if c != q && rng.gen_bool(density) {
                // Coarse grid so ties and near-ties (delta windows) occur.
                *slot = Some(rng.gen_range(0..=20) as f64 / 20.0);
            }
        }
    }
    s
}

pub fn name(i: usize) -> String {
    format!("t{i}")
}
