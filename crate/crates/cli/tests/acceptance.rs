//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use taxon_core::arborescence::{max_arborescence, WeightedDigraph};
use taxon_core::calibration::{calibrate, CalibratedEdge, StructuralFeatures};
use taxon_core::definitions::{DefinitionSource, Snapshot};
use taxon_core::evaluation::{percent, score};
use taxon_core::pipeline::RunOptions;
use taxon_core::ranking::RankedParentSet;
use taxon_core::selection::CandidateList;
use taxon_core::{
    compute_features, load_task, run_pipeline, CandidateEdge, DefinitionPlan, EdgeStage, Gateway, LlmMode,
    PipelineConfig, Taxonomy, Transcript,
};

use oracles::name;

type Outcome = Result<String, String>;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    if elapsed <= Duration::from_secs(limit_secs) {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit_secs}s"))
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn arborescence_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut infeasible = 0;
    for case in 0..200 {
        let w = oracles::random_digraph(&mut rng, 6);
        let mut g = WeightedDigraph::new((0..w.len()).map(name));
        for (c, row) in w.iter().enumerate() {
            for (p, x) in row.iter().enumerate() {
                if let Some(x) = x {
                    g.add_arc(&name(c), &name(p), *x).map_err(|e| e.to_string())?;
                }
            }
        }
        match (max_arborescence(&g, "t0"), oracles::best_arborescence(&w, 0)) {
            (Ok(t), Some(best)) => {
                check(t.taxonomy.is_valid(), || format!("case {case}: output is not a tree"))?;
                check(t.total_weight() == best, || {
                    format!("case {case}: weight {} vs enumeration {best}", t.total_weight())
                })?;
            }
            (Err(_), None) => infeasible += 1,
            (got, want) => return Err(format!("case {case}: got {got:?}, enumeration {want:?}")),
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!("200 graphs ({infeasible} infeasible on both sides) in {:.2?}", start.elapsed()))
}

fn tree_taxonomy(parent: &[Option<usize>]) -> Taxonomy {
    let mut t = Taxonomy::new(name(0));
    t.nodes = (0..parent.len()).map(name).collect();
    for (v, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            t.edges.insert((name(v), name(*p)));
        }
    }
    t
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(1..=20);
        let gold = oracles::random_tree(&mut rng, n);
        let pred = oracles::perturb(&mut rng, &gold);
        let got = score(&tree_taxonomy(&pred), &tree_taxonomy(&gold)).map_err(|e| e.to_string())?.as_array();
        let want = oracles::metrics(&pred, &gold);
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
        check(worst <= 1e-9, || format!("case {case}: {got:?} vs {want:?}"))?;
    }
    within(start.elapsed(), 5)?;
    Ok(format!("100 trees, max deviation {worst:e}, in {:.2?}", start.elapsed()))
}

fn feature_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut edges_checked = 0;
    for case in 0..100 {
        let n = rng.gen_range(2..=8);
        let s = oracles::random_candidates(&mut rng, n);
        let mut edges = Vec::new();
        for (c, row) in s.iter().enumerate() {
            for (p, x) in row.iter().enumerate() {
                if let Some(x) = x {
                    edges.push(CandidateEdge::new(name(c), name(p), *x, EdgeStage::Ranked));
                }
            }
        }
        for ((t, p), f) in compute_features(&edges, "t0", 0.05) {
            let o = oracles::features(&s, 0, 0.05, t[1..].parse().unwrap(), p[1..].parse().unwrap());
            let got = [f.margin, f.popularity, f.pullback, f.skip_support, f.sibling_cohesion, f.depth_penalty];
            let want = [o.margin, o.pop, o.pb, o.skip_support, o.coh, o.depth_pen];
            check(got == want, || format!("case {case}, edge ({t}, {p}): {got:?} vs {want:?}"))?;
            edges_checked += 1;
        }
    }
    within(start.elapsed(), 5)?;
    Ok(format!("100 edge sets, {edges_checked} edges, exact, in {:.2?}", start.elapsed()))
}

fn snapshot_plan() -> Result<DefinitionPlan, String> {
    let snap = Snapshot::load(&fixture("wordnet-sample/snapshot.json")).map_err(|e| e.to_string())?;
    Ok(DefinitionPlan::Retrieve { source: DefinitionSource::OfflineSnapshot(snap), label: "snapshot".into() })
}

fn gold_oracle_end_to_end() -> Outcome {
    let start = Instant::now();
    let task = load_task(&fixture("wordnet-sample/task.json")).map_err(|e| e.to_string())?;
    let transcript = Transcript::load(&fixture("wordnet-sample/transcript.jsonl")).map_err(|e| e.to_string())?;
    let gateway = Gateway::new(LlmMode::Replay, transcript, "all-mpnet-base-v2");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions { out_dir: out.path().to_path_buf(), resume: false, task_name: "wordnet-sample".into() };
    let outcome = run_pipeline(&task, &PipelineConfig::default(), &gateway, snapshot_plan()?, &opts)
        .map_err(|e| e.to_string())?;
    let m = outcome.metrics.ok_or("no metrics")?;
    check(m.edge_f1 == 1.0 && m.ancestor_f1 == 1.0, || format!("F1_e {} F1_a {}", m.edge_f1, m.ancestor_f1))?;
    check(gateway.network_calls() == 0, || "network was used".into())?;
    within(start.elapsed(), 5)?;
    Ok(format!("15 terms: F1_e = F1_a = 1.0, offline, in {:.2?}", start.elapsed()))
}

fn calibration_shrinkage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // Update rule on 1000 random edge/penalty sets with positive scores.
    let mut violations = 0;
    let mut updates = 0;
    let zero = StructuralFeatures {
        margin: 0.0,
        popularity: 0.0,
        pullback: 0.0,
        skip_support: 0.0,
        sibling_cohesion: 0.0,
        depth_penalty: 0.0,
    };
    for _ in 0..1000 {
        for _ in 0..rng.gen_range(1..10) {
            let s: f64 = rng.gen_range(f64::EPSILON..=1.0);
            let p = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=0.5) };
            let c = CalibratedEdge::new("t", "p", s, zero, p);
            if !(c.final_score <= c.base_score && (c.final_score == c.base_score) == (c.penalty == 0.0)) {
                violations += 1;
            }
            updates += 1;
        }
    }

    // Full calibration on 1000 random candidate sets with random penalties.
    let mut zero_base = 0;
    let mut calibrated = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let s = oracles::random_candidates(&mut rng, n);
        let mut edges = Vec::new();
        for (c, row) in s.iter().enumerate() {
            for (p, x) in row.iter().enumerate() {
                if let Some(x) = x {
                    edges.push(CandidateEdge::new(name(c), name(p), *x, EdgeStage::Ranked));
                }
            }
        }
        let table: BTreeMap<(String, String), f64> = edges
            .iter()
            .map(|e| {
                let p = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=0.5) };
                ((e.child.clone(), e.parent.clone()), p)
            })
            .collect();
        let source = move |child: &str, parents: &[(String, StructuralFeatures)]| -> BTreeMap<String, f64> {
            parents.iter().map(|(p, _)| (p.clone(), table[&(child.to_string(), p.clone())])).collect()
        };
        for c in calibrate(&edges, "t0", 0.05, 0.05, &source, 2).map_err(|e| e.to_string())? {
            calibrated += 1;
            let shrinks = c.final_score <= c.base_score;
            let in_range = c.features.in_range() && (0.0..=0.5).contains(&c.penalty);
            let iff = (c.final_score == c.base_score) == (c.penalty == 0.0);
            if c.base_score == 0.0 {
                // 0 * (1 - p) = 0 for every p: equality holds regardless.
                zero_base += 1;
                if !(shrinks && in_range) {
                    violations += 1;
                }
            } else if !(shrinks && in_range && iff) {
                violations += 1;
            }
        }
    }
    check(violations == 0, || format!("{violations} violations"))?;
    Ok(format!(
        "{updates} updates + {calibrated} calibrated edges, violations = 0 \
         (equality-iff checked where s > 0; {zero_base} edges normalized to s = 0 excluded from it)"
    ))
}

fn taxon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taxon"))
}

fn cli_replay(out: &Path, extra: &[&str]) -> Result<(), String> {
    let snapshot = format!("snapshot:{}", fixture("wordnet-sample/snapshot.json").display());
    let status = taxon()
        .args(["run", "--llm-mode", "replay", "--definitions", &snapshot])
        .arg("--task")
        .arg(fixture("wordnet-sample/task.json"))
        .arg("--transcript")
        .arg(fixture("wordnet-sample/transcript.jsonl"))
        .arg("--out-dir")
        .arg(out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), || {
        format!("taxon run {extra:?} failed: {}", String::from_utf8_lossy(&status.stderr))
    })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn ablation_plumbing() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let terms = 15;

    let dir = tmp.path().join("no-hpcs");
    cli_replay(&dir, &["--no-hpcs"])?;
    let lists: Vec<CandidateList> = read_jsonl(&dir.join("candidates.jsonl"))?;
    check(lists.len() == terms - 1, || format!("{} candidate lines", lists.len()))?;
    check(lists.iter().all(|l| l.candidates.len() == terms - 1), || "candidate count != |terms| - 1".into())?;

    let mut per_k2: Vec<BTreeMap<String, usize>> = Vec::new();
    for k2 in [1usize, 3, 5] {
        let dir = tmp.path().join(format!("k2-{k2}"));
        cli_replay(&dir, &["--k2", &k2.to_string()])?;
        let sets: Vec<RankedParentSet> = read_jsonl(&dir.join("ranked.jsonl"))?;
        check(sets.iter().all(|s| s.ranked.len() <= k2), || format!("k2={k2}: more than k2 parents"))?;
        per_k2.push(sets.into_iter().map(|s| (s.child, s.ranked.len())).collect());
    }
    for w in per_k2.windows(2) {
        check(w[0].iter().all(|(c, n)| w[1].get(c).is_some_and(|m| m >= n)), || "count decreased with k2".into())?;
    }
    let totals: Vec<usize> = per_k2.iter().map(|m| m.values().sum()).collect();
    Ok(format!("no-hpcs: {} candidates per child; ranked edges for k2=1,3,5: {totals:?}", terms - 1))
}

fn sha(path: &Path) -> Result<String, String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path).map_err(|e| e.to_string())?)))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli_replay(&a, &["--seed", "7"])?;
    cli_replay(&b, &["--seed", "7"])?;
    let mut hashes = Vec::new();
    for f in ["prediction.json", "manifest.json"] {
        let (x, y) = (sha(&a.join(f))?, sha(&b.join(f))?);
        check(x == y, || format!("{f} differs: {x} vs {y}"))?;
        hashes.push(format!("{f} {}", &x[..12]));
    }
    Ok(format!("identical: {}", hashes.join(", ")))
}

fn metric_spot_value() -> Outcome {
    let pred = Taxonomy::from_edges("r", [("a", "r"), ("b", "r")]);
    let gold = Taxonomy::from_edges("r", [("a", "r"), ("b", "a")]);
    let m = score(&pred, &gold).map_err(|e| e.to_string())?;
    let (fa, fe) = (format!("{:.4}", m.ancestor_f1), format!("{:.4}", m.edge_f1));
    check(fa == "0.8000" && fe == "0.5000", || format!("F1_a {fa}, F1_e {fe}"))?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write = |n: &str, t: &Taxonomy| -> Result<PathBuf, String> {
        let p = tmp.path().join(n);
        let body = taxon_core::PredictedFile::new(t, &BTreeMap::new()).to_json();
        std::fs::write(&p, body).map_err(|e| e.to_string())?;
        Ok(p)
    };
    let out = taxon()
        .arg("eval")
        .arg("--pred")
        .arg(write("pred.json", &pred)?)
        .arg("--gold")
        .arg(write("gold.json", &gold)?)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    check(stdout.contains("F1_a 80.00") && stdout.contains("F1_e 50.00"), || format!("eval printed {stdout:?}"))?;
    check(percent(m.ancestor_f1) == "80.00", || "percent formatting".into())?;
    Ok(format!("F1_a = {fa}, F1_e = {fe}; CLI eval prints 80.00 / 50.00"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("arborescence optimality vs exhaustive enumeration", arborescence_optimality),
        ("metrics vs brute-force transitive closure", metric_oracle),
        ("structural features vs direct formulas", feature_oracle),
        ("gold-oracle end-to-end replay", gold_oracle_end_to_end),
        ("calibration shrinkage fuzz", calibration_shrinkage),
        ("ablation plumbing (--no-hpcs, --k2)", ablation_plumbing),
        ("replay determinism", determinism),
        ("metric spot values", metric_spot_value),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS  {title}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {title}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
