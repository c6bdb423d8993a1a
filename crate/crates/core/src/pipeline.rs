//! End-to-end induction: definitions, candidate selection, ranking,
//! calibration, arborescence, and scoring against gold when available.
//!
//! Every stage writes a stable-named artifact under the output directory.
//! `stages.json` records a digest of each stage's inputs so a resumed run
//! can reload an artifact instead of recomputing it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::arborescence::{ensure_attachable, max_arborescence, ArborescenceError, WeightedDigraph};
use crate::calibration::{calibrate, filter_and_normalize, CalibratedEdge, LlmPenalties};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{PredictedFile, Task, TaskFile, TaskTerm};
use crate::definitions::{DefinitionEntry, DefinitionError, DefinitionSource, DefinitionStore};
use crate::evaluation::{count, CountTuple, MetricsFile, MetricsReport};
use crate::gateway::{digest_value, Gateway, GatewayError};
use crate::par::parallel_map;
use crate::ranking::{rank_and_score, RankInput, RankedParentSet};
use crate::selection::{
    all_pairs_candidates, cosine, definition_candidates, fuse_candidates, isa_candidates, isa_vote, CandidateInfo,
    CandidateList, TemplateSet, VoteTable,
};
use crate::taxonomy::{CandidateEdge, EdgeStage, Taxonomy};

pub const DEFINITIONS_FILE: &str = "definitions.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const RANKED_FILE: &str = "ranked.jsonl";
pub const CALIBRATED_FILE: &str = "calibrated.jsonl";
pub const PREDICTION_FILE: &str = "prediction.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";
pub const STAGES_FILE: &str = "stages.json";

/// Coarse error class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Provider,
    Infeasible,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Provider => 3,
            ErrorKind::Infeasible => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}{}: {message}", .term.as_ref().map(|t| format!(" (term {t:?})")).unwrap_or_default())]
    Stage { stage: &'static str, term: Option<String>, kind: ErrorKind, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) | PipelineError::Io { .. } => ErrorKind::Input,
            PipelineError::Stage { kind, .. } => *kind,
        }
    }

    fn stage(stage: &'static str, term: Option<&str>, kind: ErrorKind, message: impl ToString) -> Self {
        PipelineError::Stage { stage, term: term.map(str::to_string), kind, message: message.to_string() }
    }
}

fn gateway_kind(e: &GatewayError) -> ErrorKind {
    match e {
        GatewayError::InvalidInput(_) => ErrorKind::Input,
        _ => ErrorKind::Provider,
    }
}

/// How definitions are obtained.
pub enum DefinitionPlan {
    /// Look up raw text in `source`, then refine every definition with the
    /// large model.
    Retrieve { source: DefinitionSource, label: String },
    /// Use the task file's definitions verbatim.
    Skip,
}

impl DefinitionPlan {
    pub fn label(&self) -> &str {
        match self {
            DefinitionPlan::Retrieve { label, .. } => label,
            DefinitionPlan::Skip => "skip",
        }
    }
}

pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Name recorded for the task in the metrics file.
    pub task_name: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prediction: Taxonomy,
    pub weights: BTreeMap<(String, String), f64>,
    /// Nodes that received a fallback root arc before assembly.
    pub repaired: Vec<String>,
    pub counts: Option<CountTuple>,
    pub metrics: Option<MetricsReport>,
    /// Stages reloaded from disk instead of recomputed.
    pub resumed: Vec<&'static str>,
}

pub fn ablation_label(config: &PipelineConfig) -> String {
    match (config.enable_hpcs, config.enable_lscsf) {
        (true, true) => "full".into(),
        (false, true) => "w/o HPCS".into(),
        (true, false) => "w/o LSC-SF".into(),
        (false, false) => "w/o HPCS, w/o LSC-SF".into(),
    }
}

pub fn task_digest(task: &Task) -> String {
    let file = TaskFile {
        root: task.root.clone(),
        root_definition: task.root_definition.clone(),
        terms: task.terms.clone(),
        gold_edges: task.gold.as_ref().map(|g| g.edges.iter().cloned().collect()),
    };
    digest_value(&serde_json::to_value(file).expect("task serializes"))
}

fn sha_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        out.extend(serde_json::to_vec(it).expect("artifact serializes"));
        out.push(b'\n');
    }
    out
}

fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Option<Vec<T>> {
    let text = std::str::from_utf8(bytes).ok()?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).ok()).collect()
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("artifact serializes");
    out.push(b'\n');
    out
}

struct Workspace {
    dir: PathBuf,
    resume: bool,
    previous: BTreeMap<String, String>,
    current: BTreeMap<String, String>,
    timing: BTreeMap<String, u128>,
    resumed: Vec<&'static str>,
}

impl Workspace {
    fn open(dir: &Path, resume: bool) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io { path: dir.to_path_buf(), message: e.to_string() })?;
        let previous = if resume {
            fs::read(dir.join(STAGES_FILE))
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok())
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        Ok(Workspace {
            dir: dir.to_path_buf(),
            resume,
            previous,
            current: BTreeMap::new(),
            timing: BTreeMap::new(),
            resumed: Vec::new(),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::Io { path, message: e.to_string() })
    }

    fn remove(&self, name: &str) {
        let _ = fs::remove_file(self.dir.join(name));
    }

    /// Reloads `file` when resuming and the recorded input digest matches.
    fn reuse(&mut self, stage: &'static str, file: &str, input_digest: &str) -> Option<Vec<u8>> {
        if !self.resume || self.previous.get(stage).map(String::as_str) != Some(input_digest) {
            return None;
        }
        let bytes = fs::read(self.dir.join(file)).ok()?;
        self.resumed.push(stage);
        Some(bytes)
    }

    /// Runs or reloads a stage. `decode` turns artifact bytes back into the
    /// stage output; `run` computes it and returns the bytes to store.
    fn stage<T>(
        &mut self,
        stage: &'static str,
        file: &str,
        input_digest: String,
        decode: impl Fn(&[u8]) -> Option<T>,
        run: impl FnOnce() -> Result<(T, Vec<u8>), PipelineError>,
    ) -> Result<(T, String), PipelineError> {
        let started = Instant::now();
        let reloaded = self.reuse(stage, file, &input_digest).and_then(|b| decode(&b).map(|v| (v, b)));
        let (value, bytes) = match reloaded {
            Some(hit) => hit,
            None => {
                self.resumed.retain(|s| *s != stage);
                let (v, b) = run()?;
                self.write(file, &b)?;
                (v, b)
            }
        };
        self.current.insert(stage.to_string(), input_digest);
        self.timing.insert(stage.to_string(), started.elapsed().as_millis());
        Ok((value, sha_hex(&bytes)))
    }
}

fn stage_digest(stage: &str, base: &Value, upstream: &[&str]) -> String {
    digest_value(&json!({"stage": stage, "base": base, "upstream": upstream}))
}

/// Runs the full pipeline for one task.
pub fn run_pipeline(
    task: &Task,
    config: &PipelineConfig,
    gateway: &Gateway,
    definitions: DefinitionPlan,
    opts: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let mut ws = Workspace::open(&opts.out_dir, opts.resume)?;
    let workers = config.max_in_flight;
    let root = task.root.as_str();
    let terms = task.names();
    let vocabulary: BTreeSet<String> = terms.iter().cloned().collect();
    let children: Vec<String> = {
        let mut c: Vec<String> = terms.iter().filter(|t| t.as_str() != root).cloned().collect();
        c.sort();
        c
    };
    let base = json!({
        "config": config,
        "task": task_digest(task),
        "definitions": definitions.label(),
    });
    let mut artifacts: BTreeMap<&str, String> = BTreeMap::new();

    // Definitions.
    let d0 = stage_digest("definitions", &base, &[]);
    let (defs, h_defs) = ws.stage(
        "definitions",
        DEFINITIONS_FILE,
        d0,
        |b| serde_json::from_slice::<BTreeMap<String, DefinitionEntry>>(b).ok(),
        || {
            let entries = build_definitions(task, config, gateway, definitions, workers)?;
            let bytes = pretty(&entries);
            Ok((entries, bytes))
        },
    )?;
    artifacts.insert(DEFINITIONS_FILE, h_defs.clone());
    let text: BTreeMap<String, String> = defs.iter().map(|(k, v)| (k.clone(), v.refined.clone())).collect();
    let root_definition = text.get(root).cloned().unwrap_or_default();

    // Candidate selection.
    let d1 = stage_digest("candidates", &base, &[&h_defs]);
    let (candidates, h_cands) = ws.stage(
        "candidates",
        CANDIDATES_FILE,
        d1,
        |b| parse_jsonl::<CandidateList>(b),
        || {
            let lists = if config.enable_hpcs {
                select_candidates(task, config, gateway, &text, &children, workers)?
            } else {
                children.iter().map(|c| all_pairs_candidates(c, &terms)).collect()
            };
            let bytes = jsonl(&lists);
            Ok((lists, bytes))
        },
    )?;
    artifacts.insert(CANDIDATES_FILE, h_cands.clone());

    // Ranking.
    let d2 = stage_digest("ranking", &base, &[&h_defs, &h_cands]);
    let (ranked, h_ranked) = ws.stage(
        "ranking",
        RANKED_FILE,
        d2,
        |b| parse_jsonl::<RankedParentSet>(b),
        || {
            let results = parallel_map(&candidates, workers, |list| {
                let parents = list.parents();
                let input = RankInput {
                    child: &list.child,
                    child_definition: text.get(&list.child).map(String::as_str).unwrap_or(""),
                    candidates: &parents,
                    definitions: &text,
                    root,
                    root_definition: &root_definition,
                    k2: config.k2,
                };
                rank_and_score(gateway, &config.chat.large_model, &input, &vocabulary)
            });
            let mut sets = Vec::with_capacity(results.len());
            for r in results {
                sets.push(r.map_err(|e| {
                    PipelineError::stage("ranking", Some(&e.child), gateway_kind(&e.source), &e.source)
                })?);
            }
            let bytes = jsonl(&sets);
            Ok((sets, bytes))
        },
    )?;
    artifacts.insert(RANKED_FILE, h_ranked.clone());

    let ranked_edges: Vec<CandidateEdge> = ranked
        .iter()
        .flat_map(|set| set.ranked.iter().map(|r| CandidateEdge::new(&set.child, &r.parent, r.score, EdgeStage::Ranked)))
        .collect();

    // Calibration.
    let final_edges = if config.enable_lscsf {
        let d3 = stage_digest("calibration", &base, &[&h_defs, &h_ranked]);
        let (calibrated, h_cal) = ws.stage(
            "calibration",
            CALIBRATED_FILE,
            d3,
            |b| parse_jsonl::<CalibratedEdge>(b),
            || {
                let source = LlmPenalties {
                    gateway,
                    model: &config.chat.large_model,
                    root,
                    root_definition: &root_definition,
                };
                let edges = calibrate(&ranked_edges, root, config.delta, config.tau_m, &source, workers).map_err(
                    |e| PipelineError::stage("calibration", Some(&e.child), gateway_kind(&e.source), &e.source),
                )?;
                let bytes = jsonl(&edges);
                Ok((edges, bytes))
            },
        )?;
        artifacts.insert(CALIBRATED_FILE, h_cal);
        calibrated.iter().map(CalibratedEdge::to_candidate).collect()
    } else {
        ws.remove(CALIBRATED_FILE);
        filter_and_normalize(&ranked_edges, config.tau_m)
    };

    // Assembly.
    let started = Instant::now();
    let mut graph = WeightedDigraph::from_edges(terms.iter().cloned(), &final_edges)
        .map_err(|e| assembly_error(&e))?;
    let repaired = ensure_attachable(&mut graph, root);
    if !repaired.is_empty() {
        log::info!("attached {} unreachable node(s) to the root: {repaired:?}", repaired.len());
    }
    let tree = max_arborescence(&graph, root).map_err(|e| assembly_error(&e))?;
    let prediction = PredictedFile::new(&tree.taxonomy, &tree.weights);
    let pred_bytes = pretty(&prediction);
    ws.write(PREDICTION_FILE, &pred_bytes)?;
    artifacts.insert(PREDICTION_FILE, sha_hex(&pred_bytes));
    ws.timing.insert("arborescence".into(), started.elapsed().as_millis());

    // Scoring.
    let (counts, metrics) = match &task.gold {
        Some(gold) => {
            let c = count(&tree.taxonomy, gold).map_err(|e| PipelineError::stage("evaluation", None, ErrorKind::Input, e))?;
            let file = MetricsFile::new(&[(opts.task_name.clone(), c)])
                .map_err(|e| PipelineError::stage("evaluation", None, ErrorKind::Input, e))?;
            let bytes = file.to_json().into_bytes();
            ws.write(METRICS_FILE, &bytes)?;
            artifacts.insert(METRICS_FILE, sha_hex(&bytes));
            (Some(c), Some(MetricsReport::from_counts(&c)))
        }
        None => {
            ws.remove(METRICS_FILE);
            (None, None)
        }
    };

    let manifest = json!({
        "task_digest": task_digest(task),
        "seed": config.seed,
        "config": config,
        "ablation": {
            "label": ablation_label(config),
            "enable_hpcs": config.enable_hpcs,
            "enable_lscsf": config.enable_lscsf,
            "k2": config.k2,
        },
        "llm_mode": gateway.mode(),
        "definitions": base["definitions"],
        "transcript_digest": gateway.transcript().digest(),
        "transcript_entries": gateway.transcript().len(),
        "repaired_nodes": repaired,
        "artifacts": artifacts,
    });
    ws.write(MANIFEST_FILE, &pretty(&manifest))?;
    ws.write(STAGES_FILE, &pretty(&ws.current))?;
    ws.write(TIMING_FILE, &pretty(&ws.timing))?;

    Ok(RunOutcome {
        prediction: tree.taxonomy,
        weights: tree.weights,
        repaired,
        counts,
        metrics,
        resumed: ws.resumed,
    })
}

fn assembly_error(e: &ArborescenceError) -> PipelineError {
    let term = match e {
        ArborescenceError::Infeasible { node } => Some(node.as_str()),
        ArborescenceError::BadArc { child, .. } => Some(child.as_str()),
        ArborescenceError::MissingRoot(r) => Some(r.as_str()),
    };
    let kind = match e {
        ArborescenceError::Infeasible { .. } => ErrorKind::Infeasible,
        _ => ErrorKind::Input,
    };
    PipelineError::stage("arborescence", term, kind, e)
}

fn definition_error(e: DefinitionError) -> PipelineError {
    match e {
        DefinitionError::Refine { term, source } => {
            PipelineError::stage("definitions", Some(&term), gateway_kind(&source), source)
        }
        DefinitionError::Snapshot { .. } => PipelineError::stage("definitions", None, ErrorKind::Input, e),
        other => PipelineError::stage("definitions", None, ErrorKind::Provider, other),
    }
}

fn build_definitions(
    task: &Task,
    config: &PipelineConfig,
    gateway: &Gateway,
    plan: DefinitionPlan,
    workers: usize,
) -> Result<BTreeMap<String, DefinitionEntry>, PipelineError> {
    let given = task.given_definitions();
    let source = match plan {
        DefinitionPlan::Skip => {
            // Terms without a definition fall back to their own name.
            return Ok(task
                .terms
                .iter()
                .map(|t| {
                    let raw = t.definition.clone().filter(|d| !d.trim().is_empty());
                    let refined = raw.clone().unwrap_or_else(|| t.name.clone());
                    (t.name.clone(), DefinitionEntry { raw, refined })
                })
                .collect());
        }
        DefinitionPlan::Retrieve { source, .. } => source,
    };
    let store = DefinitionStore::new(source);

    let raws = parallel_map(&task.terms, workers, |t: &TaskTerm| {
        store
            .retrieve_definition(&t.name)
            .map(|found| found.or_else(|| given.get(&t.name).cloned().flatten()))
            .map_err(|e| match e {
                DefinitionError::Transport(m) => {
                    PipelineError::stage("definitions", Some(&t.name), ErrorKind::Provider, m)
                }
                other => definition_error(other),
            })
    });
    let mut raw: BTreeMap<String, Option<String>> = BTreeMap::new();
    for (t, r) in task.terms.iter().zip(raws) {
        raw.insert(t.name.clone(), r?);
    }
    let root_raw = task
        .root_definition
        .clone()
        .or_else(|| raw.get(&task.root).cloned().flatten())
        .unwrap_or_default();

    let refined = parallel_map(&task.terms, workers, |t: &TaskTerm| {
        store.refine_definition(
            gateway,
            &config.chat.large_model,
            &t.name,
            raw[&t.name].as_deref(),
            &task.root,
            &root_raw,
            config.definition_words,
        )
    });
    let mut out = BTreeMap::new();
    for (t, r) in task.terms.iter().zip(refined) {
        let refined = r.map_err(definition_error)?;
        let refined: String =
            refined.split_whitespace().take(config.definition_word_cap).collect::<Vec<_>>().join(" ");
        out.insert(t.name.clone(), DefinitionEntry { raw: raw[&t.name].clone(), refined });
    }
    Ok(out)
}

fn select_candidates(
    task: &Task,
    config: &PipelineConfig,
    gateway: &Gateway,
    definitions: &BTreeMap<String, String>,
    children: &[String],
    workers: usize,
) -> Result<Vec<CandidateList>, PipelineError> {
    let terms = task.names();
    let templates = TemplateSet::new(&config.templates)
        .map_err(|e| PipelineError::stage("candidates", None, ErrorKind::Input, e))?;

    // Definition embeddings of every term, root included.
    let texts: Vec<String> = terms
        .iter()
        .map(|t| format!("{t}: {}", definitions.get(t).map(String::as_str).unwrap_or("")))
        .collect();
    let vectors = gateway
        .embed(&texts)
        .map_err(|e| PipelineError::stage("candidates", None, gateway_kind(&e), e))?;
    let embeddings: BTreeMap<String, Vec<f64>> = terms.iter().cloned().zip(vectors).collect();

    // Is-a votes for every ordered (query, anchor) pair. The root is never
    // a query.
    let pairs: Vec<(&str, &str)> = children
        .iter()
        .flat_map(|q| terms.iter().filter(move |a| *a != q).map(move |a| (q.as_str(), a.as_str())))
        .collect();
    let votes = parallel_map(&pairs, workers, |&(q, a)| {
        isa_vote(gateway, &config.chat.small_model, q, a, &templates)
            .map_err(|e| PipelineError::stage("candidates", Some(q), gateway_kind(&e), e))
    });
    let mut table = VoteTable::new();
    for v in votes {
        table.insert(&v?);
    }

    let mut out = Vec::with_capacity(children.len());
    for child in children {
        let isa = isa_candidates(child, &terms, &table, config.k_isa, config.mutuality);
        let defs = definition_candidates(child, &terms, &embeddings, config.k_def)
            .map_err(|e| PipelineError::stage("candidates", Some(child), ErrorKind::Input, e))?;
        let def_names: Vec<String> = defs.iter().map(|(p, _)| p.clone()).collect();
        let fused = fuse_candidates(&isa, &def_names, config.k1());
        let candidates = fused
            .into_iter()
            .map(|p| CandidateInfo {
                isa_score: Some(table.score(child, &p)),
                def_sim: Some(cosine(&embeddings[child.as_str()], &embeddings[&p])),
                parent: p,
            })
            .collect();
        out.push(CandidateList { child: child.clone(), candidates });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{task_from_file, TaskFile};
    use crate::gateway::{LlmMode, Transcript, TranscriptEntry};
    use crate::oracle::{GoldOracle, HashingEmbedder};

    fn task() -> Task {
        let edges = [
            ("mammal", "animal"),
            ("bird", "animal"),
            ("dog", "mammal"),
            ("cat", "mammal"),
            ("sparrow", "bird"),
            ("puppy", "dog"),
        ];
        let mut names: Vec<&str> = vec!["animal"];
        names.extend(edges.iter().map(|(c, _)| *c));
        task_from_file(TaskFile {
            root: "animal".into(),
            root_definition: Some("a living organism".into()),
            terms: names.iter().map(|n| TaskTerm { name: n.to_string(), definition: None }).collect(),
            gold_edges: Some(edges.iter().map(|(c, p)| (c.to_string(), p.to_string())).collect()),
        })
        .unwrap()
    }

    fn oracle_gateway(task: &Task, mode: LlmMode, transcript: Transcript) -> Gateway {
        let g = Gateway::new(mode, transcript, "emb");
        if mode == LlmMode::Replay {
            return g;
        }
        g.with_chat(Box::new(GoldOracle::new(task.gold.as_ref().unwrap())))
            .with_embedder(Box::new(HashingEmbedder::default()))
    }

    fn opts(dir: &Path, resume: bool) -> RunOptions {
        RunOptions { out_dir: dir.to_path_buf(), resume, task_name: "t".into() }
    }

    #[test]
    fn oracle_run_recovers_gold() {
        let t = task();
        let dir = tempfile::tempdir().unwrap();
        let g = oracle_gateway(&t, LlmMode::Record, Transcript::new());
        let cfg = PipelineConfig::default();
        let out = run_pipeline(&t, &cfg, &g, DefinitionPlan::Skip, &opts(dir.path(), false)).unwrap();
        assert_eq!(out.prediction, *t.gold.as_ref().unwrap());
        assert_eq!(out.metrics.unwrap().as_array(), [1.0; 6]);
        for f in [DEFINITIONS_FILE, CANDIDATES_FILE, RANKED_FILE, CALIBRATED_FILE, PREDICTION_FILE, MANIFEST_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }

        // Replays of the recorded transcript need no backend and agree byte
        // for byte with each other and, apart from the mode, with the recording.
        let replay_into = |d: &Path| {
            let transcript = Transcript::new();
            for e in serde_json::Deserializer::from_slice(&g.transcript().to_jsonl()).into_iter::<TranscriptEntry>() {
                transcript.insert(e.unwrap());
            }
            let replay = oracle_gateway(&t, LlmMode::Replay, transcript);
            run_pipeline(&t, &cfg, &replay, DefinitionPlan::Skip, &opts(d, false)).unwrap();
            assert_eq!(replay.network_calls(), 0);
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        replay_into(a.path());
        replay_into(b.path());
        let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
        for f in [PREDICTION_FILE, MANIFEST_FILE, CALIBRATED_FILE, CANDIDATES_FILE] {
            assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
        }
        assert_eq!(read(dir.path(), PREDICTION_FILE), read(a.path(), PREDICTION_FILE));
    }

    #[test]
    fn ablations_change_artifacts() {
        let t = task();
        let dir = tempfile::tempdir().unwrap();
        let g = oracle_gateway(&t, LlmMode::Live, Transcript::new());
        let cfg = PipelineConfig { enable_hpcs: false, enable_lscsf: false, ..Default::default() };
        run_pipeline(&t, &cfg, &g, DefinitionPlan::Skip, &opts(dir.path(), false)).unwrap();
        assert!(!dir.path().join(CALIBRATED_FILE).exists());
        let lists: Vec<CandidateList> = parse_jsonl(&fs::read(dir.path().join(CANDIDATES_FILE)).unwrap()).unwrap();
        assert!(lists.iter().all(|l| l.candidates.len() == t.terms.len() - 1));
        let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["ablation"]["label"], "w/o HPCS, w/o LSC-SF");
    }

    #[test]
    fn resume_skips_completed_stages() {
        let t = task();
        let dir = tempfile::tempdir().unwrap();
        let g = oracle_gateway(&t, LlmMode::Live, Transcript::new());
        let cfg = PipelineConfig::default();
        run_pipeline(&t, &cfg, &g, DefinitionPlan::Skip, &opts(dir.path(), true)).unwrap();
        let before = fs::read(dir.path().join(PREDICTION_FILE)).unwrap();

        // A fresh gateway with no backend: any recomputation would fail.
        let empty = Gateway::new(LlmMode::Replay, Transcript::new(), "emb");
        let out = run_pipeline(&t, &cfg, &empty, DefinitionPlan::Skip, &opts(dir.path(), true)).unwrap();
        assert_eq!(out.resumed, ["definitions", "candidates", "ranking", "calibration"]);
        assert_eq!(fs::read(dir.path().join(PREDICTION_FILE)).unwrap(), before);

        // The config is part of every stage digest, so changing it recomputes.
        let cfg2 = PipelineConfig { k2: 1, ..Default::default() };
        let err = run_pipeline(&t, &cfg2, &empty, DefinitionPlan::Skip, &opts(dir.path(), true)).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Provider);
    }

    #[test]
    fn replay_miss_names_stage_and_term() {
        let t = task();
        let dir = tempfile::tempdir().unwrap();
        let g = Gateway::new(LlmMode::Replay, Transcript::new(), "emb");
        let cfg = PipelineConfig { enable_hpcs: false, ..Default::default() };
        let err = run_pipeline(&t, &cfg, &g, DefinitionPlan::Skip, &opts(dir.path(), false)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("stage ranking (term \"bird\")"), "{msg}");
        assert_eq!(err.kind().exit_code(), 3);
    }
}
