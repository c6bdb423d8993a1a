use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use taxon_core::dataset::{convert_external, load_taxonomy, ExternalFormat, Task};
use taxon_core::definitions::{DefinitionSource, Snapshot, Wikipedia};
use taxon_core::evaluation::{count, render, CountTuple, EvaluationError, MetricsFile, MetricsReport};
use taxon_core::gateway::{OpenAiCompatible, ReqwestTransport, RetryPolicy};
use taxon_core::oracle::{GoldOracle, HashingEmbedder};
use taxon_core::par::parallel_map;
use taxon_core::pipeline::RunOptions;
use taxon_core::{load_task, run_pipeline, DefinitionPlan, Gateway, LlmMode, PipelineConfig, PipelineError, Transcript};

#[derive(Parser)]
#[command(name = "taxon", version, about = "Zero-shot taxonomy induction from a root concept and a term list")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Induce a taxonomy for one task file.
    Run {
        #[arg(long)]
        task: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a predicted taxonomy against gold.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Report path; defaults to eval.json next to the prediction.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a tab-separated edge list (or term list plus relations) to a task file.
    Convert {
        #[arg(long, conflicts_with_all = ["terms", "relations"])]
        edges: Option<PathBuf>,
        #[arg(long, requires = "relations")]
        terms: Option<PathBuf>,
        #[arg(long, requires = "terms")]
        relations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record a transcript answered from the task's gold tree.
    SynthOracle {
        #[arg(long)]
        task: PathBuf,
        /// Transcript to write; existing entries are kept.
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "skip")]
        definitions: String,
        /// Record one run per value.
        #[arg(long = "k2", num_args = 1.., default_values_t = [3usize])]
        k2: Vec<usize>,
        /// Also record the runs without candidate selection and without calibration.
        #[arg(long)]
        ablations: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run several tasks and report micro-averaged metrics.
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        tasks: Vec<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out_dir: PathBuf,
        /// Tasks processed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args, Clone)]
struct RunFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "replay")]
    llm_mode: LlmMode,
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// live, snapshot:<path>, or skip
    #[arg(long, default_value = "live")]
    definitions: String,
    #[arg(long)]
    no_hpcs: bool,
    #[arg(long)]
    no_lscsf: bool,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resume: bool,
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.kind().exit_code() as u8, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { task, run, out_dir } => cmd_run(&task, &run, &out_dir),
        Command::Eval { pred, gold, out } => cmd_eval(&pred, &gold, out),
        Command::Convert { edges, terms, relations, out } => cmd_convert(edges, terms, relations, &out),
        Command::SynthOracle { task, transcript, config, definitions, k2, ablations, seed, out_dir } => {
            cmd_synth(&task, &transcript, config.as_deref(), &definitions, &k2, ablations, seed, &out_dir)
        }
        Command::Sweep { tasks, run, out_dir, jobs } => cmd_sweep(&tasks, &run, &out_dir, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let Some(path) = path else { return Ok(PipelineConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: PipelineConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(cfg)
}

fn effective_config(flags: &RunFlags) -> anyhow::Result<PipelineConfig> {
    let mut cfg = load_config(flags.config.as_deref())?;
    if flags.no_hpcs {
        cfg.enable_hpcs = false;
    }
    if flags.no_lscsf {
        cfg.enable_lscsf = false;
    }
    if let Some(k2) = flags.k2 {
        cfg.k2 = k2;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn definition_plan(spec: &str, cfg: &PipelineConfig) -> anyhow::Result<DefinitionPlan> {
    let source = match spec {
        "skip" => return Ok(DefinitionPlan::Skip),
        "live" => DefinitionSource::LiveEncyclopedia(Box::new(Wikipedia::new(
            "en",
            Duration::from_secs(cfg.request_timeout_secs),
        )?)),
        other => match other.strip_prefix("snapshot:") {
            Some(path) => DefinitionSource::OfflineSnapshot(Snapshot::load(Path::new(path))?),
            None => bail!("--definitions must be live, snapshot:<path> or skip, got {other:?}"),
        },
    };
    Ok(DefinitionPlan::Retrieve { source, label: spec.to_string() })
}

fn open_transcript(mode: LlmMode, path: Option<&Path>) -> anyhow::Result<Transcript> {
    match (mode, path) {
        (LlmMode::Replay, None) => bail!("--llm-mode replay needs --transcript"),
        (LlmMode::Record, None) => bail!("--llm-mode record needs --transcript"),
        (LlmMode::Replay, Some(p)) => Ok(Transcript::load(p)?),
        (_, Some(p)) if p.exists() => Ok(Transcript::load(p)?),
        _ => Ok(Transcript::new()),
    }
}

fn build_gateway(cfg: &PipelineConfig, flags: &RunFlags) -> anyhow::Result<Gateway> {
    let transcript = open_transcript(flags.llm_mode, flags.transcript.as_deref())?;
    let gateway = Gateway::new(flags.llm_mode, transcript, &cfg.embedding.model).with_batch_size(cfg.embedding.batch_size);
    if flags.llm_mode == LlmMode::Replay {
        return Ok(gateway);
    }
    let retry = RetryPolicy { max_retries: cfg.max_retries, base_delay: Duration::from_millis(cfg.retry_base_ms) };
    let timeout = Duration::from_secs(cfg.request_timeout_secs);
    let key = |var: &str| std::env::var(var).ok().filter(|k| !k.is_empty());
    let chat_key = key(&cfg.chat.api_key_env);
    if chat_key.is_none() {
        log::warn!("{} is not set; sending chat requests without credentials", cfg.chat.api_key_env);
    }
    let chat = OpenAiCompatible::new(Box::new(ReqwestTransport::new(timeout)?), &cfg.chat.base_url, chat_key, retry)
        .with_seed(cfg.seed);
    let embedder = OpenAiCompatible::new(
        Box::new(ReqwestTransport::new(timeout)?),
        &cfg.embedding.base_url,
        key(&cfg.embedding.api_key_env),
        retry,
    );
    Ok(gateway.with_chat(Box::new(chat)).with_embedder(Box::new(embedder)))
}

fn save_transcript(gateway: &Gateway, path: Option<&Path>) -> anyhow::Result<()> {
    if let (LlmMode::Record, Some(p)) = (gateway.mode(), path) {
        gateway.transcript().save(p).with_context(|| format!("saving transcript {}", p.display()))?;
    }
    Ok(())
}

fn task_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "task".into())
}

fn load(path: &Path) -> Result<Task, Failure> {
    load_task(path).map_err(Failure::input)
}

fn print_outcome(name: &str, metrics: Option<&MetricsReport>, out_dir: &Path) {
    match metrics {
        Some(m) => println!("{name}\n{}", render(m)),
        None => println!("{name}: no gold edges, evaluation skipped"),
    }
    println!("artifacts in {}", out_dir.display());
}

fn cmd_run(task_path: &Path, flags: &RunFlags, out_dir: &Path) -> Result<(), Failure> {
    let task = load(task_path)?;
    let cfg = effective_config(flags)?;
    let plan = definition_plan(&flags.definitions, &cfg)?;
    let gateway = build_gateway(&cfg, flags)?;
    let opts = RunOptions { out_dir: out_dir.to_path_buf(), resume: flags.resume, task_name: task_name(task_path) };
    let outcome = run_pipeline(&task, &cfg, &gateway, plan, &opts);
    save_transcript(&gateway, flags.transcript.as_deref())?;
    let outcome = outcome?;
    print_outcome(&opts.task_name, outcome.metrics.as_ref(), out_dir);
    Ok(())
}

fn cmd_eval(pred: &Path, gold: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let p = load_taxonomy(pred).map_err(Failure::input)?;
    let g = load_taxonomy(gold).map_err(Failure::input)?;
    let counts = count(&p, &g).map_err(|e: EvaluationError| Failure::input(e))?;
    let report = MetricsFile::new(&[(task_name(pred), counts)]).map_err(Failure::input)?;
    println!("{}", render(&MetricsReport::from_counts(&counts)));
    let out = out.unwrap_or_else(|| pred.with_file_name("eval.json"));
    fs::write(&out, report.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_convert(
    edges: Option<PathBuf>,
    terms: Option<PathBuf>,
    relations: Option<PathBuf>,
    out: &Path,
) -> Result<(), Failure> {
    let format = match (edges, terms, relations) {
        (Some(e), None, None) => ExternalFormat::EdgeList(e),
        (None, Some(terms), Some(relations)) => ExternalFormat::TermsAndRelations { terms, relations },
        _ => return Err(Failure::input(anyhow!("give --edges, or --terms with --relations"))),
    };
    let task = convert_external(&format).map_err(Failure::input)?;
    fs::write(out, task.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    println!("{} terms, root {:?}", task.terms.len(), task.root);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    task_path: &Path,
    transcript: &Path,
    config: Option<&Path>,
    definitions: &str,
    k2s: &[usize],
    ablations: bool,
    seed: u64,
    out_dir: &Path,
) -> Result<(), Failure> {
    let task = load(task_path)?;
    let gold = task.gold.clone().ok_or_else(|| Failure::input(anyhow!("task has no gold edges")))?;
    let base = load_config(config)?;
    let existing = if transcript.exists() { Transcript::load(transcript).map_err(Failure::input)? } else { Transcript::new() };
    let gateway = Gateway::new(LlmMode::Record, existing, &base.embedding.model)
        .with_chat(Box::new(GoldOracle::new(&gold)))
        .with_embedder(Box::new(HashingEmbedder::default()));

    let mut variants: Vec<(bool, bool)> = vec![(true, true)];
    if ablations {
        variants.extend([(false, true), (true, false)]);
    }
    for &k2 in k2s {
        for &(hpcs, lscsf) in &variants {
            let cfg = PipelineConfig { k2, seed, enable_hpcs: hpcs, enable_lscsf: lscsf, ..base.clone() };
            cfg.validate().map_err(Failure::input)?;
            let dir = out_dir.join(format!("k2-{k2}-{}", if hpcs && lscsf { "full" } else if hpcs { "no-lscsf" } else { "no-hpcs" }));
            let opts = RunOptions { out_dir: dir, resume: false, task_name: task_name(task_path) };
            let plan = definition_plan(definitions, &cfg)?;
            let outcome = run_pipeline(&task, &cfg, &gateway, plan, &opts)?;
            if let Some(m) = outcome.metrics {
                println!("k2={k2} hpcs={hpcs} lscsf={lscsf}: F1_a {:.4} F1_e {:.4}", m.ancestor_f1, m.edge_f1);
            }
        }
    }
    gateway.transcript().save(transcript).with_context(|| format!("saving {}", transcript.display()))?;
    println!("{} transcript entries in {}", gateway.transcript().len(), transcript.display());
    Ok(())
}

fn cmd_sweep(tasks: &[PathBuf], flags: &RunFlags, out_dir: &Path, jobs: usize) -> Result<(), Failure> {
    let cfg = effective_config(flags)?;
    let names: Vec<String> = tasks.iter().map(|p| task_name(p)).collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(Failure::input(anyhow!("task file stems must be distinct")));
    }
    let loaded = tasks.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let gateway = build_gateway(&cfg, flags)?;
    let items: Vec<(String, Task)> = names.into_iter().zip(loaded).collect();

    let results = parallel_map(&items, jobs, |(name, task)| {
        let plan = definition_plan(&flags.definitions, &cfg).map_err(Failure::input)?;
        let opts = RunOptions { out_dir: out_dir.join(name), resume: flags.resume, task_name: name.clone() };
        run_pipeline(task, &cfg, &gateway, plan, &opts).map_err(Failure::from)
    });
    save_transcript(&gateway, flags.transcript.as_deref())?;

    let mut per: Vec<(String, CountTuple)> = Vec::new();
    let mut first_error = None;
    for ((name, _), r) in items.iter().zip(results) {
        match r {
            Ok(outcome) => {
                if let Some(c) = outcome.counts {
                    per.push((name.clone(), c));
                }
            }
            Err(f) => {
                eprintln!("{name}: {:#}", f.error);
                first_error.get_or_insert(f);
            }
        }
    }
    if !per.is_empty() {
        let file = MetricsFile::new(&per).map_err(Failure::input)?;
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        fs::write(out_dir.join("metrics.json"), file.to_json() + "\n").context("writing sweep metrics")?;
        let counts: Vec<CountTuple> = per.iter().map(|(_, c)| *c).collect();
        let micro = taxon_core::micro_average(&counts).map_err(Failure::input)?;
        println!("micro average over {} task(s)\n{}", per.len(), render(&micro));
    }
    match first_error {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
