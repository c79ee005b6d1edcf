//! Command-line front end for the polarity-aware embedding pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use truewalks::eval::{self, EvalReport};
use truewalks::pipeline::{self, PipelineConfig, PipelineError};
use truewalks::walk::WalkCorpus;

#[derive(Parser, Debug)]
#[command(
    name = "truewalks",
    version,
    about = "Polarity-aware knowledge graph embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic graph with a planted negative-statement signal.
    Synth(Common),
    /// Sample walks and write corpus.txt.
    Walk(Common),
    /// Train skip-gram models on a walk corpus.
    Train {
        #[command(flatten)]
        common: Common,
        /// Corpus file; defaults to corpus.txt in the output directory.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Combine trained models into per-entity vectors.
    Fuse(Common),
    /// Pair classification with Monte Carlo cross-validation.
    Classify(Common),
    /// Similarity ranking of related pairs.
    Rank(Common),
    /// Run every stage.
    Pipeline(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file of key=value lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = pipeline::SEED_ENV)]
    seed: Option<u64>,
    /// Walks per entity and polarity.
    #[arg(long)]
    walks: Option<usize>,
    /// Walk depth bound.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Negative samples per context pair.
    #[arg(long = "neg-k")]
    neg_k: Option<usize>,
    #[arg(long)]
    order_aware: bool,
    /// truewalks, positive_only or merged_polarity.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Single-worker training for bitwise reproducible output.
    #[arg(long)]
    deterministic: bool,
    /// Any config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&pipeline::read_file(path)?)?;
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags: [(&str, Option<String>); 14] = [
            ("ontology", path(&self.ontology)),
            ("annotations", path(&self.annotations)),
            ("pairs", path(&self.pairs)),
            ("out", path(&self.out)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("walk.max_walks", self.walks.map(|v| v.to_string())),
            ("walk.max_depth", self.depth.map(|v| v.to_string())),
            ("embed.dim", self.dim.map(|v| v.to_string())),
            ("embed.window", self.window.map(|v| v.to_string())),
            ("embed.epochs", self.epochs.map(|v| v.to_string())),
            ("embed.noise_k", self.neg_k.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("workers", self.workers.map(|v| v.to_string())),
            (
                "embed.order_aware",
                self.order_aware.then(|| "true".to_string()),
            ),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| PipelineError::Config {
                key: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Synth(c) => {
            let cfg = c.config()?;
            println!("{}", pipeline::synth_stage(&cfg)?);
        }
        Command::Walk(c) => {
            let cfg = c.config()?;
            let kg = pipeline::load_graph(&cfg)?;
            let corpus = pipeline::walk_stage(&kg, &cfg)?;
            pipeline::write_artifact(&cfg, "walk", pipeline::CORPUS_FILE, &corpus.to_text())?;
            println!(
                "positive_walks={} negative_walks={}",
                corpus.positive.len(),
                corpus.negative.len()
            );
        }
        Command::Train { common, corpus } => {
            let cfg = common.config()?;
            let path = corpus.unwrap_or_else(|| cfg.out_path(pipeline::CORPUS_FILE));
            let corpus = WalkCorpus::from_text(&pipeline::read_file(&path)?)?;
            let models = pipeline::train_stage(&corpus, &cfg)?;
            for (name, text) in models.files() {
                pipeline::write_artifact(&cfg, "train", name, &text)?;
            }
        }
        Command::Fuse(c) => {
            let cfg = c.config()?;
            let kg = pipeline::load_graph(&cfg)?;
            let table = pipeline::fuse_files(&cfg, &pipeline::entities(&kg))?;
            pipeline::write_artifact(&cfg, "fuse", pipeline::EMBEDDINGS_FILE, &table.to_text())?;
            println!("entities={} dim={}", table.len(), table.dim());
        }
        Command::Classify(c) => {
            let cfg = c.config()?;
            let table = pipeline::load_embeddings(&cfg)?;
            let pairs = pipeline::load_pairs(&cfg)?;
            let splits = eval::classify(&table, &pairs, &cfg.eval, cfg.exec())?;
            let report = EvalReport::new(splits, None);
            pipeline::write_artifact(&cfg, "classify", pipeline::REPORT_FILE, &report.to_json())?;
            print_medians(&report);
        }
        Command::Rank(c) => {
            let cfg = c.config()?;
            let table = pipeline::load_embeddings(&cfg)?;
            let pairs = pipeline::load_pairs(&cfg)?;
            let m = pipeline::rank_stage(&table, &pairs)?;
            pipeline::write_artifact(
                &cfg,
                "rank",
                pipeline::RANKING_FILE,
                &pipeline::ranking_json(&m),
            )?;
            let csv = eval::export_similarity_distribution(&table, &pairs)?;
            pipeline::write_artifact(&cfg, "rank", pipeline::SIMILARITY_FILE, &csv)?;
            println!(
                "hits10={} hits100={} mean_rank={} auc={}",
                m.hits10, m.hits100, m.mean_rank, m.auc
            );
        }
        Command::Pipeline(c) => {
            let cfg = c.config()?;
            let run = pipeline::run_pipeline(&cfg)?;
            print_medians(&run.report);
            if let Some(m) = &run.report.ranking {
                println!("auc={} mean_rank={}", m.auc, m.mean_rank);
            }
        }
    }
    Ok(())
}

fn print_medians(report: &EvalReport) {
    let show = |v: Option<f64>| v.map_or("nan".to_string(), |v| v.to_string());
    println!(
        "precision={} recall={} f={}",
        show(report.precision_median),
        show(report.recall_median),
        show(report.f_median)
    );
}

/// One line, no embedded newlines.
fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "error: usage: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(match e {
                PipelineError::Config { .. } => 2,
                _ => 1,
            })
        }
    }
}
