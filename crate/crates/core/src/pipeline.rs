//! End-to-end orchestration: configuration, stages and on-disk artifacts.
//!
//! Configuration is flat `key=value` text with section prefixes
//! (`walk.max_depth=4`). Every artifact is written next to a manifest in the
//! same format, so a stage can be re-run from its manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::embed::{self, DualModel, EmbedError, EmbeddingModel, SkipGramConfig};
use crate::eval::{self, EvalConfig, EvalError, EvalReport, PrfMode, RankingMetrics};
use crate::fuse::{self, EntityEmbeddingTable, FuseError, FusionStrategy, VectorSet};
use crate::ingest::{self, IngestError, PairDataset};
use crate::kg::KnowledgeGraph;
use crate::par::{self, Exec};
use crate::synth::{self, SynthConfig, SynthError};
use crate::walk::{self, WalkConfig, WalkCorpus, WalkError, WalkStrategy};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "TRUEWALKS_SEED";

pub const ONTOLOGY_FILE: &str = "ontology.nt";
pub const ANNOTATIONS_FILE: &str = "annotations.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CORPUS_FILE: &str = "corpus.txt";
pub const POS_MODEL_FILE: &str = "pos.emb";
pub const NEG_MODEL_FILE: &str = "neg.emb";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";
pub const REPORT_FILE: &str = "report.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const SIMILARITY_FILE: &str = "similarity.csv";
pub const MANIFEST_SUFFIX: &str = ".manifest";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {key}: {message}")]
    Config { key: String, message: String },
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("walk: {0}")]
    Walk(#[from] WalkError),
    #[error("embed: {0}")]
    Embed(#[from] EmbedError),
    #[error("fuse: {0}")]
    Fuse(#[from] FuseError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
}

fn config_err(key: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn mode_name(mode: WalkStrategy) -> &'static str {
    match mode {
        WalkStrategy::TrueWalks => "truewalks",
        WalkStrategy::PositiveOnly => "positive_only",
        WalkStrategy::MergedPolarity => "merged_polarity",
    }
}

pub fn parse_mode(s: &str) -> Option<WalkStrategy> {
    match s {
        "truewalks" => Some(WalkStrategy::TrueWalks),
        "positive_only" => Some(WalkStrategy::PositiveOnly),
        "merged_polarity" => Some(WalkStrategy::MergedPolarity),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub ontology: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: WalkStrategy,
    pub workers: usize,
    pub deterministic: bool,
    pub walk: WalkConfig,
    pub embed: SkipGramConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ontology: None,
            annotations: None,
            pairs: None,
            out: PathBuf::from("out"),
            seed: 42,
            mode: WalkStrategy::TrueWalks,
            workers: 1,
            deterministic: false,
            walk: WalkConfig::default(),
            embed: SkipGramConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| config_err(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(
            key,
            format!("expected a boolean, got {value:?}"),
        )),
    }
}

fn parse_list<T>(
    key: &str,
    value: &str,
    item: impl Fn(&str) -> Result<T, PipelineError>,
) -> Result<Vec<T>, PipelineError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(config_err(key, "empty list"));
    }
    Ok(items)
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl PipelineConfig {
    /// Parses config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key=value` lines; blank lines, `#` comments and
    /// `manifest.*` keys are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(&format!("line {}", i + 1), "expected key=value"))?;
            let key = key.trim();
            if key.starts_with("manifest.") {
                continue;
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "ontology" => self.ontology = opt_path(value),
            "annotations" => self.annotations = opt_path(value),
            "pairs" => self.pairs = opt_path(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.set_seed(parse(key, value)?),
            "mode" => {
                self.mode = parse_mode(value).ok_or_else(|| {
                    config_err(key, "expected truewalks, positive_only or merged_polarity")
                })?
            }
            "workers" => self.workers = parse(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "walk.max_walks" => self.walk.max_walks = parse(key, value)?,
            "walk.max_depth" => self.walk.max_depth = parse(key, value)?,
            "embed.dim" => self.embed.dim = parse(key, value)?,
            "embed.window" => self.embed.window = parse(key, value)?,
            "embed.epochs" => self.embed.epochs = parse(key, value)?,
            "embed.noise_k" => self.embed.noise_k = parse(key, value)?,
            "embed.learning_rate" => self.embed.learning_rate = parse(key, value)?,
            "embed.min_count" => self.embed.min_count = parse(key, value)?,
            "embed.order_aware" => self.embed.order_aware = parse_bool(key, value)?,
            "eval.mccv_runs" => self.eval.mccv_runs = parse(key, value)?,
            "eval.test_fraction" => self.eval.test_fraction = parse(key, value)?,
            "eval.alpha" => self.eval.alpha = parse(key, value)?,
            "eval.n_estimators" => {
                self.eval.n_estimators = parse_list(key, value, |v| parse(key, v))?
            }
            "eval.max_depths" => {
                self.eval.max_depths = parse_list(key, value, |v| match v {
                    "none" => Ok(None),
                    _ => parse(key, v).map(Some),
                })?
            }
            "eval.prf_mode" => {
                self.eval.prf_mode = match value {
                    "positive" => PrfMode::PositiveClass,
                    "weighted" => PrfMode::Weighted,
                    _ => return Err(config_err(key, "expected positive or weighted")),
                }
            }
            "synth.branching" => self.synth.branching = parse(key, value)?,
            "synth.depth" => self.synth.depth = parse(key, value)?,
            "synth.n_entities" => self.synth.n_entities = parse(key, value)?,
            "synth.pos_per_entity" => self.synth.pos_per_entity = parse(key, value)?,
            "synth.neg_per_entity" => self.synth.neg_per_entity = parse(key, value)?,
            "synth.n_pairs" => self.synth.n_pairs = parse(key, value)?,
            "synth.signal" => self.synth.signal = parse(key, value)?,
            "synth.group_size" => self.synth.group_size = parse(key, value)?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.walk.seed = seed;
        self.embed.seed = seed;
        self.eval.seed = seed;
        self.synth.seed = seed;
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("ontology", path_text(&self.ontology));
        kv("annotations", path_text(&self.annotations));
        kv("pairs", path_text(&self.pairs));
        kv("out", self.out.display().to_string());
        kv("seed", self.seed.to_string());
        kv("mode", mode_name(self.mode).to_string());
        kv("workers", self.workers.to_string());
        kv("deterministic", self.deterministic.to_string());
        kv("walk.max_walks", self.walk.max_walks.to_string());
        kv("walk.max_depth", self.walk.max_depth.to_string());
        kv("embed.dim", self.embed.dim.to_string());
        kv("embed.window", self.embed.window.to_string());
        kv("embed.epochs", self.embed.epochs.to_string());
        kv("embed.noise_k", self.embed.noise_k.to_string());
        kv("embed.learning_rate", self.embed.learning_rate.to_string());
        kv("embed.min_count", self.embed.min_count.to_string());
        kv("embed.order_aware", self.embed.order_aware.to_string());
        kv("eval.mccv_runs", self.eval.mccv_runs.to_string());
        kv("eval.test_fraction", self.eval.test_fraction.to_string());
        kv("eval.alpha", self.eval.alpha.to_string());
        let list = |v: Vec<String>| v.join(",");
        kv(
            "eval.n_estimators",
            list(
                self.eval
                    .n_estimators
                    .iter()
                    .map(|n| n.to_string())
                    .collect(),
            ),
        );
        kv(
            "eval.max_depths",
            list(
                self.eval
                    .max_depths
                    .iter()
                    .map(|d| d.map_or("none".to_string(), |d| d.to_string()))
                    .collect(),
            ),
        );
        kv(
            "eval.prf_mode",
            match self.eval.prf_mode {
                PrfMode::PositiveClass => "positive",
                PrfMode::Weighted => "weighted",
            }
            .to_string(),
        );
        kv("synth.branching", self.synth.branching.to_string());
        kv("synth.depth", self.synth.depth.to_string());
        kv("synth.n_entities", self.synth.n_entities.to_string());
        kv(
            "synth.pos_per_entity",
            self.synth.pos_per_entity.to_string(),
        );
        kv(
            "synth.neg_per_entity",
            self.synth.neg_per_entity.to_string(),
        );
        kv("synth.n_pairs", self.synth.n_pairs.to_string());
        kv("synth.signal", self.synth.signal.to_string());
        kv("synth.group_size", self.synth.group_size.to_string());
        s
    }

    /// Hash of every setting except the output directory.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out="))
            .map(|l| format!("{l}\n"))
            .collect();
        format!("{:016x}", par::fnv1a(&[text.as_bytes()]))
    }

    /// Workers used for training; deterministic mode forces one.
    pub fn train_workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.workers.max(1)
        }
    }

    pub fn exec(&self) -> Exec {
        Exec::from_workers(self.workers)
    }

    fn input(&self, key: &str, p: &Option<PathBuf>) -> Result<PathBuf, PipelineError> {
        p.clone()
            .ok_or_else(|| config_err(key, "required input path not set"))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes an artifact and its manifest into the output directory.
pub fn write_artifact(
    cfg: &PipelineConfig,
    stage: &str,
    name: &str,
    contents: &str,
) -> Result<PathBuf, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    let path = cfg.out_path(name);
    fs::write(&path, contents).map_err(io(&path))?;
    let manifest = format!(
        "manifest.artifact={name}\nmanifest.stage={stage}\nmanifest.version={VERSION}\nmanifest.config_hash={}\n{}",
        cfg.hash(),
        cfg.to_text()
    );
    let mpath = cfg.out_path(&format!("{name}{MANIFEST_SUFFIX}"));
    fs::write(&mpath, manifest).map_err(io(&mpath))?;
    info!("wrote {}", path.display());
    Ok(path)
}

/// Loads the graph from the configured ontology and annotation files.
pub fn load_graph(cfg: &PipelineConfig) -> Result<KnowledgeGraph, PipelineError> {
    let onto_path = cfg.input("ontology", &cfg.ontology)?;
    let ann_path = cfg.input("annotations", &cfg.annotations)?;
    let onto = fs::read(&onto_path).map_err(|source| PipelineError::Io {
        path: onto_path.clone(),
        source,
    })?;
    let triples = ingest::parse_ntriples(&onto)?;
    let statements = ingest::fold_negative_assertions(&triples)?;
    let annotations = ingest::parse_annotations(read_file(&ann_path)?.as_bytes())?;
    let (kg, warnings) = ingest::assemble_kg(&statements, &annotations)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(kg)
}

pub fn load_pairs(cfg: &PipelineConfig) -> Result<PairDataset, PipelineError> {
    let path = cfg.input("pairs", &cfg.pairs)?;
    Ok(ingest::parse_pairs(read_file(&path)?.as_bytes())?)
}

/// Root entity tokens in graph order.
pub fn entities(kg: &KnowledgeGraph) -> Vec<String> {
    kg.root_entities().iter().map(|&id| kg.token(id)).collect()
}

pub fn walk_stage(kg: &KnowledgeGraph, cfg: &PipelineConfig) -> Result<WalkCorpus, PipelineError> {
    Ok(walk::build_corpus(kg, &cfg.walk, cfg.mode, cfg.exec())?)
}

/// Trained models: two for polarity-aware walks, one for the baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum Models {
    Dual(DualModel),
    Single(EmbeddingModel),
}

impl Models {
    /// `(file name, text)` for each model.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        match self {
            Models::Dual(d) => vec![
                (POS_MODEL_FILE, d.positive.to_text()),
                (NEG_MODEL_FILE, d.negative.to_text()),
            ],
            Models::Single(m) => vec![(POS_MODEL_FILE, m.to_text())],
        }
    }
}

pub fn train_stage(corpus: &WalkCorpus, cfg: &PipelineConfig) -> Result<Models, PipelineError> {
    let workers = cfg.train_workers();
    Ok(match cfg.mode {
        WalkStrategy::TrueWalks => Models::Dual(embed::train_dual(corpus, &cfg.embed, workers)?.0),
        _ => Models::Single(embed::train_single(corpus, &cfg.embed, workers)?.0),
    })
}

pub fn fuse_stage(
    models: &Models,
    entities: &[String],
) -> Result<EntityEmbeddingTable, PipelineError> {
    Ok(match models {
        Models::Dual(d) => {
            fuse::combine(&d.positive, &d.negative, entities, FusionStrategy::Concat)?
        }
        Models::Single(m) => fuse::single(m, entities)?,
    })
}

/// Fuses model files written by [`train_stage`].
pub fn fuse_files(
    cfg: &PipelineConfig,
    entities: &[String],
) -> Result<EntityEmbeddingTable, PipelineError> {
    let pos = VectorSet::from_text(&read_file(&cfg.out_path(POS_MODEL_FILE))?)?;
    Ok(match cfg.mode {
        WalkStrategy::TrueWalks => {
            let neg = VectorSet::from_text(&read_file(&cfg.out_path(NEG_MODEL_FILE))?)?;
            fuse::combine(&pos, &neg, entities, FusionStrategy::Concat)?
        }
        _ => fuse::single(&pos, entities)?,
    })
}

pub fn load_embeddings(cfg: &PipelineConfig) -> Result<EntityEmbeddingTable, PipelineError> {
    let text = read_file(&cfg.out_path(EMBEDDINGS_FILE))?;
    let strategy = match cfg.mode {
        WalkStrategy::TrueWalks => FusionStrategy::Concat,
        _ => FusionStrategy::Single,
    };
    Ok(EntityEmbeddingTable::from_text(
        &text,
        strategy,
        cfg.embed.dim,
    )?)
}

/// Ranks the second entity of every label-1 pair among all table entities.
pub fn rank_stage(
    table: &EntityEmbeddingTable,
    pairs: &PairDataset,
) -> Result<RankingMetrics, PipelineError> {
    let positives: Vec<(String, String)> = pairs
        .positives()
        .map(|p| (p.a.clone(), p.b.clone()))
        .collect();
    Ok(eval::rank_eval(table, &positives, table.entities())?)
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub corpus: WalkCorpus,
    pub models: Models,
    pub table: EntityEmbeddingTable,
    pub report: EvalReport,
    pub similarity_csv: String,
}

/// Walks, trains and fuses on an in-memory graph.
pub fn embed_graph(
    kg: &KnowledgeGraph,
    cfg: &PipelineConfig,
) -> Result<(WalkCorpus, Models, EntityEmbeddingTable), PipelineError> {
    let corpus = walk_stage(kg, cfg)?;
    let models = train_stage(&corpus, cfg)?;
    let table = fuse_stage(&models, &entities(kg))?;
    Ok((corpus, models, table))
}

/// All stages on an in-memory graph. In polarity-aware mode the
/// positive-only baseline is evaluated on the same splits and compared.
pub fn run_in_memory(
    kg: &KnowledgeGraph,
    pairs: &PairDataset,
    cfg: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    let (corpus, models, table) = embed_graph(kg, cfg)?;
    let per_split = eval::classify(&table, pairs, &cfg.eval, cfg.exec())?;
    let ranking = rank_stage(&table, pairs)?;
    let mut report = EvalReport::new(per_split, Some(ranking));
    if cfg.mode == WalkStrategy::TrueWalks {
        let baseline_cfg = PipelineConfig {
            mode: WalkStrategy::PositiveOnly,
            ..cfg.clone()
        };
        let (_, _, baseline) = embed_graph(kg, &baseline_cfg)?;
        let base_splits = eval::classify(&baseline, pairs, &cfg.eval, cfg.exec())?;
        report.compare(mode_name(WalkStrategy::PositiveOnly), &base_splits)?;
    }
    let similarity_csv = eval::export_similarity_distribution(&table, pairs)?;
    Ok(PipelineRun {
        corpus,
        models,
        table,
        report,
        similarity_csv,
    })
}

/// Runs every stage from the configured files and writes all artifacts.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let kg = load_graph(cfg)?;
    let pairs = load_pairs(cfg)?;
    let run = run_in_memory(&kg, &pairs, cfg)?;
    write_artifact(cfg, "walk", CORPUS_FILE, &run.corpus.to_text())?;
    for (name, text) in run.models.files() {
        write_artifact(cfg, "train", name, &text)?;
    }
    write_artifact(cfg, "fuse", EMBEDDINGS_FILE, &run.table.to_text())?;
    write_artifact(cfg, "classify", REPORT_FILE, &run.report.to_json())?;
    write_artifact(cfg, "rank", SIMILARITY_FILE, &run.similarity_csv)?;
    Ok(run)
}

/// Generates a synthetic graph and writes its three input files plus a
/// summary. Returns the summary line.
pub fn synth_stage(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    let out = synth::gen_kg(&cfg.synth)?;
    write_artifact(cfg, "synth", ONTOLOGY_FILE, &out.ontology_text())?;
    write_artifact(cfg, "synth", ANNOTATIONS_FILE, &out.annotations_text())?;
    write_artifact(cfg, "synth", PAIRS_FILE, &out.pairs_text())?;
    let summary = out.summary.to_string();
    write_artifact(cfg, "synth", SUMMARY_FILE, &format!("{summary}\n"))?;
    Ok(summary)
}

pub fn ranking_json(m: &RankingMetrics) -> String {
    serde_json::to_string_pretty(m).expect("ranking serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn config_text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("seed", "7").unwrap();
        cfg.set("eval.max_depths", "2,none").unwrap();
        cfg.set("mode", "merged_polarity").unwrap();
        cfg.set("ontology", "a.nt").unwrap();
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.walk.seed, 7);
        assert_eq!(back.eval.max_depths, vec![Some(2), None]);
    }

    #[test]
    fn bad_keys_and_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("walk.nope", "1").is_err());
        assert!(cfg.set("embed.dim", "ten").is_err());
        assert!(cfg.set("mode", "other").is_err());
        assert!(PipelineConfig::from_text("no equals sign").is_err());
        let e = cfg.set("embed.order_aware", "maybe").unwrap_err();
        assert!(e.to_string().starts_with("config: embed.order_aware:"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            out: "elsewhere".into(),
            ..Default::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig {
            seed: 1,
            ..Default::default()
        };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn fused_dimension_is_sum_of_halves() {
        let kg = fixtures::reverse_inheritance();
        let cfg = PipelineConfig::default();
        let (_, _, table) = embed_graph(&kg, &cfg).unwrap();
        assert_eq!(table.dim(), 200);
        assert_eq!((table.dim_pos, table.dim_neg), (100, 100));
        let base = PipelineConfig {
            mode: WalkStrategy::PositiveOnly,
            ..Default::default()
        };
        assert_eq!(embed_graph(&kg, &base).unwrap().2.dim(), 100);
    }
}
