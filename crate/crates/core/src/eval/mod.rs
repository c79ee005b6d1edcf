//! Evaluation protocols: pair classification with Monte Carlo
//! cross-validation and a random forest, and similarity ranking.

pub mod forest;
pub mod metrics;
pub mod ranking;
pub mod wilcoxon;

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

use crate::fuse::EntityEmbeddingTable;
use crate::ingest::PairDataset;
use crate::par::{self, Exec};

pub use forest::{ForestParams, RandomForestModel};
pub use metrics::{median, prf_weighted, prf_with_mode, Prf, PrfMode};
pub use ranking::{cosine, export_similarity_distribution, rank_eval, RankingMetrics};
pub use wilcoxon::wilcoxon_signed_rank;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("entity {0} has no embedding")]
    MissingEntity(String),
    #[error("vector length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Wilcoxon(#[from] wilcoxon::WilcoxonError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub mccv_runs: usize,
    pub test_fraction: f64,
    pub n_estimators: Vec<usize>,
    pub max_depths: Vec<Option<usize>>,
    pub alpha: f64,
    pub prf_mode: PrfMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mccv_runs: 30,
            test_fraction: 0.3,
            n_estimators: vec![50, 100, 200],
            max_depths: vec![Some(2), Some(4), Some(6), None],
            alpha: 0.05,
            prf_mode: PrfMode::PositiveClass,
            seed: 42,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.mccv_runs == 0 {
            return Err(EvalError::Config("mccv_runs must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(EvalError::Config("test_fraction must lie in (0, 1)".into()));
        }
        if self.n_estimators.is_empty() || self.max_depths.is_empty() {
            return Err(EvalError::Config("empty hyperparameter grid".into()));
        }
        Ok(())
    }

    /// Hyperparameter combinations in grid order.
    pub fn grid(&self) -> Vec<ForestParams> {
        self.n_estimators
            .iter()
            .flat_map(|&n| {
                self.max_depths
                    .iter()
                    .map(move |&d| ForestParams::new(n, d))
            })
            .collect()
    }
}

/// Elementwise product, the pair representation fed to the classifier.
pub fn hadamard_pair(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Length(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn test_size(n: usize, beta: f64) -> usize {
    ((beta * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// `runs` independent uniform train/test partitions of `0..n`, each drawn
/// from its own stream. Index lists are sorted.
pub fn mccv_splits(n: usize, runs: usize, beta: f64, seed: u64) -> Vec<Split> {
    assert!(n >= 2, "MCCV needs at least two samples");
    let k = test_size(n, beta);
    (0..runs)
        .map(|m| {
            let mut rng = par::stream_rng(seed, &[b"mccv", &(m as u64).to_le_bytes()]);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut test = idx[..k].to_vec();
            let mut train = idx[k..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            Split { train, test }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    pub split: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Pair features and labels, in dataset order.
pub fn pair_features(
    table: &EntityEmbeddingTable,
    dataset: &PairDataset,
) -> Result<(Vec<Vec<f64>>, Vec<u8>), EvalError> {
    let get = |e: &str| {
        table
            .get(e)
            .ok_or_else(|| EvalError::MissingEntity(e.to_string()))
    };
    let x = dataset
        .pairs
        .iter()
        .map(|p| hadamard_pair(get(&p.a)?, get(&p.b)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((x, dataset.labels()))
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Picks the grid combination with the best weighted F on an inner 80/20
/// split of the training rows. Ties keep the earlier combination.
pub fn select_params(x: &[Vec<f64>], y: &[u8], cfg: &EvalConfig, seed: u64) -> ForestParams {
    let grid = cfg.grid();
    let single_class = y.iter().all(|&l| l == y[0]);
    if grid.len() == 1 || x.len() < 5 || single_class {
        return grid[0];
    }
    let inner = &mccv_splits(x.len(), 1, 0.2, seed)[0];
    let (xt, yt) = (subset(x, &inner.train), subset(y, &inner.train));
    let (xv, yv) = (subset(x, &inner.test), subset(y, &inner.test));
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for params in grid {
        let model = RandomForestModel::fit(&xt, &yt, params, seed, Exec::Sequential);
        let f = prf_weighted(&model.predict(&xv), &yv).f;
        if f > best.0 {
            best = (f, params);
        }
    }
    best.1
}

/// Runs the MCCV protocol. Splits are evaluated in parallel when allowed;
/// each split owns its seeds, so results do not depend on scheduling.
pub fn classify(
    table: &EntityEmbeddingTable,
    dataset: &PairDataset,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<Vec<SplitResult>, EvalError> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(EvalError::Config(
            "classification needs at least 2 pairs".into(),
        ));
    }
    let (x, y) = pair_features(table, dataset)?;
    let splits = mccv_splits(x.len(), cfg.mccv_runs, cfg.test_fraction, cfg.seed);
    let results = par::map_range(exec, splits.len(), |m| {
        let split = &splits[m];
        let seed = par::splitmix64(cfg.seed ^ (m as u64 + 1).wrapping_mul(0x9e37_79b9));
        let (xt, yt) = (subset(&x, &split.train), subset(&y, &split.train));
        let params = select_params(&xt, &yt, cfg, seed);
        let model = RandomForestModel::fit(&xt, &yt, params, seed ^ 1, Exec::Sequential);
        let pred = model.predict(&subset(&x, &split.test));
        let prf = prf_with_mode(&pred, &subset(&y, &split.test), cfg.prf_mode);
        let result = SplitResult {
            split: m,
            precision: prf.precision,
            recall: prf.recall,
            f: prf.f,
            n_estimators: params.n_estimators,
            max_depth: params.max_depth,
            train_size: split.train.len(),
            test_size: split.test.len(),
        };
        (result, model.constant.is_some())
    });
    let constant = results.iter().filter(|(_, c)| *c).count();
    if constant > 0 {
        warn!(
            "{constant} of {} splits had single-class training data; used constant classifiers",
            results.len()
        );
    }
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

/// Serialized evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision_median: Option<f64>,
    pub recall_median: Option<f64>,
    pub f_median: Option<f64>,
    pub per_split: Vec<SplitResult>,
    pub ranking: Option<RankingMetrics>,
    /// baseline -> metric -> p-value
    pub wilcoxon: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EvalReport {
    pub fn new(per_split: Vec<SplitResult>, ranking: Option<RankingMetrics>) -> Self {
        let med = |f: fn(&SplitResult) -> f64| {
            (!per_split.is_empty()).then(|| median(&per_split.iter().map(f).collect::<Vec<_>>()))
        };
        EvalReport {
            precision_median: med(|s| s.precision),
            recall_median: med(|s| s.recall),
            f_median: med(|s| s.f),
            per_split,
            ranking,
            wilcoxon: BTreeMap::new(),
        }
    }

    /// Paired tests of this report's per-split metrics against a baseline
    /// evaluated on the same splits.
    pub fn compare(&mut self, name: &str, baseline: &[SplitResult]) -> Result<(), EvalError> {
        let col =
            |v: &[SplitResult], f: fn(&SplitResult) -> f64| v.iter().map(f).collect::<Vec<_>>();
        let mut tests = BTreeMap::new();
        type Column = (&'static str, fn(&SplitResult) -> f64);
        let metrics: [Column; 3] = [
            ("precision", |s| s.precision),
            ("recall", |s| s.recall),
            ("f", |s| s.f),
        ];
        for (metric, f) in metrics {
            let p = wilcoxon_signed_rank(&col(&self.per_split, f), &col(baseline, f))?;
            tests.insert(metric.to_string(), p);
        }
        self.wilcoxon.insert(name.to_string(), tests);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
