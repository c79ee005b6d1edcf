//! Similarity-based ranking of pair targets.

use std::fmt::Write as _;

use serde::Serialize;

use super::EvalError;
use crate::fuse::EntityEmbeddingTable;
use crate::ingest::PairDataset;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingMetrics {
    pub hits10: f64,
    pub hits100: f64,
    pub mean_rank: f64,
    pub auc: f64,
    /// True when some target tied with another candidate.
    pub degenerate: bool,
    pub pairs: usize,
    #[serde(skip)]
    pub ranks: Vec<usize>,
    #[serde(skip)]
    pub similarities: Vec<f64>,
}

fn lookup<'a>(table: &'a EntityEmbeddingTable, e: &str) -> Result<&'a [f64], EvalError> {
    table
        .get(e)
        .ok_or_else(|| EvalError::MissingEntity(e.to_string()))
}

/// Ranks each pair's second entity among `candidates` by cosine similarity
/// to the first.
///
/// Ranks count only strictly more similar candidates (ties resolve in the
/// target's favour). The AUC is the fraction of the other candidates the
/// target beats, counting ties as half, so it equals `(N - rank) / (N - 1)`
/// whenever there are no ties and 0.5 when every candidate ties.
pub fn rank_eval(
    table: &EntityEmbeddingTable,
    pairs: &[(String, String)],
    candidates: &[String],
) -> Result<RankingMetrics, EvalError> {
    if candidates.len() < 2 {
        return Err(EvalError::Config(
            "ranking needs at least 2 candidates".into(),
        ));
    }
    let cand_vecs: Vec<(&str, &[f64])> = candidates
        .iter()
        .map(|c| lookup(table, c).map(|v| (c.as_str(), v)))
        .collect::<Result<_, _>>()?;
    let mut ranks = Vec::with_capacity(pairs.len());
    let mut aucs = Vec::with_capacity(pairs.len());
    let mut sims = Vec::with_capacity(pairs.len());
    let mut degenerate = false;
    for (a, b) in pairs {
        let va = lookup(table, a)?;
        let target = cosine(va, lookup(table, b)?);
        let mut greater = 0usize;
        let mut ties = 0usize;
        let mut others = 0usize;
        for &(c, vc) in &cand_vecs {
            if c == a || c == b {
                continue;
            }
            others += 1;
            let s = cosine(va, vc);
            if s > target {
                greater += 1;
            } else if s == target {
                ties += 1;
            }
        }
        degenerate |= ties > 0;
        ranks.push(1 + greater);
        sims.push(target);
        aucs.push(if others == 0 {
            1.0
        } else {
            (others as f64 - greater as f64 - ties as f64 / 2.0) / others as f64
        });
    }
    let n = pairs.len().max(1) as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RankingMetrics {
        hits10: hits(10),
        hits100: hits(100),
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        auc: aucs.iter().sum::<f64>() / n,
        degenerate,
        pairs: pairs.len(),
        ranks,
        similarities: sims,
    })
}

/// CSV rows `entityA,entityB,label,cosine`, one per pair.
pub fn export_similarity_distribution(
    table: &EntityEmbeddingTable,
    dataset: &PairDataset,
) -> Result<String, EvalError> {
    let mut out = String::from("entityA,entityB,label,cosine\n");
    for p in &dataset.pairs {
        let s = cosine(lookup(table, &p.a)?, lookup(table, &p.b)?);
        writeln!(out, "{},{},{},{}", p.a, p.b, p.label.as_u8(), s).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuse::FusionStrategy;

    fn table(rows: &[(&str, &[f64])]) -> EntityEmbeddingTable {
        let dim = rows[0].1.len();
        EntityEmbeddingTable::from_rows(
            rows.iter()
                .map(|(e, v)| (e.to_string(), v.to_vec()))
                .collect(),
            FusionStrategy::Single,
            dim,
            0,
        )
        .unwrap()
    }

    fn s(x: &str) -> String {
        x.to_string()
    }

    #[test]
    fn unique_nearest_neighbour() {
        let t = table(&[
            ("a", &[1.0, 0.0]),
            ("b", &[0.9, 0.1]),
            ("c", &[0.0, 1.0]),
            ("d", &[-1.0, 0.0]),
        ]);
        let cands: Vec<String> = t.entities().to_vec();
        let m = rank_eval(&t, &[(s("a"), s("b"))], &cands).unwrap();
        assert_eq!((m.hits10, m.mean_rank, m.auc), (1.0, 1.0, 1.0));
        assert!(!m.degenerate);
    }

    #[test]
    fn identical_embeddings_are_degenerate() {
        let t = table(&[
            ("a", &[1.0, 1.0]),
            ("b", &[1.0, 1.0]),
            ("c", &[1.0, 1.0]),
            ("d", &[1.0, 1.0]),
        ]);
        let cands = t.entities().to_vec();
        let m = rank_eval(&t, &[(s("a"), s("b")), (s("c"), s("d"))], &cands).unwrap();
        assert_eq!(m.auc, 0.5);
        assert_eq!(m.mean_rank, 1.0);
        assert!(m.degenerate);
    }

    #[test]
    fn missing_entity() {
        let t = table(&[("a", &[1.0]), ("b", &[2.0])]);
        let cands = t.entities().to_vec();
        assert!(matches!(
            rank_eval(&t, &[(s("a"), s("zz"))], &cands),
            Err(EvalError::MissingEntity(_))
        ));
        assert!(rank_eval(&t, &[], &[s("a")]).is_err());
    }

    #[test]
    fn zero_vectors_have_zero_cosine() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
