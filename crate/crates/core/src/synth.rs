//! Synthetic ontology-rich graphs with a planted negative-statement signal.
//!
//! Entities are partitioned into groups of `group_size`. Every member of a
//! group is negatively annotated with the group's signature class, so two
//! members share the signature's whole subclass cone in their negative
//! closure. Related (label 1) pairs are drawn inside a group with
//! probability `signal`; every other pair, of either label, is drawn inside
//! a group with probability [`BACKGROUND_SHARE`]. Positive annotations are
//! drawn independently of the groups, so a model that only sees positive
//! statements has nothing to learn from.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::ingest::{
    self, AnnotationRecord, IngestError, Pair, PairDataset, PairLabel, TermStatement,
};
use crate::kg::{KnowledgeGraph, Polarity, Term, RDFS_SUBCLASS_OF};
use crate::par;

pub const NS: &str = "http://example.org/synth/";
pub const HAS_FUNCTION: &str = "http://example.org/synth/hasFunction";
/// Probability that a pair not planted by the signal falls inside a group.
pub const BACKGROUND_SHARE: f64 = 0.05;
/// Extra random subclass edges, as a fraction of tree edges.
pub const EXTRA_EDGE_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synthetic config: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub branching: usize,
    pub depth: usize,
    pub n_entities: usize,
    pub pos_per_entity: usize,
    pub neg_per_entity: usize,
    pub n_pairs: usize,
    pub signal: f64,
    pub group_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            branching: 4,
            depth: 4,
            n_entities: 60,
            pos_per_entity: 3,
            neg_per_entity: 3,
            n_pairs: 200,
            signal: 0.9,
            group_size: 6,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Classes in a complete tree of the configured shape, root included.
    pub fn n_classes(&self) -> usize {
        (0..=self.depth).map(|l| self.branching.pow(l as u32)).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Infeasible(m.to_string()));
        if self.branching == 0 || self.depth == 0 || self.n_entities < 2 || self.group_size < 2 {
            return bad("branching, depth >= 1; n_entities, group_size >= 2");
        }
        if self.pos_per_entity == 0 || self.neg_per_entity == 0 || self.n_pairs < 2 {
            return bad("annotation counts >= 1 and n_pairs >= 2");
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return bad("signal must lie in [0, 1]");
        }
        if self.pos_per_entity + self.neg_per_entity > self.n_classes() - 1 {
            return bad("more annotations per entity than non-root classes");
        }
        if self.n_pairs > self.n_entities * (self.n_entities - 1) / 2 {
            return bad("more pairs than distinct entity pairs");
        }
        if self.n_entities.div_ceil(self.group_size) > self.n_classes() - 1 {
            return bad("more groups than non-root classes");
        }
        Ok(())
    }
}

/// Table-shaped summary of a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub classes: usize,
    pub instances: usize,
    pub positive_statements: usize,
    pub negative_statements: usize,
    pub pairs: usize,
}

impl std::fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "classes={} instances={} positive_statements={} negative_statements={} pairs={}",
            self.classes,
            self.instances,
            self.positive_statements,
            self.negative_statements,
            self.pairs
        )
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub ontology: Vec<TermStatement>,
    pub annotations: Vec<AnnotationRecord>,
    pub pairs: PairDataset,
    pub kg: KnowledgeGraph,
    /// Group index of each entity, in entity order.
    pub groups: Vec<usize>,
    pub summary: SynthSummary,
}

impl SynthOutput {
    pub fn ontology_text(&self) -> String {
        ingest::write_ntriples(&self.ontology)
    }

    pub fn annotations_text(&self) -> String {
        ingest::write_annotations(&self.annotations)
    }

    pub fn pairs_text(&self) -> String {
        ingest::write_pairs(&self.pairs)
    }

    /// Whether a pair was planted inside one group.
    pub fn same_group(&self, a: &str, b: &str) -> bool {
        match (entity_index(a), entity_index(b)) {
            (Some(i), Some(j)) => self.groups[i] == self.groups[j],
            _ => false,
        }
    }
}

pub fn class_iri(i: usize) -> String {
    format!("{NS}C{i}")
}

pub fn entity_iri(i: usize) -> String {
    format!("{NS}E{i}")
}

fn entity_index(iri: &str) -> Option<usize> {
    iri.strip_prefix(NS)?.strip_prefix('E')?.parse().ok()
}

struct Hierarchy {
    /// Class ids per level.
    levels: Vec<Vec<usize>>,
    /// (child, parent) subclass edges.
    edges: Vec<(usize, usize)>,
    children: Vec<Vec<usize>>,
}

impl Hierarchy {
    fn tree(branching: usize, depth: usize) -> Self {
        let mut levels = vec![vec![0]];
        let mut edges = Vec::new();
        let mut next = 1;
        for _ in 0..depth {
            let mut level = Vec::new();
            for &parent in levels.last().unwrap() {
                for _ in 0..branching {
                    edges.push((next, parent));
                    level.push(next);
                    next += 1;
                }
            }
            levels.push(level);
        }
        let mut h = Hierarchy {
            levels,
            edges,
            children: vec![Vec::new(); next],
        };
        h.index();
        h
    }

    fn index(&mut self) {
        self.children.iter_mut().for_each(Vec::clear);
        for &(c, p) in &self.edges {
            self.children[p].push(c);
        }
    }

    fn n(&self) -> usize {
        self.children.len()
    }

    fn level_of(&self, class: usize) -> usize {
        self.levels.iter().position(|l| l.contains(&class)).unwrap()
    }

    /// Adds edges from a class to a random class on a shallower level, which
    /// keeps the hierarchy acyclic.
    fn add_extra_edges(&mut self, rng: &mut impl Rng) {
        let want = (self.edges.len() as f64 * EXTRA_EDGE_FRACTION).round() as usize;
        let mut existing: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        let mut added = 0;
        let mut tries = 0;
        while added < want && tries < 100 * (want + 1) {
            tries += 1;
            let child = rng.random_range(1..self.n());
            let lvl = self.level_of(child);
            let parent_level = rng.random_range(0..lvl);
            let parent = *self.levels[parent_level].choose(rng).unwrap();
            if existing.insert((child, parent)) {
                self.edges.push((child, parent));
                added += 1;
            }
        }
        self.index();
    }

    fn descendants(&self, class: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([class]);
        let mut stack = vec![class];
        while let Some(c) = stack.pop() {
            for &k in &self.children[c] {
                if seen.insert(k) {
                    stack.push(k);
                }
            }
        }
        seen
    }
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Generates a graph and a balanced pair dataset.
pub fn gen_kg(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let mut rng = par::stream_rng(cfg.seed, &[b"synth"]);
    let mut h = Hierarchy::tree(cfg.branching, cfg.depth);
    h.add_extra_edges(&mut rng);

    let n_groups = cfg.n_entities.div_ceil(cfg.group_size);
    let sig_level = (1..h.levels.len())
        .find(|&l| h.levels[l].len() >= n_groups)
        .ok_or_else(|| SynthError::Infeasible("no level holds one class per group".into()))?;
    let signatures: Vec<usize> = h.levels[sig_level]
        .choose_multiple(&mut rng, n_groups)
        .copied()
        .collect();
    let signature_cones: BTreeSet<usize> =
        signatures.iter().flat_map(|&s| h.descendants(s)).collect();
    let leaves: Vec<usize> = h.levels.last().unwrap().clone();
    let mut noise_pool: Vec<usize> = leaves
        .iter()
        .copied()
        .filter(|c| !signature_cones.contains(c))
        .collect();
    if noise_pool.len() < cfg.neg_per_entity {
        noise_pool = (1..h.n()).filter(|c| !signatures.contains(c)).collect();
    }

    let groups: Vec<usize> = (0..cfg.n_entities).map(|e| e / cfg.group_size).collect();
    let mut annotations = Vec::new();
    for e in 0..cfg.n_entities {
        let sig = signatures[groups[e]];
        let mut negs = vec![sig];
        let extra: Vec<usize> = noise_pool
            .choose_multiple(&mut rng, cfg.neg_per_entity)
            .copied()
            .filter(|c| *c != sig)
            .take(cfg.neg_per_entity - 1)
            .collect();
        negs.extend(extra);
        let neg_closure: BTreeSet<usize> = negs.iter().flat_map(|&c| h.descendants(c)).collect();
        let allowed: Vec<usize> = (1..h.n()).filter(|c| !neg_closure.contains(c)).collect();
        if allowed.len() < cfg.pos_per_entity {
            return Err(SynthError::Infeasible(
                "not enough classes outside the negative closure".into(),
            ));
        }
        let mut pos: Vec<usize> = allowed
            .choose_multiple(&mut rng, cfg.pos_per_entity)
            .copied()
            .collect();
        pos.sort_unstable();
        negs.sort_unstable();
        for (classes, polarity) in [(pos, Polarity::Positive), (negs, Polarity::Negative)] {
            for c in classes {
                annotations.push(AnnotationRecord {
                    entity: entity_iri(e),
                    property: HAS_FUNCTION.to_string(),
                    class: class_iri(c),
                    polarity,
                });
            }
        }
    }

    let pairs = draw_pairs(cfg, &groups, &mut rng)?;
    let mut ontology: Vec<TermStatement> = h
        .edges
        .iter()
        .map(|&(c, p)| TermStatement {
            subject: Term::Iri(class_iri(c)),
            predicate: RDFS_SUBCLASS_OF.to_string(),
            object: Term::Iri(class_iri(p)),
            polarity: Polarity::Positive,
        })
        .collect();
    ontology.sort();
    let (kg, _) = ingest::assemble_kg(&ontology, &annotations)?;
    let negative_statements = annotations
        .iter()
        .filter(|a| a.polarity.is_negative())
        .count();
    let summary = SynthSummary {
        classes: h.n(),
        instances: cfg.n_entities,
        positive_statements: annotations.len() - negative_statements,
        negative_statements,
        pairs: pairs.len(),
    };
    Ok(SynthOutput {
        ontology,
        annotations,
        pairs,
        kg,
        groups,
        summary,
    })
}

fn draw_pairs(
    cfg: &SynthConfig,
    groups: &[usize],
    rng: &mut impl Rng,
) -> Result<PairDataset, SynthError> {
    let n = cfg.n_entities;
    let mut within: Vec<(usize, usize)> = Vec::new();
    let mut across: Vec<(usize, usize)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if groups[a] == groups[b] {
                within.push((a, b));
            } else {
                across.push((a, b));
            }
        }
    }
    within.shuffle(rng);
    across.shuffle(rng);
    let n_pos = cfg.n_pairs / 2;
    let n_neg = cfg.n_pairs - n_pos;
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let take = |pool: &mut Vec<(usize, usize)>, used: &mut HashSet<(usize, usize)>| loop {
        let p = pool.pop()?;
        if used.insert(unordered(p.0, p.1)) {
            return Some(p);
        }
    };
    let labelled = (0..n_pos)
        .map(|_| (PairLabel::Positive, cfg.signal))
        .chain((0..n_neg).map(|_| (PairLabel::Negative, 0.0)));
    for (label, signal) in labelled {
        let p_within = signal + (1.0 - signal) * BACKGROUND_SHARE;
        let want_within = rng.random_bool(p_within.clamp(0.0, 1.0));
        let pair = if want_within {
            take(&mut within, &mut used).or_else(|| take(&mut across, &mut used))
        } else {
            take(&mut across, &mut used).or_else(|| take(&mut within, &mut used))
        }
        .ok_or_else(|| SynthError::Infeasible("ran out of distinct pairs".into()))?;
        let (a, b) = if rng.random_bool(0.5) {
            pair
        } else {
            (pair.1, pair.0)
        };
        pairs.push(Pair {
            a: entity_iri(a),
            b: entity_iri(b),
            label,
        });
    }
    pairs.shuffle(rng);
    Ok(PairDataset::new(pairs)?)
}

/// `n` reified negative assertions in N-Triples, one cluster per statement,
/// over synthetic entity and class IRIs.
pub fn reified_negatives(n: usize, seed: u64) -> (String, Vec<TermStatement>) {
    let mut rng = par::stream_rng(seed, &[b"reified"]);
    let mut seen = HashSet::new();
    let mut statements = Vec::with_capacity(n);
    while statements.len() < n {
        let e = rng.random_range(0..n.max(1) * 2);
        let c = rng.random_range(0..n.max(1) * 2);
        if seen.insert((e, c)) {
            statements.push(TermStatement {
                subject: Term::Iri(entity_iri(e)),
                predicate: HAS_FUNCTION.to_string(),
                object: Term::Iri(class_iri(c)),
                polarity: Polarity::Negative,
            });
        }
    }
    (ingest::write_ntriples(&statements), statements)
}

/// Size of the intersection of two entities' negative closures.
pub fn shared_negative_closure(kg: &KnowledgeGraph, a: &str, b: &str) -> usize {
    let closure = |e: &str| {
        kg.iri_id(e)
            .map(|id| kg.entailed_annotations(id, Polarity::Negative))
            .unwrap_or_default()
    };
    closure(a).intersection(&closure(b)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            branching: 3,
            depth: 3,
            n_entities: 40,
            n_pairs: 80,
            ..Default::default()
        }
    }

    #[test]
    fn every_entity_has_both_polarities() {
        let out = gen_kg(&small()).unwrap();
        for e in 0..40 {
            let id = out.kg.iri_id(&entity_iri(e)).unwrap();
            let pos = out.kg.assertion_hops(id, Polarity::Positive).len();
            let neg = out.kg.assertion_hops(id, Polarity::Negative).len();
            assert_eq!((pos, neg), (3, 3));
        }
    }

    #[test]
    fn summary_matches_config() {
        let cfg = small();
        let out = gen_kg(&cfg).unwrap();
        assert_eq!(out.summary.classes, cfg.n_classes());
        assert_eq!(out.summary.instances, 40);
        assert_eq!(out.summary.positive_statements, 120);
        assert_eq!(out.summary.negative_statements, 120);
        assert_eq!(out.pairs.len(), 80);
        assert_eq!(out.pairs.positives().count(), 40);
        assert_eq!(out.kg.root_entities().len(), 40);
    }

    #[test]
    fn infeasible_configs() {
        let too_many = SynthConfig {
            branching: 1,
            depth: 2,
            ..small()
        };
        assert!(matches!(gen_kg(&too_many), Err(SynthError::Infeasible(_))));
        let bad_signal = SynthConfig {
            signal: 1.5,
            ..small()
        };
        assert!(gen_kg(&bad_signal).is_err());
        let pairs = SynthConfig {
            n_entities: 4,
            n_pairs: 10,
            ..small()
        };
        assert!(gen_kg(&pairs).is_err());
    }

    #[test]
    fn hierarchy_stays_acyclic() {
        let out = gen_kg(&small()).unwrap();
        let kg = &out.kg;
        for i in 0..small().n_classes() {
            let id = kg.iri_id(&class_iri(i)).unwrap();
            let up = kg.subclass_closure([id], true);
            let down = kg.subclass_closure([id], false);
            assert_eq!(up.intersection(&down).count(), 1);
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_kg(&small()).unwrap();
        let b = gen_kg(&small()).unwrap();
        assert_eq!(a.ontology_text(), b.ontology_text());
        assert_eq!(a.annotations_text(), b.annotations_text());
        assert_eq!(a.pairs_text(), b.pairs_text());
    }

    #[test]
    fn reified_file_folds_back() {
        let (text, st) = reified_negatives(25, 3);
        let triples = ingest::parse_ntriples(text.as_bytes()).unwrap();
        assert_eq!(triples.len(), 100);
        assert_eq!(ingest::fold_negative_assertions(&triples).unwrap(), st);
    }
}
