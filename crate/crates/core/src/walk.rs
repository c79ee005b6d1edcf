//! Polarity-aware random walk generation.
//!
//! Each root entity yields two walk sets. The first hop of a walk fixes its
//! status: a positive assertion starts a positive walk, which follows
//! subclass edges towards superclasses; a negative assertion starts a
//! negative walk, which follows subclass edges towards subclasses.
//!
//! Walks are sampled depth-first with a visited memory keyed by
//! `(edge, node, token position)` that persists across the attempts made for
//! one `(entity, status)` pair, so exhausted branches are not re-entered.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::{EdgeToken, Hop, KnowledgeGraph, NodeId, Polarity};
use crate::par::{self, Exec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WalkError {
    #[error("max_walks must be at least 1")]
    NoWalks,
    #[error("max_depth must be at least 2, got {0}")]
    Depth(usize),
    #[error("line {line}: {message}")]
    CorpusFormat { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    /// Upper bound on walks per entity and status.
    pub max_walks: usize,
    /// Depth bound; a walk holds at most `max_depth - 1` hops.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            max_walks: 100,
            max_depth: 4,
            seed: 42,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.max_walks == 0 {
            return Err(WalkError::NoWalks);
        }
        if self.max_depth < 2 {
            return Err(WalkError::Depth(self.max_depth));
        }
        Ok(())
    }

    pub fn max_tokens(&self) -> usize {
        2 * (self.max_depth - 1) + 1
    }
}

/// How negative statements are treated while walking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WalkStrategy {
    /// Separate positive and negative walks with direction flipping.
    #[default]
    TrueWalks,
    /// Positive walks only; negative statements are ignored.
    PositiveOnly,
    /// One walk set; negative statements are an ordinary, distinctly named
    /// predicate and subclass edges are always followed upwards.
    MergedPolarity,
}

/// Prefix marking a negated predicate in merged-polarity walks.
pub const NEGATED_PREFIX: &str = "NOT:";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Walk {
    /// `[root, edge, node, edge, node, ...]`
    pub tokens: Vec<String>,
    pub status: Polarity,
}

impl Walk {
    pub fn root(&self) -> &str {
        &self.tokens[0]
    }

    pub fn hops(&self) -> usize {
        self.tokens.len() / 2
    }

    pub fn edge_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().skip(1).step_by(2).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkCorpus {
    pub positive: Vec<Walk>,
    pub negative: Vec<Walk>,
}

impl WalkCorpus {
    pub fn walks(&self, status: Polarity) -> &[Walk] {
        match status {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Walks grouped by their root token.
    pub fn entity_walks<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a Walk> + 'a {
        self.positive
            .iter()
            .chain(&self.negative)
            .filter(move |w| w.root() == entity)
    }

    /// One walk per line, `P|` or `N|` prefix, tokens space separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (tag, walks) in [("P", &self.positive), ("N", &self.negative)] {
            for w in walks {
                writeln!(out, "{tag}|{}", w.tokens.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, WalkError> {
        let mut corpus = WalkCorpus::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (status, body) = match line.split_once('|') {
                Some(("P", b)) => (Polarity::Positive, b),
                Some(("N", b)) => (Polarity::Negative, b),
                _ => {
                    return Err(WalkError::CorpusFormat {
                        line: i + 1,
                        message: "expected P| or N| prefix".into(),
                    })
                }
            };
            let tokens: Vec<String> = body.split(' ').map(str::to_string).collect();
            if tokens.iter().any(String::is_empty) || tokens.len().is_multiple_of(2) {
                return Err(WalkError::CorpusFormat {
                    line: i + 1,
                    message: "walk must hold an odd number of non-empty tokens".into(),
                });
            }
            let walk = Walk { tokens, status };
            match status {
                Polarity::Positive => corpus.positive.push(walk),
                Polarity::Negative => corpus.negative.push(walk),
            }
        }
        Ok(corpus)
    }
}

/// Precomputed, deterministically ordered neighbour lists.
pub struct WalkIndex<'g> {
    kg: &'g KnowledgeGraph,
    first: [Vec<Vec<Hop>>; 2],
    next: [Vec<Vec<Hop>>; 2],
    merged_first: Vec<Vec<Hop>>,
    merged_next: Vec<Vec<Hop>>,
}

fn slot(p: Polarity) -> usize {
    match p {
        Polarity::Positive => 0,
        Polarity::Negative => 1,
    }
}

impl<'g> WalkIndex<'g> {
    pub fn new(kg: &'g KnowledgeGraph) -> Self {
        let n = kg.node_count();
        let ids = || (0..n as u32).map(NodeId);
        let first: [Vec<Vec<Hop>>; 2] = [Polarity::Positive, Polarity::Negative]
            .map(|p| ids().map(|v| kg.assertion_hops(v, p)).collect());
        let next: [Vec<Vec<Hop>>; 2] = [Polarity::Positive, Polarity::Negative]
            .map(|p| ids().map(|v| kg.neighbors(v, p)).collect());
        let merge = |a: &[Hop], b: &[Hop]| -> Vec<Hop> {
            let mut v: Vec<Hop> = a.iter().chain(b).copied().collect();
            v.sort_by_cached_key(|h| (merged_edge_token(kg, h.edge, h.polarity), kg.token(h.node)));
            v
        };
        let merged_first = ids()
            .map(|v| merge(&first[0][v.0 as usize], &first[1][v.0 as usize]))
            .collect();
        // upward subclass traversal plus assertions of both polarities
        let merged_next = ids()
            .map(|v| {
                let neg_assertions: Vec<Hop> = kg
                    .neighbors(v, Polarity::Negative)
                    .into_iter()
                    .filter(|h| h.polarity == Polarity::Negative)
                    .filter(|h| matches!(h.edge, EdgeToken::Predicate(_)))
                    .collect();
                merge(&next[0][v.0 as usize], &neg_assertions)
            })
            .collect();
        WalkIndex {
            kg,
            first,
            next,
            merged_first,
            merged_next,
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.kg
    }

    fn first_hops(&self, node: NodeId, status: Polarity) -> &[Hop] {
        &self.first[slot(status)][node.0 as usize]
    }

    fn next_hops(&self, node: NodeId, status: Polarity) -> &[Hop] {
        &self.next[slot(status)][node.0 as usize]
    }
}

fn merged_edge_token(kg: &KnowledgeGraph, edge: EdgeToken, polarity: Polarity) -> String {
    let base = kg.edge_token_str(edge);
    if polarity.is_negative() {
        format!("{NEGATED_PREFIX}{base}")
    } else {
        base
    }
}

type VisitKey = (EdgeToken, Polarity, NodeId, usize);

struct Sampler<'a, F, N>
where
    F: Fn(NodeId) -> &'a [Hop],
    N: Fn(NodeId) -> &'a [Hop],
{
    first: F,
    next: N,
    visited: HashSet<VisitKey>,
}

impl<'a, F, N> Sampler<'a, F, N>
where
    F: Fn(NodeId) -> &'a [Hop],
    N: Fn(NodeId) -> &'a [Hop],
{
    /// One walk attempt. A walk that reaches a node with no legal neighbour
    /// ends there; one that only meets already-visited neighbours is a prefix
    /// of earlier walks and is reported as aborted.
    fn attempt(&mut self, root: NodeId, depth_bound: usize, rng: &mut ChaCha8Rng) -> Attempt {
        let mut hops: Vec<Hop> = Vec::new();
        let mut current = root;
        let mut depth = 1;
        while depth < depth_bound {
            let last = depth + 1 == depth_bound;
            // position of the edge token this hop would occupy
            let pos = 2 * hops.len() + 1;
            let pool = if hops.is_empty() {
                (self.first)(current)
            } else {
                (self.next)(current)
            };
            let candidates: Vec<&Hop> = pool
                .iter()
                .filter(|h| !self.visited.contains(&(h.edge, h.polarity, h.node, pos)))
                .collect();
            if candidates.is_empty() {
                let Some(prev) = hops.last() else {
                    return Attempt::Exhausted;
                };
                self.visited
                    .insert((prev.edge, prev.polarity, prev.node, pos - 2));
                if !pool.is_empty() {
                    return Attempt::Aborted;
                }
                break;
            }
            let hop = *candidates[rng.random_range(0..candidates.len())];
            if last {
                self.visited.insert((hop.edge, hop.polarity, hop.node, pos));
            }
            hops.push(hop);
            current = hop.node;
            depth += 1;
        }
        Attempt::Walk(hops)
    }
}

enum Attempt {
    Walk(Vec<Hop>),
    Aborted,
    /// No unvisited first hop remains; later attempts cannot differ.
    Exhausted,
}

fn render(kg: &KnowledgeGraph, root: NodeId, hops: &[Hop], status: Polarity, merged: bool) -> Walk {
    let mut tokens = Vec::with_capacity(2 * hops.len() + 1);
    tokens.push(kg.token(root));
    for h in hops {
        tokens.push(if merged {
            merged_edge_token(kg, h.edge, h.polarity)
        } else {
            kg.edge_token_str(h.edge)
        });
        tokens.push(kg.token(h.node));
    }
    Walk { tokens, status }
}

#[allow(clippy::too_many_arguments)]
fn sample_walks<'a>(
    index: &WalkIndex<'_>,
    root: NodeId,
    status: Polarity,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
    first: impl Fn(NodeId) -> &'a [Hop],
    next: impl Fn(NodeId) -> &'a [Hop],
    merged: bool,
) -> Vec<Walk> {
    let mut sampler = Sampler {
        first,
        next,
        visited: HashSet::new(),
    };
    let mut walks = Vec::new();
    let mut failures = 0;
    while walks.len() < cfg.max_walks && failures < 10 * cfg.max_walks {
        match sampler.attempt(root, cfg.max_depth, rng) {
            Attempt::Walk(hops) => {
                failures = 0;
                walks.push(render(index.graph(), root, &hops, status, merged));
            }
            Attempt::Aborted => failures += 1,
            Attempt::Exhausted => break,
        }
    }
    let mut seen = HashSet::new();
    walks.retain(|w| seen.insert(w.tokens.clone()));
    walks
}

/// Per-`(entity, status)` PRNG stream.
pub fn walk_rng(kg: &KnowledgeGraph, entity: NodeId, status: Polarity, seed: u64) -> ChaCha8Rng {
    par::stream_rng(
        seed,
        &[kg.token(entity).as_bytes(), status.tag().as_bytes()],
    )
}

/// Samples up to `max_walks` distinct walks of one status rooted at `entity`.
pub fn get_random_walks(
    index: &WalkIndex<'_>,
    entity: NodeId,
    status: Polarity,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Walk> {
    sample_walks(
        index,
        entity,
        status,
        cfg,
        rng,
        |n| index.first_hops(n, status),
        |n| index.next_hops(n, status),
        false,
    )
}

/// Positive and negative walks for one entity, each from its own stream.
pub fn get_truewalks(
    index: &WalkIndex<'_>,
    entity: NodeId,
    cfg: &WalkConfig,
) -> (Vec<Walk>, Vec<Walk>) {
    let kg = index.graph();
    let mut pos_rng = walk_rng(kg, entity, Polarity::Positive, cfg.seed);
    let mut neg_rng = walk_rng(kg, entity, Polarity::Negative, cfg.seed);
    (
        get_random_walks(index, entity, Polarity::Positive, cfg, &mut pos_rng),
        get_random_walks(index, entity, Polarity::Negative, cfg, &mut neg_rng),
    )
}

/// Merged-polarity walks: first hop over every assertion, negated
/// predicates renamed, subclass edges always followed upwards.
pub fn get_merged_walks(index: &WalkIndex<'_>, entity: NodeId, cfg: &WalkConfig) -> Vec<Walk> {
    let mut rng = par::stream_rng(
        cfg.seed,
        &[index.graph().token(entity).as_bytes(), b"merged"],
    );
    sample_walks(
        index,
        entity,
        Polarity::Positive,
        cfg,
        &mut rng,
        |n| &index.merged_first[n.0 as usize],
        |n| &index.merged_next[n.0 as usize],
        true,
    )
}

/// Walks for every root entity, merged in root-id order.
pub fn build_corpus(
    kg: &KnowledgeGraph,
    cfg: &WalkConfig,
    strategy: WalkStrategy,
    exec: Exec,
) -> Result<WalkCorpus, WalkError> {
    cfg.validate()?;
    let index = WalkIndex::new(kg);
    let roots: Vec<NodeId> = kg.root_entities().iter().copied().collect();
    let per_entity = par::map(exec, &roots, |&root| match strategy {
        WalkStrategy::TrueWalks => get_truewalks(&index, root, cfg),
        WalkStrategy::PositiveOnly => {
            let mut rng = walk_rng(kg, root, Polarity::Positive, cfg.seed);
            (
                get_random_walks(&index, root, Polarity::Positive, cfg, &mut rng),
                Vec::new(),
            )
        }
        WalkStrategy::MergedPolarity => (get_merged_walks(&index, root, cfg), Vec::new()),
    });
    let mut corpus = WalkCorpus::default();
    for (pos, neg) in per_entity {
        corpus.positive.extend(pos);
        corpus.negative.extend(neg);
    }
    Ok(corpus)
}

/// Every walk of 1 to `max_depth - 1` hops that obeys the direction rules,
/// ignoring visited memory and the walk budget. Exponential; small graphs only.
pub fn enumerate_valid_walks(
    kg: &KnowledgeGraph,
    entity: NodeId,
    status: Polarity,
    max_depth: usize,
) -> BTreeSet<Vec<String>> {
    fn dfs(
        kg: &KnowledgeGraph,
        status: Polarity,
        node: NodeId,
        tokens: &mut Vec<String>,
        hops_left: usize,
        out: &mut BTreeSet<Vec<String>>,
    ) {
        if hops_left == 0 {
            return;
        }
        for h in kg.neighbors(node, status) {
            tokens.push(kg.edge_token_str(h.edge));
            tokens.push(kg.token(h.node));
            out.insert(tokens.clone());
            dfs(kg, status, h.node, tokens, hops_left - 1, out);
            tokens.truncate(tokens.len() - 2);
        }
    }

    let mut out = BTreeSet::new();
    let max_hops = max_depth.saturating_sub(1);
    if max_hops == 0 {
        return out;
    }
    let mut tokens = vec![kg.token(entity)];
    for h in kg.assertion_hops(entity, status) {
        tokens.push(kg.edge_token_str(h.edge));
        tokens.push(kg.token(h.node));
        out.insert(tokens.clone());
        dfs(kg, status, h.node, &mut tokens, max_hops - 1, &mut out);
        tokens.truncate(1);
    }
    out
}
